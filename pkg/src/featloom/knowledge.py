"""Local expert-knowledge store: chunking, hashing embeddings, exact retrieval.

The reference embedder is a seeded signed feature-hashing bag of words, so
index builds and queries are fully offline and bit-reproducible. Remote
embedding services plug in behind the same provider interface; remote corpus
fetching likewise stays behind CorpusSource with no shipped implementation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .errors import ConfigError, DataError, ProviderError

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[a-z0-9]+")

INDEX_MAGIC = b"FLKB"
INDEX_VERSION = 1

MIN_TAIL_WORDS = 32


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class CorpusSource(Protocol):
    """Yields (doc_id, text) pairs; remote fetchers would implement this."""

    def documents(self) -> Iterable[tuple[str, str]]: ...


class LocalDirectoryCorpus:
    """Plain-text corpus: every *.txt file in a directory, sorted by name."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def documents(self):
        if not self.directory.is_dir():
            raise DataError(f"corpus directory not found: {self.directory}")
        for path in sorted(self.directory.glob("*.txt")):
            yield path.name, path.read_text(encoding="utf-8")


class HashingEmbedder:
    """Signed feature-hashing bag of lowercased word unigrams."""

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.name = f"hashing-bow-{dim}-s{seed}"
        self._key = str(seed).encode("ascii")

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in _WORD_RE.findall(text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
            idx = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[idx] += sign
        return vec


@dataclass(frozen=True, eq=False)
class Chunk:
    doc_id: str
    ordinal: int
    text: str
    embedding: np.ndarray


def chunk_document(text: str, target: int = 512, overlap: int = 64) -> list[str]:
    """Whitespace-token windows of `target` words with `overlap` carried over.

    A final short window is kept when it has at least MIN_TAIL_WORDS words,
    otherwise merged into the previous chunk (or kept as-is when it is the
    only content).
    """
    if overlap >= target:
        raise ConfigError(f"chunk overlap {overlap} must be smaller than target {target}")
    words = text.split()
    if not words:
        raise DataError("cannot chunk an empty document")
    step = target - overlap
    spans: list[tuple[int, int]] = []
    start = 0
    while True:
        end = min(start + target, len(words))
        spans.append((start, end))
        if end == len(words):
            break
        start += step
    if len(spans) > 1 and (spans[-1][1] - spans[-1][0]) < MIN_TAIL_WORDS:
        tail = spans.pop()
        prev = spans.pop()
        spans.append((prev[0], tail[1]))
    return [" ".join(words[lo:hi]) for lo, hi in spans]


def embed_chunk(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Provider output, L2-normalized to unit length."""
    vec = np.asarray(provider.embed(text), dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise ProviderError("embedding has no usable magnitude")
    return vec / norm


@dataclass(eq=False)
class KnowledgeIndex:
    dim: int
    embedder_name: str
    chunks: list[Chunk]

    def __len__(self) -> int:
        return len(self.chunks)

    def save(self, path) -> None:
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<II", INDEX_VERSION, self.dim))
            name_bytes = self.embedder_name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", len(self.chunks)))
            for chunk in self.chunks:
                doc = chunk.doc_id.encode("utf-8")
                text = chunk.text.encode("utf-8")
                fh.write(struct.pack("<I", len(doc)))
                fh.write(doc)
                fh.write(struct.pack("<I", chunk.ordinal))
                fh.write(struct.pack("<I", len(text)))
                fh.write(text)
                fh.write(chunk.embedding.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "KnowledgeIndex":
        path = Path(path)
        data = path.read_bytes()
        if data[:4] != INDEX_MAGIC:
            raise DataError(f"{path.name}: not a knowledge index file")
        off = 4
        version, dim = struct.unpack_from("<II", data, off)
        off += 8
        if version != INDEX_VERSION:
            raise DataError(f"{path.name}: unsupported index version {version}")
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        embedder_name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        chunks = []
        for _ in range(count):
            (doc_len,) = struct.unpack_from("<I", data, off)
            off += 4
            doc_id = data[off : off + doc_len].decode("utf-8")
            off += doc_len
            (ordinal,) = struct.unpack_from("<I", data, off)
            off += 4
            (text_len,) = struct.unpack_from("<I", data, off)
            off += 4
            text = data[off : off + text_len].decode("utf-8")
            off += text_len
            emb = np.frombuffer(data, dtype="<f8", count=dim, offset=off).copy()
            off += dim * 8
            chunks.append(Chunk(doc_id, ordinal, text, emb))
        return cls(dim, embedder_name, chunks)

    def write_manifest(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for chunk in self.chunks:
                fh.write(
                    json.dumps(
                        {"doc": chunk.doc_id, "ordinal": chunk.ordinal, "words": len(chunk.text.split())}
                    )
                    + "\n"
                )


def build_index(corpus: CorpusSource, embedder: EmbeddingProvider,
                target: int = 512, overlap: int = 64) -> KnowledgeIndex:
    chunks: list[Chunk] = []
    for doc_id, text in corpus.documents():
        if not text.strip():
            logger.warning("skipping empty corpus document %s", doc_id)
            continue
        for ordinal, chunk_text in enumerate(chunk_document(text, target, overlap)):
            try:
                emb = embed_chunk(chunk_text, embedder)
            except ProviderError:
                logger.warning("skipping unembeddable chunk %s#%d", doc_id, ordinal)
                continue
            chunks.append(Chunk(doc_id, ordinal, chunk_text, emb))
    return KnowledgeIndex(embedder.dim, embedder.name, chunks)


def query_top_chunks(query_text: str, index: KnowledgeIndex, embedder: EmbeddingProvider,
                     top: int = 5) -> list[Chunk]:
    """Exact cosine scan, descending; ties broken by (doc id, ordinal)."""
    if not index.chunks:
        logger.warning("query against an empty knowledge index")
        return []
    q = embed_chunk(query_text, embedder)
    scored = [(float(np.dot(chunk.embedding, q)), chunk) for chunk in index.chunks]
    scored.sort(key=lambda item: (-item[0], item[1].doc_id, item[1].ordinal))
    return [chunk for _, chunk in scored[:top]]


def generate_keywords(task, provider) -> tuple[list[str], list[str]]:
    """One model call returning a JSON array of keywords.

    Parse failures fall back to the task-description words with a warning.
    """
    from .llm import find_json_array
    from .prompts import SYSTEM_KEYWORDS, render_keywords_prompt

    diagnostics: list[str] = []
    try:
        response = provider.complete(SYSTEM_KEYWORDS, render_keywords_prompt(task), 0.2, 512)
        array = find_json_array(response)
    except ProviderError as exc:
        diagnostics.append(f"keyword call failed: {exc}")
        array = None
    if array is not None and all(isinstance(x, str) for x in array) and array:
        return [x.strip() for x in array if x.strip()], diagnostics
    diagnostics.append("keyword response unusable; falling back to task description words")
    logger.warning("keyword generation fell back to task-description tokens")
    seen = []
    for word in _WORD_RE.findall(task.description.lower()):
        if word not in seen:
            seen.append(word)
    return seen[:12], diagnostics
