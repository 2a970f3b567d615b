"""Run configuration: INI file sections with CLI-overridable keys."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass
class TaskConfig:
    description: str = ""
    protocol: str = ""
    modalities: str = ""
    subjects: str = ""


@dataclass
class RunConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    # [llm]
    provider: str = "replay"
    replay_file: str | None = None
    endpoint: str | None = None
    model: str | None = None
    max_tokens: int = 2048
    # [kb]
    corpus_dir: str | None = None
    index_path: str | None = None
    chunk_target: int = 512
    chunk_overlap: int = 64
    top_chunks: int = 5
    embed_dim: int = 256
    update_corpus: bool = False
    # [run]
    dataset: str | None = None
    run_dir: str = "featloom_run"
    stride: int = 5
    iterations: int = 10
    seed: int = 17
    validation_fraction: float = 0.2
    mi_bins: int = 10
    # [selection]
    target_grid: tuple[int, ...] = (8, 16, 32, 64)

    def validate(self) -> None:
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.mi_bins < 2:
            raise ConfigError(f"mi_bins must be >= 2, got {self.mi_bins}")
        if self.chunk_overlap >= self.chunk_target:
            raise ConfigError("chunk_overlap must be smaller than chunk_target")
        if self.provider not in ("replay", "http"):
            raise ConfigError(f"unknown provider {self.provider!r} (expected replay or http)")
        if self.provider == "replay" and not self.replay_file:
            raise ConfigError("replay provider needs replay_file")
        if self.provider == "http" and (not self.endpoint or not self.model):
            raise ConfigError("http provider needs endpoint and model")
        if not self.target_grid:
            raise ConfigError("selection grid must not be empty")


def _get(parser, section, key, fallback=None):
    if parser.has_option(section, key):
        return parser.get(section, key)
    return fallback


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from exc

    cfg = RunConfig()
    cfg.task = TaskConfig(
        description=_get(parser, "task", "description", ""),
        protocol=_get(parser, "task", "protocol", ""),
        modalities=_get(parser, "task", "modalities", ""),
        subjects=_get(parser, "task", "subjects", ""),
    )
    try:
        cfg.provider = _get(parser, "llm", "provider", cfg.provider)
        cfg.replay_file = _get(parser, "llm", "replay_file", cfg.replay_file)
        cfg.endpoint = _get(parser, "llm", "endpoint", cfg.endpoint)
        cfg.model = _get(parser, "llm", "model", cfg.model)
        cfg.max_tokens = int(_get(parser, "llm", "max_tokens", cfg.max_tokens))

        cfg.corpus_dir = _get(parser, "kb", "corpus_dir", cfg.corpus_dir)
        cfg.index_path = _get(parser, "kb", "index_path", cfg.index_path)
        cfg.chunk_target = int(_get(parser, "kb", "chunk_target", cfg.chunk_target))
        cfg.chunk_overlap = int(_get(parser, "kb", "chunk_overlap", cfg.chunk_overlap))
        cfg.top_chunks = int(_get(parser, "kb", "top_chunks", cfg.top_chunks))
        cfg.embed_dim = int(_get(parser, "kb", "embed_dim", cfg.embed_dim))
        cfg.update_corpus = str(_get(parser, "kb", "update_corpus", cfg.update_corpus)).lower() in ("1", "true", "yes")

        cfg.dataset = _get(parser, "run", "dataset", cfg.dataset)
        cfg.run_dir = _get(parser, "run", "run_dir", cfg.run_dir)
        cfg.stride = int(_get(parser, "run", "stride", cfg.stride))
        cfg.iterations = int(_get(parser, "run", "iterations", cfg.iterations))
        cfg.seed = int(_get(parser, "run", "seed", cfg.seed))
        cfg.validation_fraction = float(_get(parser, "run", "validation_fraction", cfg.validation_fraction))
        cfg.mi_bins = int(_get(parser, "run", "mi_bins", cfg.mi_bins))

        grid_text = _get(parser, "selection", "grid")
        if grid_text:
            cfg.target_grid = tuple(sorted(int(x) for x in grid_text.replace(",", " ").split()))
    except ValueError as exc:
        raise ConfigError(f"bad value in config {path}: {exc}") from exc
    return cfg
