"""Provider-agnostic language-model access and structured-output parsing.

Ships two providers: a deterministic replay provider for offline runs and a
chat-completions-style HTTP provider. All request/response traffic is kept
in an audit log so runs are reproducible and inspectable.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .errors import ProviderError, TranscriptExhausted

logger = logging.getLogger(__name__)

_IDENT_RE = re.compile(r"^[a-z_][a-z0-9_]*$")
_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)

GENERATION_TEMPERATURE = 0.7
TRANSLATION_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 2048


class GenerationProvider(Protocol):
    name: str

    def complete(self, system: str, user: str, temperature: float, max_tokens: int) -> str: ...


@dataclass
class ReplayTranscript:
    responses: list[str]
    cursor: int = 0

    @classmethod
    def from_file(cls, path) -> "ReplayTranscript":
        responses = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    responses.append(obj["response"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ProviderError(f"replay file {path}:{lineno}: bad line: {exc}") from exc
        return cls(responses)

    def next(self) -> str:
        if self.cursor >= len(self.responses):
            raise TranscriptExhausted(
                f"replay transcript exhausted after {len(self.responses)} response(s)"
            )
        response = self.responses[self.cursor]
        self.cursor += 1
        return response


class ReplayProvider:
    """Serves pre-recorded responses in order; logs each request beside the
    response it consumed so replays can be audited."""

    name = "replay"

    def __init__(self, transcript: ReplayTranscript):
        self.transcript = transcript
        self.audit: list[dict] = []

    @classmethod
    def from_file(cls, path) -> "ReplayProvider":
        return cls(ReplayTranscript.from_file(path))

    def complete(self, system: str, user: str, temperature: float, max_tokens: int) -> str:
        response = self.transcript.next()
        self.audit.append(
            {
                "provider": self.name,
                "system": system,
                "user": user,
                "temperature": temperature,
                "max_tokens": max_tokens,
                "response": response,
            }
        )
        return response


class HttpChatProvider:
    """Chat-completions-style HTTP provider.

    POSTs {model, messages, temperature, max_tokens} with a bearer token from
    the FEATLOOM_API_KEY environment variable. One retry with backoff on
    transient failures, then a typed error; an empty completion is an error,
    never an empty string.
    """

    API_KEY_ENV = "FEATLOOM_API_KEY"

    def __init__(self, endpoint: str, model: str, timeout: float = 60.0):
        if not endpoint or not model:
            raise ProviderError("http provider needs both an endpoint and a model name")
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.name = f"http:{model}"
        self.audit: list[dict] = []

    def _headers(self) -> dict:
        key = os.environ.get(self.API_KEY_ENV, "")
        if not key:
            raise ProviderError(f"environment variable {self.API_KEY_ENV} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, system: str, user: str, temperature: float, max_tokens: int) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        last_error = None
        for attempt in range(2):
            if attempt:
                time.sleep(1.5 * attempt)
            try:
                resp = requests.post(self.endpoint, json=body, headers=self._headers(), timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"transient HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ProviderError(f"provider HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed provider response: {exc}") from exc
            if not content:
                raise ProviderError("provider returned an empty completion")
            self.audit.append({"provider": self.name, "system": system, "user": user, "response": content})
            return content
        raise ProviderError(f"provider failed after retry: {last_error}")


@dataclass(frozen=True)
class FeatureJson:
    """A structured candidate feature as returned by the model."""

    name: str
    description: str
    rationale: str
    channels: tuple[str, ...]


def canonical_feature_name(raw: str) -> str | None:
    """Lowercase snake_case; None when nothing identifier-like remains."""
    name = re.sub(r"[^a-z0-9_]+", "_", raw.strip().lower()).strip("_")
    name = re.sub(r"_+", "_", name)
    if not name:
        return None
    if name[0].isdigit():
        name = "f_" + name
    return name if _IDENT_RE.match(name) else None


def find_json_array(text: str):
    """First well-formed JSON array in the text, fenced or bare, else None."""
    decoder = json.JSONDecoder()
    for pos, char in enumerate(text):
        if char != "[":
            continue
        try:
            value, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    return None


def parse_feature_json(text: str):
    """Extract FeatureJson entries from a model response.

    Never raises: malformed elements are dropped with per-element diagnostics
    and the count of returned descriptors never exceeds the array length.
    """
    diagnostics: list[str] = []
    array = find_json_array(text)
    if array is None:
        return [], ["no JSON array found in response"]
    features: list[FeatureJson] = []
    for i, item in enumerate(array):
        if not isinstance(item, dict):
            diagnostics.append(f"element {i}: not an object")
            continue
        missing = [k for k in ("name", "description", "rationale", "channels") if k not in item]
        if missing:
            diagnostics.append(f"element {i}: missing key(s) {missing}")
            continue
        name = canonical_feature_name(str(item["name"]))
        if name is None:
            diagnostics.append(f"element {i}: name {item['name']!r} is not identifier-like")
            continue
        channels = item["channels"]
        if not isinstance(channels, list) or not all(isinstance(c, str) for c in channels):
            diagnostics.append(f"element {i}: channels must be a list of strings")
            continue
        features.append(
            FeatureJson(
                name=name,
                description=str(item["description"]),
                rationale=str(item["rationale"]),
                channels=tuple(c.strip().lower() for c in channels),
            )
        )
    return features, diagnostics


def _restrict_channels(features, schema, diagnostics):
    """Keep only channels present in the schema; unknown ones are noted."""
    schema = set(schema)
    out = []
    for f in features:
        unknown = [c for c in f.channels if c not in schema]
        if unknown:
            diagnostics.append(f"{f.name}: dropping unknown channel(s) {unknown}")
        out.append(
            FeatureJson(f.name, f.description, f.rationale, tuple(c for c in f.channels if c in schema))
        )
    return out


def generate_features_direct(task, feedback, m: int, provider: GenerationProvider, schema,
                             max_tokens: int = DEFAULT_MAX_TOKENS):
    """Source 1: prompt the model directly for m features."""
    from .prompts import SYSTEM_GENERATION, render_direct_prompt

    if m < 1:
        raise ProviderError(f"stride must be >= 1, got {m}")
    feedback_text = feedback.text if feedback is not None else ""
    prompt = render_direct_prompt(task, feedback_text, m, ", ".join(schema))
    response = provider.complete(SYSTEM_GENERATION, prompt, GENERATION_TEMPERATURE, max_tokens)
    features, diagnostics = parse_feature_json(response)
    features = _restrict_channels(features, schema, diagnostics)
    if len(features) > m:
        diagnostics.append(f"response overflowed budget: {len(features)} > {m}, keeping the first {m}")
        features = features[:m]
    return features, diagnostics


def generate_features_contextual(task, chunks, feedback, m: int, provider: GenerationProvider,
                                 schema, max_tokens: int = DEFAULT_MAX_TOKENS):
    """Source 2: two retrieval-guided generations of m features each.

    With an empty knowledge base this degrades to a single direct-style call
    with the full 2m budget, with a warning.
    """
    from .prompts import SYSTEM_GENERATION, render_contextual_prompt

    if m < 1:
        raise ProviderError(f"stride must be >= 1, got {m}")
    feedback_text = feedback.text if feedback is not None else ""
    diagnostics: list[str] = []
    features: list[FeatureJson] = []
    if not chunks:
        logger.warning("contextual generation: empty knowledge base, degrading to a direct-style call")
        diagnostics.append("empty knowledge base: degraded to a single call")
        prompt = render_contextual_prompt(task, (), feedback_text, 2 * m, ", ".join(schema), 1, 1)
        response = provider.complete(SYSTEM_GENERATION, prompt, GENERATION_TEMPERATURE, max_tokens)
        parsed, diags = parse_feature_json(response)
        diagnostics.extend(diags)
        features = _restrict_channels(parsed, schema, diagnostics)[: 2 * m]
        return features, diagnostics

    for call_index in (1, 2):
        prompt = render_contextual_prompt(task, chunks, feedback_text, m, ", ".join(schema), call_index, 2)
        response = provider.complete(SYSTEM_GENERATION, prompt, GENERATION_TEMPERATURE, max_tokens)
        parsed, diags = parse_feature_json(response)
        diagnostics.extend(f"call {call_index}: {d}" for d in diags)
        parsed = _restrict_channels(parsed, schema, diagnostics)
        if len(parsed) > m:
            diagnostics.append(f"call {call_index}: overflow {len(parsed)} > {m}, truncated")
            parsed = parsed[:m]
        features.extend(parsed)
    return features, diagnostics


def extract_fenced_code(text: str):
    """Concatenate fenced code blocks in order; empty when none exist."""
    blocks = _FENCE_RE.findall(text)
    return "\n".join(block.strip("\n") for block in blocks)


def translate_to_featurescript(features, schema_desc: str, grammar_text: str,
                               provider: GenerationProvider, catalog_text: str,
                               max_tokens: int = DEFAULT_MAX_TOKENS):
    """Feature-to-code translation; validation is the filter chain's job."""
    from .prompts import SYSTEM_TRANSLATION, render_translation_prompt

    if not features:
        raise ProviderError("translation needs at least one feature")
    features_json = json.dumps(
        [
            {
                "name": f.name,
                "description": f.description,
                "rationale": f.rationale,
                "channels": list(f.channels),
            }
            for f in features
        ],
        indent=2,
    )
    prompt = render_translation_prompt(features_json, schema_desc, grammar_text, catalog_text)
    response = provider.complete(SYSTEM_TRANSLATION, prompt, TRANSLATION_TEMPERATURE, max_tokens)
    program_text = extract_fenced_code(response)
    diagnostics = [] if program_text else ["no fenced code block in translation response"]
    return program_text, diagnostics
