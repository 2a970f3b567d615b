"""Prompt templates for generation, retrieval-guided generation, and translation.

Templates are versioned so a recorded transcript pins the template it was
produced against.
"""

from __future__ import annotations

TEMPLATE_VERSION = "1"

SYSTEM_GENERATION = (
    "You are an expert in physiological signal processing and feature "
    "engineering for wearable biosignals. Respond with a JSON array only."
)

SYSTEM_TRANSLATION = (
    "You translate feature descriptions into FeatureScript, a small "
    "expression language. Respond with fenced code blocks only."
)

SYSTEM_KEYWORDS = (
    "You summarize machine-learning task descriptions into retrieval "
    "keywords. Respond with a JSON array of strings only."
)

_FEATURE_SCHEMA = (
    'Return a JSON array; each element is an object with keys "name" '
    '(snake_case identifier), "description", "rationale", and "channels" '
    "(list of channel identifiers used)."
)


def _task_block(task) -> str:
    return (
        f"Task description: {task.description}\n"
        f"Data collection protocol: {task.protocol}\n"
        f"Sensor modalities: {task.modalities}\n"
        f"Subject characteristics: {task.subjects}\n"
    )


def render_direct_prompt(task, feedback_text: str, m: int, schema_desc: str) -> str:
    parts = [
        _task_block(task),
        f"Available channels: {schema_desc}",
    ]
    if feedback_text:
        parts.append(feedback_text)
    parts.append(
        f"Generate exactly {m} new candidate feature(s) for this task. "
        f"{_FEATURE_SCHEMA}"
    )
    return "\n\n".join(parts)


def render_contextual_prompt(task, chunks, feedback_text: str, m: int, schema_desc: str,
                             call_index: int, call_total: int) -> str:
    parts = [
        _task_block(task),
        f"Available channels: {schema_desc}",
    ]
    if chunks:
        excerpt_lines = ["Relevant excerpts from the expert knowledge base:"]
        for chunk in chunks:
            excerpt_lines.append(f"[source: {chunk.doc_id}#{chunk.ordinal}]")
            excerpt_lines.append(chunk.text)
        parts.append("\n".join(excerpt_lines))
    if feedback_text:
        parts.append(feedback_text)
    parts.append(
        f"Knowledge-guided generation {call_index} of {call_total}: using the "
        f"excerpts above, generate exactly {m} new candidate feature(s). "
        f"{_FEATURE_SCHEMA}"
    )
    return "\n\n".join(parts)


def render_translation_prompt(features_json: str, schema_desc: str, grammar_text: str,
                              catalog_text: str) -> str:
    return (
        "Translate each feature description below into one FeatureScript "
        "function.\n\n"
        f"FeatureScript grammar:\n{grammar_text}\n"
        f"Builtin catalog:\n{catalog_text}\n\n"
        f"Channels (name: sample rate in Hz): {schema_desc}\n\n"
        "Rules: the function name must start with a channel identifier; each "
        "parameter name must start with the channel it consumes; prefer "
        "scalar return kinds; pass sample rates as numeric literals.\n\n"
        f"Features to translate:\n{features_json}\n\n"
        "Reply with the functions inside fenced code blocks."
    )


def render_keywords_prompt(task) -> str:
    return (
        _task_block(task)
        + "\nGenerate a JSON array of 5 to 12 short keywords for retrieving "
        "relevant research literature about this task."
    )
