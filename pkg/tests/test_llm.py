import json

import pytest

from featloom.config import TaskConfig
from featloom.errors import ProviderError, TranscriptExhausted
from featloom.llm import (
    FeatureJson,
    ReplayProvider,
    ReplayTranscript,
    canonical_feature_name,
    extract_fenced_code,
    find_json_array,
    generate_features_contextual,
    generate_features_direct,
    parse_feature_json,
    translate_to_featurescript,
)
from featloom.knowledge import Chunk

from conftest import feature_array_response, write_replay_file

TASK = TaskConfig(description="classify stress", modalities="gsr")
SCHEMA = ("ecg", "gsr")


def test_replay_serves_in_order_and_exhausts():
    transcript = ReplayTranscript(["one", "two", "three"])
    provider = ReplayProvider(transcript)
    got = [provider.complete("s", "u", 0.7, 100) for _ in range(3)]
    assert got == ["one", "two", "three"]
    with pytest.raises(TranscriptExhausted):
        provider.complete("s", "u", 0.7, 100)


def test_replay_audit_logs_request_beside_response():
    provider = ReplayProvider(ReplayTranscript(["answer"]))
    provider.complete("sys", "user text", 0.5, 64)
    assert provider.audit[0]["user"] == "user text"
    assert provider.audit[0]["response"] == "answer"


def test_replay_from_file(tmp_path):
    path = write_replay_file(tmp_path / "t.ndjson", ["a", "b"])
    provider = ReplayProvider.from_file(path)
    assert provider.complete("s", "u", 0.7, 10) == "a"
    assert provider.transcript.cursor == 1


def test_parse_feature_json_minimal():
    text = '[{"name":"gsr_scr_rate","description":"d","rationale":"r","channels":["gsr"]}]'
    features, diags = parse_feature_json(text)
    assert not diags
    assert features == [FeatureJson("gsr_scr_rate", "d", "r", ("gsr",))]


def test_parse_feature_json_drops_incomplete_elements():
    text = json.dumps(
        [
            {"name": "ok_one", "description": "d", "rationale": "r", "channels": []},
            {"name": "missing_rationale", "description": "d", "channels": []},
            {"name": "ok_two", "description": "d", "rationale": "r", "channels": ["gsr"]},
        ]
    )
    features, diags = parse_feature_json(text)
    assert [f.name for f in features] == ["ok_one", "ok_two"]
    assert any("rationale" in d for d in diags)


def test_parse_feature_json_scans_past_prose():
    text = "Sure! Here are features [not json] and then:\n" + feature_array_response(
        [("gsr_x", "d", "r", ["gsr"])]
    )
    features, diags = parse_feature_json(text)
    assert [f.name for f in features] == ["gsr_x"]


def test_parse_feature_json_no_array():
    features, diags = parse_feature_json("no structured output here")
    assert features == [] and diags


def test_canonical_names():
    assert canonical_feature_name("GSR Peak-Rate") == "gsr_peak_rate"
    assert canonical_feature_name("2nd harmonic") == "f_2nd_harmonic"
    assert canonical_feature_name("__weird__") == "weird"
    assert canonical_feature_name("!!!") is None


def test_find_json_array_fenced():
    text = "```json\n[1, 2, 3]\n```"
    assert find_json_array(text) == [1, 2, 3]


def test_generate_direct_budget_and_overflow():
    five = feature_array_response([(f"gsr_f{i}", "d", "r", ["gsr"]) for i in range(5)])
    provider = ReplayProvider(ReplayTranscript([five]))
    features, diags = generate_features_direct(TASK, None, 3, provider, SCHEMA)
    assert [f.name for f in features] == ["gsr_f0", "gsr_f1", "gsr_f2"]
    assert any("overflow" in d for d in diags)


def test_generate_direct_prose_only():
    provider = ReplayProvider(ReplayTranscript(["I could not produce JSON, sorry."]))
    features, diags = generate_features_direct(TASK, None, 3, provider, SCHEMA)
    assert features == [] and diags


def test_generate_direct_unknown_channels_filtered():
    resp = feature_array_response([("gsr_x", "d", "r", ["gsr", "ppg"])])
    provider = ReplayProvider(ReplayTranscript([resp]))
    features, diags = generate_features_direct(TASK, None, 1, provider, SCHEMA)
    assert features[0].channels == ("gsr",)
    assert any("unknown channel" in d for d in diags)


def _chunk(text, ordinal=0):
    import numpy as np

    return Chunk("doc.txt", ordinal, text, np.zeros(4))


def test_generate_contextual_two_calls_of_m():
    r1 = feature_array_response([("gsr_a", "d", "r", ["gsr"]), ("gsr_b", "d", "r", ["gsr"])])
    r2 = feature_array_response([("ecg_c", "d", "r", ["ecg"]), ("ecg_d", "d", "r", ["ecg"])])
    provider = ReplayProvider(ReplayTranscript([r1, r2]))
    features, _ = generate_features_contextual(TASK, [_chunk("about scr peaks")], None, 2, provider, SCHEMA)
    assert [f.name for f in features] == ["gsr_a", "gsr_b", "ecg_c", "ecg_d"]
    assert provider.transcript.cursor == 2


def test_generate_contextual_embeds_chunk_verbatim():
    resp = feature_array_response([("gsr_a", "d", "r", ["gsr"])])
    provider = ReplayProvider(ReplayTranscript([resp, resp]))
    chunk_text = "tonic skin conductance rises under sustained stress"
    generate_features_contextual(TASK, [_chunk(chunk_text)], None, 1, provider, SCHEMA)
    assert chunk_text in provider.audit[0]["user"]
    assert chunk_text in provider.audit[1]["user"]


def test_generate_contextual_degraded_without_chunks():
    resp = feature_array_response([(f"gsr_f{i}", "d", "r", ["gsr"]) for i in range(4)])
    provider = ReplayProvider(ReplayTranscript([resp]))
    features, diags = generate_features_contextual(TASK, [], None, 2, provider, SCHEMA)
    assert len(features) == 4  # one call budgeted 2m
    assert provider.transcript.cursor == 1
    assert any("empty knowledge base" in d for d in diags)


def test_translate_extracts_single_fence():
    code = "fn gsr_mean(gsr) -> scalar { mean(gsr) }"
    provider = ReplayProvider(ReplayTranscript([f"Sure:\n```\n{code}\n```"]))
    text, diags = translate_to_featurescript(
        [FeatureJson("gsr_mean", "d", "r", ("gsr",))], "gsr: 4 Hz", "grammar", provider, "catalog"
    )
    assert text == code
    assert not diags


def test_translate_concatenates_fences_in_order():
    provider = ReplayProvider(
        ReplayTranscript(["```\nfn gsr_a(gsr) -> scalar { mean(gsr) }\n```\nand\n```\nfn gsr_b(gsr) -> scalar { max(gsr) }\n```"])
    )
    text, _ = translate_to_featurescript(
        [FeatureJson("gsr_a", "d", "r", ("gsr",))], "gsr: 4 Hz", "g", provider, "c"
    )
    assert text.index("gsr_a") < text.index("gsr_b")


def test_translate_no_fence_reports():
    provider = ReplayProvider(ReplayTranscript(["no code here"]))
    text, diags = translate_to_featurescript(
        [FeatureJson("gsr_a", "d", "r", ("gsr",))], "gsr: 4 Hz", "g", provider, "c"
    )
    assert text == "" and diags


def test_translate_requires_features():
    provider = ReplayProvider(ReplayTranscript(["x"]))
    with pytest.raises(ProviderError):
        translate_to_featurescript([], "gsr", "g", provider, "c")


def test_extract_fenced_code_with_language_tag():
    assert extract_fenced_code("```featurescript\ncode here\n```") == "code here"
