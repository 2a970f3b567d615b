import json

import numpy as np
import pytest

from featloom.core import ChannelSeries, Dataset, SignalWindow


def make_window(wid, label, channels):
    """channels: {name: (sample_rate, values)}"""
    return SignalWindow(
        id=wid,
        label=label,
        channels={
            name: ChannelSeries(name, fs, np.asarray(values, dtype=np.float64))
            for name, (fs, values) in channels.items()
        },
    )


def make_dataset(windows):
    return Dataset(tuple(windows))


@pytest.fixture
def toy_dataset():
    """Four windows, channels {acc, gsr}, labels {a, b}."""
    rng = np.random.default_rng(0)
    windows = []
    for i, label in enumerate(["a", "a", "b", "b"]):
        windows.append(
            make_window(
                f"w{i}",
                label,
                {
                    "gsr": (4.0, rng.normal(size=16)),
                    "acc": (8.0, rng.normal(size=32)),
                },
            )
        )
    return make_dataset(windows)


def write_replay_file(path, responses):
    with open(path, "w", encoding="utf-8") as fh:
        for response in responses:
            fh.write(json.dumps({"response": response}) + "\n")
    return path


def feature_array_response(features):
    """Render a feature list as the JSON-array reply the gateway expects."""
    return json.dumps(
        [
            {
                "name": name,
                "description": desc,
                "rationale": rationale,
                "channels": list(channels),
            }
            for name, desc, rationale, channels in features
        ]
    )


def fenced(code):
    return f"Here are the functions:\n```\n{code}\n```\n"
