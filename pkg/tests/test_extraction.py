import numpy as np
import pytest

from featloom.dsl import parse_program
from featloom.extraction import bind_parameters, extract_table, verify_output_consistency

from conftest import make_dataset, make_window


def fns(text):
    program, diags = parse_program(text)
    assert not diags
    return list(program.functions)


def dataset_gsr(values_per_window, labels=("a", "a", "b", "b")):
    windows = [
        make_window(f"w{i}", labels[i], {"gsr": (4.0, vals)})
        for i, vals in enumerate(values_per_window)
    ]
    return make_dataset(windows)


def test_scalar_extraction_in_window_order():
    dataset = dataset_gsr([[1.0, 3.0], [2.0, 4.0], [0.0, 2.0], [5.0, 7.0]])
    values, names, report = extract_table(fns("fn gsr_mean(gsr) -> scalar { mean(gsr) }"), dataset)
    assert names == ("gsr_mean",)
    assert values.shape == (4, 1)
    assert list(values[:, 0]) == [2.0, 3.0, 1.0, 6.0]
    assert report.kept()[0].name == "gsr_mean"


def test_vector_function_fixed_width_columns():
    dataset = dataset_gsr([[1.0, 2.0, 4.0, 8.0]] * 4)
    values, names, report = extract_table(fns("fn gsr_d(gsr) -> vector { diff(gsr) }"), dataset)
    assert names == ("gsr_d[0]", "gsr_d[1]", "gsr_d[2]")
    assert values.shape == (4, 3)
    assert list(values[0]) == [1.0, 2.0, 4.0]


def test_nan_output_discards_whole_function():
    # second window is constant, so 1/std blows up there
    dataset = dataset_gsr([[1.0, 2.0], [3.0, 3.0], [1.0, 4.0], [2.0, 5.0]])
    functions = fns(
        "fn gsr_inv(gsr) -> scalar { 1 / std(gsr) }\n"
        "fn gsr_ok(gsr) -> scalar { mean(gsr) }"
    )
    values, names, report = extract_table(functions, dataset)
    assert names == ("gsr_ok",)
    outcome = report.discarded()[0]
    assert outcome.name == "gsr_inv"
    assert outcome.reason == "non-finite output"
    assert outcome.nonfinite_count == 1


def test_varying_vector_lengths_discarded():
    dataset = dataset_gsr([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0], [1.0, 2.0, 3.0]])
    values, names, report = extract_table(fns("fn gsr_d(gsr) -> vector { diff(gsr) }"), dataset)
    assert names == ()
    assert "varying lengths" in report.discarded()[0].reason


def test_unbindable_parameter_discarded():
    dataset = dataset_gsr([[1.0, 2.0]] * 4)
    functions = fns("fn gsr_bad(gsr, ppg_x) -> scalar { mean(gsr) + mean(ppg_x) }")
    values, names, report = extract_table(functions, dataset)
    assert names == ()
    assert "unbindable parameter" in report.discarded()[0].reason


def test_binding_longest_prefix():
    windows = [
        make_window(
            f"w{i}",
            "a" if i < 2 else "b",
            {"acc": (4.0, [1.0, 2.0]), "acc2": (4.0, [10.0, 20.0])},
        )
        for i in range(4)
    ]
    dataset = make_dataset(windows)
    fn = fns("fn acc2_mean(acc2_sig) -> scalar { mean(acc2_sig) }")[0]
    binding, problem = bind_parameters(fn, dataset.channel_schema)
    assert problem is None
    assert binding == {"acc2_sig": "acc2"}
    values, names, _ = extract_table([fn], dataset)
    assert list(values[:, 0]) == [15.0] * 4


def test_verify_consistency_cases():
    ok, reason, _ = verify_output_consistency([np.ones(3), np.ones(3), np.ones(3)])
    assert ok
    ok, reason, _ = verify_output_consistency([np.ones(3), np.ones(2)])
    assert not ok and "varying lengths" in reason
    ok, reason, _ = verify_output_consistency([np.zeros(0), np.zeros(0)])
    assert not ok and reason == "zero-length vector"
    ok, reason, nf = verify_output_consistency([1.0, float("-inf")])
    assert not ok and reason == "non-finite output" and nf == 1
    ok, reason, _ = verify_output_consistency([1.0, np.ones(2)])
    assert not ok and reason == "mixed output kinds"


def test_column_count_identity_and_order():
    dataset = dataset_gsr([[1.0, 2.0, 3.0]] * 4)
    functions = fns(
        "fn gsr_a(gsr) -> scalar { mean(gsr) }\n"
        "fn gsr_v(gsr) -> vector { diff(gsr) }\n"
        "fn gsr_b(gsr) -> scalar { max(gsr) }\n"
    )
    values, names, report = extract_table(functions, dataset)
    widths = sum(len(o.columns) for o in report.kept())
    assert len(names) == widths == values.shape[1]
    assert names == ("gsr_a", "gsr_v[0]", "gsr_v[1]", "gsr_b")
