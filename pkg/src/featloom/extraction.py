"""Execute admitted functions over every window and verify output consistency.

A function either contributes a fixed set of finite columns for all windows
or is discarded entirely; discarded functions leave no trace in the table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset
from .dsl import FunctionDef, SCALAR, evaluate_function
from .filters import channel_prefix


@dataclass(frozen=True)
class FunctionOutcome:
    name: str
    status: str  # kept | discarded
    reason: str
    columns: tuple[str, ...]
    nonfinite_count: int

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "reason": self.reason,
            "columns": list(self.columns),
            "nonfinite_count": self.nonfinite_count,
        }


@dataclass
class ExtractionReport:
    outcomes: list[FunctionOutcome] = field(default_factory=list)

    def kept(self) -> list[FunctionOutcome]:
        return [o for o in self.outcomes if o.status == "kept"]

    def discarded(self) -> list[FunctionOutcome]:
        return [o for o in self.outcomes if o.status == "discarded"]


def bind_parameters(fn: FunctionDef, schema):
    """Map each parameter to the longest schema channel prefixing its name.

    Returns (binding, None) or (None, reason) when some parameter is unbindable.
    """
    binding: dict[str, str] = {}
    for param in fn.params:
        chan = channel_prefix(param, schema)
        if chan is None:
            return None, f"unbindable parameter {param!r}: no schema channel matches prefix"
        binding[param] = chan
    return binding, None


def verify_output_consistency(outputs):
    """Check one function's per-window outputs. Returns (kept, reason, nonfinite_count).

    Discards on: mixed output kinds, varying vector lengths, zero-length
    vectors, or any non-finite element.
    """
    nonfinite = 0
    kinds = set()
    lengths = set()
    for out in outputs:
        if isinstance(out, np.ndarray):
            kinds.add("vector")
            lengths.add(out.shape[0])
            nonfinite += int(np.count_nonzero(~np.isfinite(out)))
        else:
            kinds.add("scalar")
            if not math.isfinite(out):
                nonfinite += 1
    if len(kinds) > 1:
        return False, "mixed output kinds", nonfinite
    if kinds == {"vector"}:
        if 0 in lengths:
            return False, "zero-length vector", nonfinite
        if len(lengths) > 1:
            return False, f"varying lengths {sorted(lengths)}", nonfinite
    if nonfinite:
        return False, "non-finite output", nonfinite
    return True, "", 0


def extract_table(functions, dataset: Dataset):
    """Evaluate each admitted function on every window, in window order.

    Returns (values matrix, column names, ExtractionReport). Scalar functions
    produce one column named after the function; a vector function of fixed
    length L produces columns `name[0]` .. `name[L-1]`.
    """
    report = ExtractionReport()
    column_names: list[str] = []
    column_blocks: list[np.ndarray] = []
    n = len(dataset.windows)

    for fn in functions:
        binding, problem = bind_parameters(fn, dataset.channel_schema)
        if problem is not None:
            report.outcomes.append(FunctionOutcome(fn.name, "discarded", problem, (), 0))
            continue
        outputs = [evaluate_function(fn, w, binding) for w in dataset.windows]
        kept, reason, nonfinite = verify_output_consistency(outputs)
        if not kept:
            report.outcomes.append(FunctionOutcome(fn.name, "discarded", reason, (), nonfinite))
            continue
        if fn.return_kind == SCALAR:
            names = (fn.name,)
            block = np.asarray(outputs, dtype=np.float64).reshape(n, 1)
        else:
            width = outputs[0].shape[0]
            names = tuple(f"{fn.name}[{k}]" for k in range(width))
            block = np.vstack(outputs)
        report.outcomes.append(FunctionOutcome(fn.name, "kept", "", names, 0))
        column_names.extend(names)
        column_blocks.append(block)

    if column_blocks:
        values = np.hstack(column_blocks)
    else:
        values = np.zeros((n, 0))
    return values, tuple(column_names), report
