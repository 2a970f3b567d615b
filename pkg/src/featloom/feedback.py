"""Build the iteration feedback prompt from the best model's validation results."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .evaluator import ConfusionMatrix, EvalReport

logger = logging.getLogger(__name__)

CANDIDATE_NAME_CAP = 400


def per_class_accuracy(cm: ConfusionMatrix):
    """(label, accuracy) sorted ascending by accuracy then label.

    Classes absent from validation are returned separately, not as zeros.
    """
    rows = cm.counts.sum(axis=1)
    present = []
    absent = []
    for i, label in enumerate(cm.labels):
        if rows[i] == 0:
            absent.append(label)
        else:
            present.append((label, float(cm.counts[i, i] / rows[i])))
    present.sort(key=lambda item: (item[1], item[0]))
    return present, absent


def _binary_f1(tp: float, fp: float, fn: float) -> float:
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom > 0 else 0.0


def pairwise_f1(cm: ConfusionMatrix):
    """Macro F1 per unordered label pair on the 2x2 restricted submatrix,
    sorted ascending so the hardest pairs come first.

    Pairs whose restricted rows are both empty are skipped and returned
    in the second list.
    """
    scored = []
    skipped = []
    n = len(cm.labels)
    for i in range(n):
        for j in range(i + 1, n):
            sub = cm.counts[np.ix_((i, j), (i, j))]
            if sub[0].sum() == 0 and sub[1].sum() == 0:
                skipped.append((cm.labels[i], cm.labels[j]))
                continue
            f1_i = _binary_f1(sub[0, 0], sub[1, 0], sub[0, 1])
            f1_j = _binary_f1(sub[1, 1], sub[0, 1], sub[1, 0])
            scored.append(((cm.labels[i], cm.labels[j]), (f1_i + f1_j) / 2.0))
    scored.sort(key=lambda item: (item[1], item[0]))
    if skipped:
        logger.warning("pairwise_f1: skipped %d pair(s) absent from validation", len(skipped))
    return scored, skipped


@dataclass(frozen=True)
class FeedbackPrompt:
    accuracy: float | None
    class_accuracies: tuple
    pair_f1s: tuple
    selected: tuple
    candidates: tuple[str, ...]
    text: str


def build_feedback_prompt(report: EvalReport | None, candidates, selected_descriptors) -> FeedbackPrompt:
    """Render the fixed-order feedback sections deterministically.

    `candidates` is the full candidate descriptor mapping (name -> descriptor);
    `selected_descriptors` are the descriptors of the current best set.
    """
    lines = ["== Validation feedback on the current best feature set =="]
    class_accs: tuple = ()
    pair_scores: tuple = ()
    if report is None:
        lines.append("No model has been evaluated yet; this is the first generation pass.")
    else:
        lines.append(f"Validation accuracy: {report.accuracy:.4f}")
        present, absent = per_class_accuracy(report.cm)
        class_accs = tuple(present)
        lines.append("Per-class validation accuracy, worst first:")
        for label, acc in present:
            lines.append(f"  - {label}: {acc:.4f}")
        if absent:
            lines.append(f"  (absent from validation: {', '.join(absent)})")
        scored, _ = pairwise_f1(report.cm)
        pair_scores = tuple(scored)
        lines.append("Class-pair F1, hardest pairs first:")
        for (a, b), f1 in scored:
            lines.append(f"  - ({a}, {b}): {f1:.4f}")

    if selected_descriptors:
        lines.append("Currently selected features (keep what works, refine what does not):")
        for desc in selected_descriptors:
            rationale = desc.rationale or desc.description or "no rationale recorded"
            lines.append(f"  - {desc.name}: {rationale}")
    else:
        lines.append("No features have been selected yet.")

    names = sorted(candidates)
    shown = names[:CANDIDATE_NAME_CAP]
    lines.append(f"Existing candidate features, do not regenerate these ({len(names)} total):")
    lines.append("  " + (", ".join(shown) if shown else "(none)"))
    if len(names) > len(shown):
        lines.append(f"  ... and {len(names) - len(shown)} more")
    lines.append(
        "Propose new features as a JSON array of objects with keys "
        '"name", "description", "rationale", "channels".'
    )
    text = "\n".join(lines) + "\n"
    return FeedbackPrompt(
        accuracy=None if report is None else report.accuracy,
        class_accuracies=class_accs,
        pair_f1s=pair_scores,
        selected=tuple(d.name for d in selected_descriptors),
        candidates=tuple(names),
        text=text,
    )
