"""Model accuracy, rule accuracy, rule fidelity and rule uncertainty.

Rule accuracy for class c treats the class rule as a binary classifier
(c versus not c)::

    RAcc_c = (m + n) / (M + N)

with M points of class c (m of them satisfy the rule) and N other points
(n of them do not). Headline rule accuracy averages RAcc_c over classes.
Fidelity is the same computation against the model's predictions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .model import ConceptDataPoint, ConceptPredictor, predict_many, stack
from .rules import DEFAULT_SATISFACTION_THRESHOLD, DnfRule, rule_mask


def class_rule_accuracy(satisfied: np.ndarray, targets: np.ndarray, c: int) -> float:
    """RAcc for one class from a satisfaction mask and the reference labels."""
    in_class = targets == c
    hits = np.count_nonzero(satisfied & in_class) + np.count_nonzero(~satisfied & ~in_class)
    return hits / len(targets)


def model_accuracy(predictor: ConceptPredictor, test_set: Sequence[ConceptDataPoint]) -> float:
    if not test_set:
        raise InvalidArgumentError("model accuracy needs a non-empty test set")
    X, y = stack(test_set)
    return float(np.mean(predict_many(predictor, X) == y))


def _per_class(
    rules: Mapping[int, DnfRule],
    X: np.ndarray,
    targets: np.ndarray,
    n_classes: int,
    threshold: float,
) -> tuple[list[float], list[int]]:
    scores, missing = [], []
    for c in range(n_classes):
        rule = rules.get(c)
        if rule is None:
            missing.append(c)
        scores.append(class_rule_accuracy(rule_mask(rule, X, threshold), targets, c))
    return scores, missing


def rule_accuracy_per_class(
    rules: Mapping[int, DnfRule],
    test_set: Sequence[ConceptDataPoint],
    n_classes: int,
    threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
) -> tuple[list[float], list[int]]:
    """Per-class RAcc and the classes that had no rule (scored as always-false)."""
    if not test_set:
        raise InvalidArgumentError("rule accuracy needs a non-empty test set")
    X, y = stack(test_set)
    return _per_class(rules, X, y, n_classes, threshold)


def rule_accuracy(rules, test_set, n_classes, threshold=DEFAULT_SATISFACTION_THRESHOLD) -> float:
    scores, _ = rule_accuracy_per_class(rules, test_set, n_classes, threshold)
    return float(np.mean(scores))


def rule_fidelity_per_class(
    rules: Mapping[int, DnfRule],
    predictor: ConceptPredictor,
    test_set: Sequence[ConceptDataPoint],
    threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
) -> tuple[list[float], list[int]]:
    if not test_set:
        raise InvalidArgumentError("rule fidelity needs a non-empty test set")
    X, _ = stack(test_set)
    return _per_class(rules, X, predict_many(predictor, X), predictor.n_classes, threshold)


def rule_fidelity(rules, predictor, test_set, threshold=DEFAULT_SATISFACTION_THRESHOLD) -> float:
    scores, _ = rule_fidelity_per_class(rules, predictor, test_set, threshold)
    return float(np.mean(scores))


def rule_uncertainty(rules: Mapping[int, DnfRule]) -> float:
    """Mean uncertainty over the rules present; 0.0 when there are none."""
    if not rules:
        return 0.0
    return float(np.mean([r.uncertainty for r in rules.values()]))


@dataclass
class MetricsReport:
    model_accuracy: float
    rule_accuracy: float
    rule_fidelity: float
    rule_uncertainty: float
    per_class_rule_accuracy: list[float] = field(default_factory=list)
    per_class_rule_fidelity: list[float] = field(default_factory=list)
    per_class_rule_uncertainty: list[float | None] = field(default_factory=list)
    missing_rules: list[int] = field(default_factory=list)

    def to_record(self) -> dict:
        return asdict(self)


def evaluate(
    rules: Mapping[int, DnfRule],
    predictor: ConceptPredictor,
    test_set: Sequence[ConceptDataPoint],
    threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
) -> MetricsReport:
    acc, missing = rule_accuracy_per_class(rules, test_set, predictor.n_classes, threshold)
    fid, _ = rule_fidelity_per_class(rules, predictor, test_set, threshold)
    unc = [rules[c].uncertainty if c in rules else None for c in range(predictor.n_classes)]
    return MetricsReport(
        model_accuracy=model_accuracy(predictor, test_set),
        rule_accuracy=float(np.mean(acc)),
        rule_fidelity=float(np.mean(fid)),
        rule_uncertainty=rule_uncertainty(rules),
        per_class_rule_accuracy=[float(a) for a in acc],
        per_class_rule_fidelity=[float(f) for f in fid],
        per_class_rule_uncertainty=unc,
        missing_rules=missing,
    )


ROW_LABELS = (
    ("model_accuracy", "model accuracy"),
    ("rule_accuracy", "rule accuracy"),
    ("rule_fidelity", "rule fidelity"),
    ("rule_uncertainty", "rule uncertainty"),
)


def format_metrics_table(columns: Mapping[str, Mapping[str, str | float]]) -> str:
    """Plain-text table: one row per metric, one column per run or mode.

    Cell values may be floats (printed as percentages) or preformatted text.
    """
    names = list(columns)
    rows = [["metric"] + names]
    for key, label in ROW_LABELS:
        row = [label]
        for name in names:
            val = columns[name].get(key, "-")
            row.append(f"{100 * val:.2f}%" if isinstance(val, float) else str(val))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for j, r in enumerate(rows):
        out.append(" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if j == 0:
            out.append("-+-".join("-" * w for w in widths))
    return "\n".join(out)
