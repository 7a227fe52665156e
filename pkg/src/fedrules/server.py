"""Server side of a round: rank client rules, aggregate them, weight clients.

Rules for a class are grouped by structure and scored by the mean of
accuracy x uncertainty over the clients that sent them. Starting from the
best group, each of the next groups (up to ``m`` in total) is merged into the
global rule with OR when the two share a feature group on different
features and with AND otherwise; the merge is kept only if the rule's
validation accuracy strictly improves. Clients are weighted by how often
their rules made the top ``m``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .client import RuleReport
from .errors import InvalidArgumentError
from .metrics import class_rule_accuracy
from .model import ConceptDataPoint, stack
from .rules import (
    DEFAULT_SATISFACTION_THRESHOLD,
    Conjunction,
    DnfRule,
    FeatureSchema,
    combine_and,
    combine_or,
    conflicts,
    rule_mask,
    rule_to_record,
)

log = logging.getLogger(__name__)

MODES = ("uncertainty", "fedavg", "no_uncertainty")
TALLY_MODES = ("ranked", "accepted")


@dataclass(frozen=True)
class RuleGroup:
    class_index: int
    rule: DnfRule
    contributors: tuple[int, ...]
    score: float

    @property
    def n(self) -> int:
        return len(self.contributors)


@dataclass(frozen=True)
class TraceStep:
    rank: int
    contributors: tuple[int, ...]
    connective: str  # "init", "or", "and"
    validation_accuracy: float
    accepted: bool

    def to_record(self) -> dict:
        return {
            "rank": self.rank,
            "contributors": list(self.contributors),
            "connective": self.connective,
            "validation_accuracy": self.validation_accuracy,
            "accepted": self.accepted,
        }


@dataclass(eq=False)
class GlobalRound:
    round_index: int
    mode: str
    rules: dict[int, DnfRule]
    traces: dict[int, list[TraceStep]]
    tallies: dict[int, int]
    weights: dict[int, float]
    params: np.ndarray
    validation_model_accuracy: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_record(self, schema: FeatureSchema) -> dict:
        return {
            "round": self.round_index,
            "mode": self.mode,
            "global_rules": [rule_to_record(self.rules[c], schema) for c in sorted(self.rules)],
            "traces": {
                schema.class_names[c]: [s.to_record() for s in steps] for c, steps in sorted(self.traces.items())
            },
            "tallies": {str(k): v for k, v in sorted(self.tallies.items())},
            "weights": {str(k): v for k, v in sorted(self.weights.items())},
            "validation_model_accuracy": self.validation_model_accuracy,
        }


def group_and_rank(reports: Sequence[RuleReport], class_index: int, force_certain: bool = False) -> list[RuleGroup]:
    """Group identical rules for one class and rank them by mean acc x u.

    Ties go to the group with more contributors, then to the
    lexicographically smaller rule structure. A group's rule carries the
    mean of its members' conjunction and rule uncertainties.
    """
    members: dict[tuple, list[tuple[int, DnfRule, float, float]]] = {}
    for rep in reports:
        entry = rep.entries.get(class_index)
        if entry is None:
            continue
        u = 1.0 if force_certain else entry.uncertainty
        members.setdefault(entry.rule.structure(), []).append((rep.client_id, entry.rule, entry.accuracy, u))
    groups = []
    for structure, items in members.items():
        n = len(items)
        score = math.fsum(acc * u for _, _, acc, u in items) / n
        conj = []
        for i, feats in enumerate(structure):
            us = [1.0 if force_certain else rule.conjunctions[i].uncertainty for _, rule, _, _ in items]
            conj.append(Conjunction(feats, min(math.fsum(us) / n, 1.0)))
        rule_u = min(math.fsum(u for *_, u in items) / n, 1.0)
        rule = DnfRule(class_index, tuple(conj), rule_u)
        groups.append(RuleGroup(class_index, rule, tuple(sorted(k for k, *_ in items)), score))
    groups.sort(key=lambda g: (-g.score, -g.n, g.rule.structure()))
    return groups


def aggregate_class_rule(
    ranked: Sequence[RuleGroup],
    m: int,
    validation_set: Sequence[ConceptDataPoint],
    schema: FeatureSchema,
    threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
) -> tuple[DnfRule, list[TraceStep]]:
    if not ranked:
        raise InvalidArgumentError("nothing to aggregate")
    if not validation_set:
        raise InvalidArgumentError("validation set is empty")
    if m < 1:
        raise InvalidArgumentError("m must be at least 1")
    X, y = stack(validation_set)
    c = ranked[0].class_index

    def score(rule):
        return class_rule_accuracy(rule_mask(rule, X, threshold), y, c)

    current = ranked[0].rule
    best = score(current)
    trace = [TraceStep(0, ranked[0].contributors, "init", best, True)]
    for rank, group in enumerate(ranked[1:m], start=1):
        if conflicts(current, group.rule, schema):
            connective, candidate = "or", combine_or(current, group.rule)
        else:
            connective, candidate = "and", combine_and(current, group.rule, schema)
        acc = score(candidate)
        accepted = acc > best
        trace.append(TraceStep(rank, group.contributors, connective, acc, accepted))
        if accepted:
            current, best = candidate, acc
    return current, trace


def client_weights(tallies: Sequence[float], K: int | None = None) -> np.ndarray:
    """Share of each client's tally; uniform when nobody scored."""
    t = np.asarray(tallies, dtype=float)
    K = len(t) if K is None else K
    if len(t) != K or K < 1:
        raise InvalidArgumentError(f"expected {K} tallies, got {len(t)}")
    if np.any(t < 0):
        raise InvalidArgumentError("tallies must be non-negative")
    total = t.sum()
    if total == 0:
        return np.full(K, 1.0 / K)
    return t / total


def sample_weights(counts: Sequence[int]) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    if c.sum() <= 0:
        return np.full(len(c), 1.0 / len(c))
    return c / c.sum()


def aggregate_models(snapshots: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    if not snapshots:
        raise InvalidArgumentError("no parameter snapshots")
    shapes = {np.shape(s) for s in snapshots}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"snapshot shapes differ: {sorted(shapes)}")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(snapshots),):
        raise InvalidArgumentError("one weight per snapshot required")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"weights must be non-negative and sum to 1, got {w.sum()!r}")
    out = np.zeros(shapes.pop())
    for wi, s in zip(w, snapshots):
        if wi:
            out += wi * np.asarray(s, dtype=float)
    return out


def server_round(
    reports: Sequence[RuleReport],
    validation_set: Sequence[ConceptDataPoint],
    schema: FeatureSchema,
    m: int = 3,
    mode: str = "uncertainty",
    round_index: int = 0,
    tally_mode: str = "ranked",
    threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
) -> GlobalRound:
    if not reports:
        raise InvalidArgumentError("server_round needs at least one report")
    if mode not in MODES:
        raise InvalidArgumentError(f"unknown mode {mode!r}; expected one of {MODES}")
    if tally_mode not in TALLY_MODES:
        raise InvalidArgumentError(f"unknown tally mode {tally_mode!r}")
    reports = sorted(reports, key=lambda r: r.client_id)
    certain = mode == "no_uncertainty"
    if certain:
        validation_set = [p.with_certainty() for p in validation_set]

    tallies = {r.client_id: 0 for r in reports}
    rules, traces = {}, {}
    for c in range(schema.n_classes):
        ranked = group_and_rank(reports, c, force_certain=certain)
        if not ranked:
            continue
        rules[c], traces[c] = aggregate_class_rule(ranked, m, validation_set, schema, threshold)
        for step in traces[c]:
            if tally_mode == "ranked" or step.accepted:
                for k in step.contributors:
                    tallies[k] += 1
        log.debug("class %d: %d groups, trace %s", c, len(ranked), traces[c])

    ids = [r.client_id for r in reports]
    if mode == "uncertainty":
        w = client_weights([tallies[k] for k in ids])
    else:
        w = sample_weights([r.n_samples for r in reports])
    params = aggregate_models([r.params for r in reports], w)
    return GlobalRound(
        round_index,
        mode,
        rules,
        traces,
        tallies,
        {k: float(x) for k, x in zip(ids, w)},
        params,
    )
