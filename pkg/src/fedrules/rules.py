"""Positive-literal DNF rules: representation, evaluation and combination.

A rule explains one class as a disjunction of conjunctions over feature
indices. Literals are plain feature indices; there is no way to express a
negated literal. Every conjunction and every rule carries an uncertainty
score in [0, 1], where 1 means the supporting evidence was fully certain.

Textual form (one rule per line)::

    black_footed_albatross <-> (wing_black AND bill_short)[u=0.81] OR (size_large)[u=0.7] [u=0.755]

The per-conjunction ``[u=...]`` annotations are optional when parsing; a
conjunction without one inherits the rule-level score.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConflictError, InvalidArgumentError

DEFAULT_SATISFACTION_THRESHOLD = 0.5

_NAME_RE = re.compile(r"^[^\s()\[\]<>]+$")


@dataclass(frozen=True)
class FeatureSchema:
    """Feature names, their partition into groups, and the class labels."""

    feature_names: tuple[str, ...]
    group_of: tuple[int, ...]
    class_names: tuple[str, ...]
    group_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "group_of", tuple(int(g) for g in self.group_of))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        F = len(self.feature_names)
        if F < 1:
            raise InvalidArgumentError("schema needs at least one feature")
        if len(self.class_names) < 2:
            raise InvalidArgumentError("schema needs at least two classes")
        if len(self.group_of) != F:
            raise InvalidArgumentError(f"group_of has {len(self.group_of)} entries for {F} features")
        for kind, names in (("feature", self.feature_names), ("class", self.class_names)):
            if len(set(names)) != len(names):
                raise InvalidArgumentError(f"duplicate {kind} names")
            bad = [n for n in names if not _NAME_RE.match(n)]
            if bad:
                raise InvalidArgumentError(f"invalid {kind} name(s): {bad}")
        if min(self.group_of) < 0:
            raise InvalidArgumentError("group indices must be non-negative")
        n_groups = max(self.group_of) + 1
        if set(self.group_of) != set(range(n_groups)):
            raise InvalidArgumentError("group indices must be contiguous from 0")
        if not self.group_names:
            object.__setattr__(self, "group_names", tuple(f"g{i}" for i in range(n_groups)))
        else:
            object.__setattr__(self, "group_names", tuple(self.group_names))
            if len(self.group_names) != n_groups:
                raise InvalidArgumentError("group_names length does not match group count")

    @classmethod
    def from_groups(cls, groups: Mapping[str, Sequence[str]], class_names: Sequence[str]):
        """Build a schema from ``{group_name: [feature names]}`` in insertion order."""
        names, group_of = [], []
        for g, feats in enumerate(groups.values()):
            for f in feats:
                names.append(f)
                group_of.append(g)
        return cls(tuple(names), tuple(group_of), tuple(class_names), tuple(groups))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def features_in_group(self, group: int) -> list[int]:
        return [f for f, g in enumerate(self.group_of) if g == group]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise InvalidArgumentError(f"unknown feature {name!r}") from None

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise InvalidArgumentError(f"unknown class {name!r}") from None

    def to_record(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "group_of": list(self.group_of),
            "group_names": list(self.group_names),
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "FeatureSchema":
        return cls(
            tuple(rec["feature_names"]),
            tuple(rec["group_of"]),
            tuple(rec["class_names"]),
            tuple(rec.get("group_names", ())),
        )


def _check_unit(value: float, what: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InvalidArgumentError(f"{what} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class Conjunction:
    """AND of positive literals; ``features`` is kept sorted."""

    features: tuple[int, ...]
    uncertainty: float = 1.0

    def __post_init__(self):
        feats = tuple(sorted(int(f) for f in self.features))
        if not feats:
            raise InvalidArgumentError("conjunction must contain at least one literal")
        if len(set(feats)) != len(feats):
            raise InvalidArgumentError(f"duplicate literal in conjunction {feats}")
        if feats[0] < 0:
            raise InvalidArgumentError("feature indices must be non-negative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "uncertainty", _check_unit(self.uncertainty, "uncertainty"))

    def __len__(self):
        return len(self.features)


@dataclass(frozen=True)
class DnfRule:
    """OR of conjunctions explaining one class.

    The constructor accepts duplicate conjunctions; :func:`canonicalize`
    removes them. Equality of two rules *as explanations* is structural and
    ignores uncertainty, see :meth:`structure`.
    """

    class_index: int
    conjunctions: tuple[Conjunction, ...]
    uncertainty: float = 1.0

    def __post_init__(self):
        conj = tuple(self.conjunctions)
        if not conj:
            raise InvalidArgumentError("rule must contain at least one conjunction")
        if int(self.class_index) < 0:
            raise InvalidArgumentError("class_index must be non-negative")
        object.__setattr__(self, "class_index", int(self.class_index))
        object.__setattr__(self, "conjunctions", conj)
        object.__setattr__(self, "uncertainty", _check_unit(self.uncertainty, "uncertainty"))

    def structure(self) -> tuple[tuple[int, ...], ...]:
        """Literal structure of the canonical form; the grouping key for rules."""
        return tuple(sorted({c.features for c in self.conjunctions}))

    def features(self) -> frozenset[int]:
        return frozenset(f for c in self.conjunctions for f in c.features)


def same_rule(a: DnfRule, b: DnfRule) -> bool:
    return a.class_index == b.class_index and a.structure() == b.structure()


def canonicalize(rule: DnfRule) -> DnfRule:
    merged: dict[tuple[int, ...], float] = {}
    for c in rule.conjunctions:
        prev = merged.get(c.features)
        merged[c.features] = c.uncertainty if prev is None else max(prev, c.uncertainty)
    conj = tuple(Conjunction(k, merged[k]) for k in sorted(merged))
    return DnfRule(rule.class_index, conj, rule.uncertainty)


def conjunction_uncertainty(activated_values: Iterable[float]) -> float:
    """Geometric mean of the adjusted values of the activated features."""
    values = [float(v) for v in activated_values]
    if not values:
        raise InvalidArgumentError("conjunction_uncertainty needs at least one value")
    for v in values:
        _check_unit(v, "activated value")
    g = math.prod(values) ** (1.0 / len(values))
    # pow rounding can step a hair outside [min, max]
    return min(max(g, min(values)), max(values))


def _literals(x: Conjunction | DnfRule) -> frozenset[int]:
    if isinstance(x, Conjunction):
        return frozenset(x.features)
    return x.features()


def conflicts(a: Conjunction | DnfRule, b: Conjunction | DnfRule, schema: FeatureSchema) -> bool:
    """True when a literal of ``a`` and a different literal of ``b`` share a group.

    Identical literals on both sides merge rather than conflict.
    """
    by_group: dict[int, set[int]] = {}
    for f in _literals(a):
        by_group.setdefault(schema.group_of[f], set()).add(f)
    for f in _literals(b):
        same = by_group.get(schema.group_of[f])
        if same and (same - {f}):
            return True
    return False


def has_internal_conflict(conj: Conjunction, schema: FeatureSchema) -> bool:
    groups = [schema.group_of[f] for f in conj.features]
    return len(set(groups)) != len(groups)


def combine_or(a: DnfRule, b: DnfRule) -> DnfRule:
    if a.class_index != b.class_index:
        raise InvalidArgumentError(f"cannot OR rules of classes {a.class_index} and {b.class_index}")
    u = (a.uncertainty + b.uncertainty) / 2.0
    return canonicalize(DnfRule(a.class_index, a.conjunctions + b.conjunctions, u))


def combine_and(a: DnfRule, b: DnfRule, schema: FeatureSchema) -> DnfRule:
    """Distribute AND over both rules' conjunctions.

    Each merged conjunction scores the geometric mean of its two sources;
    the rule scores the arithmetic mean over the resulting conjunctions.
    Raises :class:`ConflictError` when the rules share a feature group on
    different features; such pairs must be OR-combined.
    """
    if a.class_index != b.class_index:
        raise InvalidArgumentError(f"cannot AND rules of classes {a.class_index} and {b.class_index}")
    if conflicts(a, b, schema):
        raise ConflictError("rules share a feature group; combine with OR instead")
    merged = [
        Conjunction(
            tuple(set(ca.features) | set(cb.features)),
            math.sqrt(ca.uncertainty * cb.uncertainty),
        )
        for ca in a.conjunctions
        for cb in b.conjunctions
    ]
    draft = canonicalize(DnfRule(a.class_index, tuple(merged), 1.0))
    u = math.fsum(c.uncertainty for c in draft.conjunctions) / len(draft.conjunctions)
    return DnfRule(draft.class_index, draft.conjunctions, min(u, 1.0))


def _adjusted(point) -> np.ndarray:
    vec = getattr(point, "adjusted", point)
    return np.asarray(vec, dtype=float)


def rule_satisfied(
    rule: DnfRule,
    point,
    satisfaction_threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
    schema: FeatureSchema | None = None,
) -> bool:
    """Whether any conjunction has all literals strictly above the threshold.

    ``point`` is a :class:`~fedrules.model.ConceptDataPoint` (its adjusted
    vector is used) or an already adjusted feature vector.
    """
    x = _adjusted(point)
    if x.ndim != 1:
        raise InvalidArgumentError("point must be a single feature vector")
    if schema is not None and x.shape[0] != schema.n_features:
        raise InvalidArgumentError(f"point has {x.shape[0]} features, schema has {schema.n_features}")
    top = max(rule.features())
    if top >= x.shape[0]:
        raise InvalidArgumentError(f"rule uses feature {top} but point has {x.shape[0]}")
    return any(all(x[f] > satisfaction_threshold for f in c.features) for c in rule.conjunctions)


def rule_mask(
    rule: DnfRule | None,
    X_hat: np.ndarray,
    satisfaction_threshold: float = DEFAULT_SATISFACTION_THRESHOLD,
) -> np.ndarray:
    """Vectorised :func:`rule_satisfied` over the rows of ``X_hat``.

    ``None`` stands for the always-false rule.
    """
    X_hat = np.asarray(X_hat, dtype=float)
    if X_hat.ndim != 2:
        raise InvalidArgumentError("X_hat must be a 2-D array")
    if rule is None:
        return np.zeros(X_hat.shape[0], dtype=bool)
    if max(rule.features()) >= X_hat.shape[1]:
        raise InvalidArgumentError("rule references a feature outside the data")
    active = X_hat > satisfaction_threshold
    out = np.zeros(X_hat.shape[0], dtype=bool)
    for c in rule.conjunctions:
        out |= active[:, list(c.features)].all(axis=1)
    return out


def check_rule(rule: DnfRule, schema: FeatureSchema) -> None:
    if rule.class_index >= schema.n_classes:
        raise InvalidArgumentError(f"class index {rule.class_index} outside schema")
    if max(rule.features()) >= schema.n_features:
        raise InvalidArgumentError("rule references a feature outside the schema")


# ---------------------------------------------------------------- text form


def format_rule(rule: DnfRule, schema: FeatureSchema) -> str:
    check_rule(rule, schema)
    parts = []
    for c in rule.conjunctions:
        body = " AND ".join(schema.feature_names[f] for f in c.features)
        parts.append(f"({body})[u={c.uncertainty!r}]")
    return f"{schema.class_names[rule.class_index]} <-> {' OR '.join(parts)} [u={rule.uncertainty!r}]"


_CONJ_RE = re.compile(r"\(([^()]*)\)(?:\[u=([^\]]+)\])?")
_TAIL_RE = re.compile(r"\s\[u=([^\]]+)\]\s*$")


def parse_rule(text: str, schema: FeatureSchema) -> DnfRule:
    head, sep, body = text.strip().partition("<->")
    if not sep:
        raise InvalidArgumentError(f"missing '<->' in rule line: {text!r}")
    cls = schema.class_index(head.strip())
    body = body.strip()
    tail = _TAIL_RE.search(body)
    if not tail:
        raise InvalidArgumentError(f"missing rule uncertainty '[u=...]' in: {text!r}")
    rule_u = _parse_float(tail.group(1))
    body = body[: tail.start()].strip()
    conjunctions = []
    for piece in body.split(" OR "):
        m = _CONJ_RE.fullmatch(piece.strip())
        if not m:
            raise InvalidArgumentError(f"malformed conjunction {piece!r}")
        names = [n.strip() for n in m.group(1).split(" AND ")]
        feats = tuple(schema.feature_index(n) for n in names)
        u = _parse_float(m.group(2)) if m.group(2) is not None else rule_u
        conjunctions.append(Conjunction(feats, u))
    return DnfRule(cls, tuple(conjunctions), rule_u)


def _parse_float(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise InvalidArgumentError(f"not a number: {s!r}") from None


def rule_to_record(rule: DnfRule, schema: FeatureSchema) -> dict:
    check_rule(rule, schema)
    return {
        "class": schema.class_names[rule.class_index],
        "class_index": rule.class_index,
        "conjunctions": [
            {
                "features": [schema.feature_names[f] for f in c.features],
                "uncertainty": c.uncertainty,
            }
            for c in rule.conjunctions
        ],
        "uncertainty": rule.uncertainty,
    }


def rule_from_record(rec: Mapping, schema: FeatureSchema) -> DnfRule:
    conj = tuple(
        Conjunction(tuple(schema.feature_index(n) for n in c["features"]), c["uncertainty"])
        for c in rec["conjunctions"]
    )
    return DnfRule(schema.class_index(rec["class"]), conj, rec["uncertainty"])


def read_rule_file(text: str, schema: FeatureSchema) -> list[DnfRule]:
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            rules.append(parse_rule(line, schema))
    return rules
