"""Synthetic concept datasets with planted rules, partitioning and file I/O.

Two generators stand in for the usual benchmarks:

* ``generate_cub_like``: bird-attribute style data. Each class has a planted
  DNF rule; a point switches on the features of one of its class's planted
  conjunctions, features are flipped with ``noise_rate``, and one labeller
  confidence level is drawn per feature group.
* ``generate_mnist_like``: digit prototypes (one-hot concept vectors),
  labelled even/odd, half of them blended with another digit at a 70/30 or
  50/50 ratio. The blend ratio doubles as the point's confidence.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataIOError, GenerationError, InvalidArgumentError
from .model import ConceptDataPoint
from .rules import Conjunction, DnfRule, FeatureSchema

CONFIDENCE_LEVELS: dict[str, float] = {
    "definitely": 1.0,
    "probably": 0.7,
    "guessing": 0.5,
    "not_visible": 0.0,
}

DATASET_FORMAT = "fedrules-dataset/1"

_BIRD_GROUPS = {
    "wing_color": ["black", "gray", "brown", "white"],
    "bill_shape": ["hooked", "cone", "dagger", "needle"],
    "size": ["very_small", "small", "medium", "large"],
    "crown_color": ["red", "blue", "yellow", "olive"],
    "tail_pattern": ["solid", "striped", "spotted", "multi"],
}


def default_cub_schema(n_features: int = 20, n_groups: int = 5, n_classes: int = 4) -> FeatureSchema:
    """Features split as evenly as possible over groups; bird names for the 20/5 layout."""
    if n_groups < 1 or n_features < n_groups:
        raise InvalidArgumentError("need at least one feature per group")
    if (n_features, n_groups) == (20, 5):
        groups = {g: [f"{g}:{v}" for v in vals] for g, vals in _BIRD_GROUPS.items()}
    else:
        sizes = [len(a) for a in np.array_split(np.arange(n_features), n_groups)]
        groups = {f"g{g}": [f"g{g}:f{j}" for j in range(s)] for g, s in enumerate(sizes)}
    return FeatureSchema.from_groups(groups, [f"class_{c}" for c in range(n_classes)])


def parse_confidence_mix(text: str) -> dict[str, float]:
    """``"definitely:0.8,guessing:0.2"`` -> dict, validated."""
    mix = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, p = part.partition(":")
        if not sep:
            raise InvalidArgumentError(f"confidence mix entry {part!r} is not level:prob")
        mix[name.strip()] = float(p)
    check_confidence_mix(mix)
    return mix


def check_confidence_mix(mix: Mapping[str, float]) -> None:
    unknown = set(mix) - set(CONFIDENCE_LEVELS)
    if unknown:
        raise InvalidArgumentError(f"unknown confidence levels {sorted(unknown)}")
    if any(p < 0 for p in mix.values()) or not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
        raise InvalidArgumentError(f"confidence mix must be a distribution, got {dict(mix)}")


@dataclass(frozen=True)
class GeneratorSpec:
    schema: FeatureSchema
    planted_rules: tuple[DnfRule, ...]
    confidence_mix: Mapping[str, float] = field(default_factory=lambda: {"definitely": 1.0})
    noise_rate: float = 0.0
    n_points: int = 1000
    seed: int = 0

    def validate(self) -> None:
        s = self.schema
        if self.n_points < 0:
            raise GenerationError("n_points must be non-negative")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise GenerationError("noise_rate must lie in [0, 1]")
        try:
            check_confidence_mix(self.confidence_mix)
        except InvalidArgumentError as exc:
            raise GenerationError(str(exc)) from None
        if len(self.planted_rules) != s.n_classes:
            raise GenerationError(f"need one planted rule per class ({s.n_classes}), got {len(self.planted_rules)}")
        for c, rule in enumerate(self.planted_rules):
            if rule.class_index != c:
                raise GenerationError(f"planted rule {c} is for class {rule.class_index}")
            if max(rule.features()) >= s.n_features:
                raise GenerationError(f"planted rule {c} references an unknown feature")
        # a noiseless point of class c activates exactly one planted conjunction of c;
        # it must not also satisfy another class's rule
        for c, rc in enumerate(self.planted_rules):
            for k in rc.conjunctions:
                for c2, r2 in enumerate(self.planted_rules):
                    if c2 != c and any(set(k2.features) <= set(k.features) for k2 in r2.conjunctions):
                        raise GenerationError(f"planted rules of classes {c} and {c2} are not distinguishable")


def random_planted_rules(
    schema: FeatureSchema,
    rng: np.random.Generator,
    conjunctions_per_class: tuple[int, int] = (1, 2),
    conjunction_size: tuple[int, int] = (1, 3),
) -> tuple[DnfRule, ...]:
    """Planted rules with globally disjoint features, one group per literal.

    Disjointness across classes makes the rules distinguishable by
    construction. Raises :class:`GenerationError` when the schema is too
    small to give every class a conjunction.
    """
    unused = {g: list(rng.permutation(schema.features_in_group(g))) for g in range(schema.n_groups)}
    rules = []
    for c in range(schema.n_classes):
        n_conj = int(rng.integers(conjunctions_per_class[0], conjunctions_per_class[1] + 1))
        conj = []
        for _ in range(n_conj):
            open_groups = [g for g in range(schema.n_groups) if unused[g]]
            if not open_groups:
                break
            size = int(rng.integers(conjunction_size[0], conjunction_size[1] + 1))
            size = min(size, len(open_groups))
            groups = rng.choice(open_groups, size=size, replace=False)
            conj.append(Conjunction(tuple(int(unused[int(g)].pop()) for g in groups)))
        if not conj:
            raise GenerationError(f"schema has too few features to plant a rule for class {c}")
        rules.append(DnfRule(c, tuple(conj)))
    return tuple(rules)


def default_cub_spec(
    n_points: int = 1000,
    seed: int = 0,
    noise_rate: float = 0.05,
    confidence_mix: Mapping[str, float] | None = None,
    n_features: int = 20,
    n_groups: int = 5,
    n_classes: int = 4,
    conjunctions_per_class: tuple[int, int] = (1, 1),
) -> GeneratorSpec:
    schema = default_cub_schema(n_features, n_groups, n_classes)
    rules = random_planted_rules(
        schema,
        np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])),
        conjunctions_per_class=conjunctions_per_class,
        conjunction_size=(2, 3),
    )
    return GeneratorSpec(
        schema,
        rules,
        dict(confidence_mix or {"definitely": 1.0}),
        noise_rate,
        n_points,
        seed,
    )


def generate_cub_like(spec: GeneratorSpec) -> list[ConceptDataPoint]:
    """Sample points from the planted rules.

    Class/conjunction choice, feature noise and confidence draws use three
    independent streams, so changing ``noise_rate`` leaves the underlying
    noiseless points and confidence levels untouched.
    """
    spec.validate()
    s = spec.schema
    n, F = spec.n_points, s.n_features
    pick_rng, noise_rng, conf_rng = (
        np.random.default_rng(child) for child in np.random.SeedSequence(spec.seed).spawn(3)
    )

    labels = pick_rng.integers(0, s.n_classes, size=n)
    which = pick_rng.random(n)
    V = np.zeros((n, F))
    for i, c in enumerate(labels):
        conj = spec.planted_rules[c].conjunctions
        V[i, list(conj[int(which[i] * len(conj))].features)] = 1.0

    flips = noise_rng.random((n, F)) < spec.noise_rate
    V = np.where(flips, 1.0 - V, V)

    levels = [lvl for lvl in CONFIDENCE_LEVELS if spec.confidence_mix.get(lvl, 0.0) > 0]
    probs = np.array([spec.confidence_mix[lvl] for lvl in levels])
    values = np.array([CONFIDENCE_LEVELS[lvl] for lvl in levels])
    drawn = conf_rng.choice(len(levels), size=(n, s.n_groups), p=probs / probs.sum())
    U = values[drawn][:, list(s.group_of)]

    return [ConceptDataPoint(V[i], U[i], int(labels[i])) for i in range(n)]


def is_group_constant(point: ConceptDataPoint, schema: FeatureSchema) -> bool:
    groups = np.asarray(schema.group_of)
    return all(np.unique(point.u[groups == g]).size <= 1 for g in range(schema.n_groups))


@dataclass(frozen=True)
class OverlaySpec:
    schema: FeatureSchema
    prototypes: np.ndarray  # (P, F) concept vectors
    prototype_labels: tuple[int, ...]
    p_unchanged: float = 0.5
    ratios: tuple[float, ...] = (0.7, 0.5)
    n_points: int = 1000
    seed: int = 0


def default_overlay_spec(n_points: int = 1000, seed: int = 0) -> OverlaySpec:
    """Ten one-hot digit prototypes, classes even/odd, all digits in one group."""
    names = [f"digit_{d}" for d in range(10)]
    schema = FeatureSchema(tuple(names), (0,) * 10, ("even", "odd"), ("digit",))
    return OverlaySpec(schema, np.eye(10), tuple(d % 2 for d in range(10)), n_points=n_points, seed=seed)


def generate_mnist_like(spec: OverlaySpec) -> list[ConceptDataPoint]:
    protos = np.asarray(spec.prototypes, dtype=float)
    if protos.ndim != 2 or protos.shape[0] < 2:
        raise InvalidArgumentError("overlay generation needs at least two prototypes")
    if protos.shape[1] != spec.schema.n_features or len(spec.prototype_labels) != protos.shape[0]:
        raise InvalidArgumentError("prototypes do not match the schema")
    if not 0.0 <= spec.p_unchanged <= 1.0:
        raise InvalidArgumentError("p_unchanged must lie in [0, 1]")
    if not spec.ratios or any(not 0.0 < r <= 1.0 for r in spec.ratios):
        raise InvalidArgumentError("mix ratios must lie in (0, 1]")

    rng = np.random.default_rng(spec.seed)
    P, n = protos.shape[0], spec.n_points
    base = rng.integers(0, P, size=n)
    changed = rng.random(n) >= spec.p_unchanged
    ratio = np.asarray(spec.ratios)[rng.integers(0, len(spec.ratios), size=n)]
    other = (base + 1 + rng.integers(0, P - 1, size=n)) % P

    points = []
    for i in range(n):
        own = protos[base[i]]
        label = spec.prototype_labels[base[i]]
        if changed[i]:
            r = float(ratio[i])
            v = np.clip(r * own + (1.0 - r) * protos[other[i]], 0.0, 1.0)
            u = np.full_like(own, r)
        else:
            v, u = own, np.ones_like(own)
        points.append(ConceptDataPoint(v, u, label))
    return points


@dataclass(frozen=True)
class FederatedSplit:
    client_shards: tuple[tuple[ConceptDataPoint, ...], ...]
    validation: tuple[ConceptDataPoint, ...]
    test: tuple[ConceptDataPoint, ...]

    @property
    def n_clients(self) -> int:
        return len(self.client_shards)

    def replace_shard(self, k: int, points: Sequence[ConceptDataPoint]) -> "FederatedSplit":
        shards = list(self.client_shards)
        shards[k] = tuple(points)
        return dataclasses.replace(self, client_shards=tuple(shards))

    def map_points(self, fn) -> "FederatedSplit":
        return FederatedSplit(
            tuple(tuple(fn(p) for p in shard) for shard in self.client_shards),
            tuple(fn(p) for p in self.validation),
            tuple(fn(p) for p in self.test),
        )


def _count(n: int, frac: float) -> int:
    return int(math.floor(n * frac + 0.5))


def partition(
    data: Sequence[ConceptDataPoint],
    K: int = 10,
    val_frac: float = 0.05,
    test_frac: float = 0.05,
    seed: int = 0,
) -> FederatedSplit:
    """Shuffle, carve off test then validation, deal the rest into K even shards."""
    if K < 1:
        raise InvalidArgumentError("K must be at least 1")
    for name, frac in (("val_frac", val_frac), ("test_frac", test_frac)):
        if not 0.0 <= frac < 0.5:
            raise InvalidArgumentError(f"{name} must lie in [0, 0.5)")
    n = len(data)
    n_test, n_val = _count(n, test_frac), _count(n, val_frac)
    n_train = n - n_test - n_val
    if n_train < K:
        raise InvalidArgumentError(f"{n} points cannot fill {K} non-empty shards")
    order = np.random.default_rng(seed).permutation(n)
    pts = [data[i] for i in order]
    test, val, train = pts[:n_test], pts[n_test : n_test + n_val], pts[n_test + n_val :]
    bounds = np.cumsum([0] + [len(a) for a in np.array_split(np.arange(n_train), K)])
    shards = tuple(tuple(train[bounds[k] : bounds[k + 1]]) for k in range(K))
    return FederatedSplit(shards, tuple(val), tuple(test))


# ------------------------------------------------------------------ file I/O


def write_dataset(path, schema: FeatureSchema, points: Sequence[ConceptDataPoint]) -> None:
    """One JSON header line with the schema, then ``label,v...,u...`` per point.

    Floats are written with ``repr`` so values survive the round trip exactly.
    """
    lines = [json.dumps({"format": DATASET_FORMAT, "schema": schema.to_record()}, sort_keys=True)]
    for p in points:
        if p.n_features != schema.n_features:
            raise InvalidArgumentError("point does not match schema")
        fields = [str(p.label)] + [repr(float(x)) for x in p.v] + [repr(float(x)) for x in p.u]
        lines.append(",".join(fields))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write dataset {path}: {exc}") from exc


def read_dataset(path) -> tuple[FeatureSchema, list[ConceptDataPoint]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read dataset {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DataIOError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        if header.get("format") != DATASET_FORMAT:
            raise DataIOError(f"{path}: unsupported format {header.get('format')!r}")
        schema = FeatureSchema.from_record(header["schema"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataIOError(f"{path}: bad header: {exc}") from exc
    F = schema.n_features
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 1 + 2 * F:
            raise DataIOError(f"{path}:{lineno}: expected {1 + 2 * F} fields, got {len(parts)}")
        try:
            label = int(parts[0])
            vals = [float(x) for x in parts[1:]]
            points.append(ConceptDataPoint(vals[:F], vals[F:], label))
        except (ValueError, InvalidArgumentError) as exc:
            raise DataIOError(f"{path}:{lineno}: {exc}") from exc
        if not 0 <= label < schema.n_classes:
            raise DataIOError(f"{path}:{lineno}: label {label} outside schema")
    return schema, points
