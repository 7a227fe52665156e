"""Simulated federated client.

A round on the client: adopt the broadcast parameters, train on the local
training split, read one conjunction off every local training point, OR the
distinct conjunctions into one rule per predicted class, and score each rule
on the local test split. Only the resulting report leaves the client.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .metrics import class_rule_accuracy
from .model import ConceptDataPoint, ConceptPredictor, predict_many, relevance_matrix, stack, train
from .rules import (
    Conjunction,
    DnfRule,
    FeatureSchema,
    canonicalize,
    conjunction_uncertainty,
    rule_mask,
    rule_to_record,
)
from .seeding import derive_rng, derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RuleEntry:
    rule: DnfRule
    accuracy: float
    uncertainty: float


@dataclass(frozen=True, eq=False)
class RuleReport:
    client_id: int
    entries: dict[int, RuleEntry]
    params: np.ndarray
    n_samples: int

    def to_record(self, schema: FeatureSchema) -> dict:
        return {
            "client_id": self.client_id,
            "n_samples": self.n_samples,
            "entries": [
                {
                    "class_index": c,
                    "rule": rule_to_record(e.rule, schema),
                    "accuracy": e.accuracy,
                    "uncertainty": e.uncertainty,
                }
                for c, e in sorted(self.entries.items())
            ],
            "params": [float(x) for x in self.params],
        }


@dataclass(frozen=True)
class ClientState:
    client_id: int
    schema: FeatureSchema
    local_train: tuple[ConceptDataPoint, ...]
    local_test: tuple[ConceptDataPoint, ...]
    predictor: ConceptPredictor
    root_seed: int = 0
    max_conjunctions: int = 5
    round_index: int = 0
    last_report: RuleReport | None = field(default=None, compare=False)


def make_client(
    client_id: int,
    shard: Sequence[ConceptDataPoint],
    schema: FeatureSchema,
    predictor: ConceptPredictor,
    local_test_frac: float = 0.2,
    root_seed: int = 0,
    max_conjunctions: int = 5,
) -> ClientState:
    """Split a shard into local train/test and wrap it with a predictor."""
    if not shard:
        raise InvalidArgumentError(f"client {client_id} has an empty shard")
    if not 0.0 <= local_test_frac < 1.0:
        raise InvalidArgumentError("local_test_frac must lie in [0, 1)")
    order = derive_rng(root_seed, "local-split", client_id).permutation(len(shard))
    n_test = min(int(math.floor(len(shard) * local_test_frac + 0.5)), len(shard) - 1)
    pts = [shard[i] for i in order]
    return ClientState(
        client_id,
        schema,
        tuple(pts[n_test:]),
        tuple(pts[:n_test]),
        predictor,
        root_seed=root_seed,
        max_conjunctions=max_conjunctions,
    )


def _pick_per_group(features: np.ndarray, relevance: np.ndarray, x: np.ndarray, schema: FeatureSchema):
    """Keep one feature per group: highest relevance, then value, then lowest index."""
    best: dict[int, int] = {}
    for f in features:
        g = schema.group_of[f]
        cur = best.get(g)
        if cur is None or (relevance[f], x[f]) > (relevance[cur], x[cur]):
            best[g] = int(f)
    return tuple(sorted(best.values()))


def sample_conjunctions(
    predictor: ConceptPredictor,
    X_hat: np.ndarray,
    schema: FeatureSchema,
) -> tuple[np.ndarray, list[Conjunction | None]]:
    """Predicted class and sample-level conjunction for each row of ``X_hat``.

    Same as :func:`~fedrules.model.extract_sample_rule` per row, except that
    when several activated features fall in one group only the most relevant
    is kept, so no conjunction ever ANDs two features of the same group.
    """
    R = relevance_matrix(predictor)
    preds = predict_many(predictor, X_hat)
    t, s = predictor.relevance_threshold, predictor.satisfaction_threshold
    out: list[Conjunction | None] = []
    for x, c in zip(X_hat, preds):
        active = np.flatnonzero((R[:, c] > t) & (x > s))
        if active.size == 0:
            out.append(None)
            continue
        feats = _pick_per_group(active, R[:, c], x, schema)
        out.append(Conjunction(feats, conjunction_uncertainty(x[list(feats)])))
    return preds, out


def build_class_rules(
    preds: np.ndarray,
    conjunctions: Sequence[Conjunction | None],
    max_conjunctions: int = 5,
) -> dict[int, DnfRule]:
    """OR the distinct sample conjunctions of each predicted class.

    Duplicates collapse into one conjunction scored by the mean of their
    uncertainties. At most ``max_conjunctions`` survive, ranked by
    frequency x uncertainty (ties: shorter, then lexicographic). The class
    rule's uncertainty is the mean over the surviving conjunctions.
    """
    seen: dict[int, dict[tuple[int, ...], list[float]]] = defaultdict(lambda: defaultdict(list))
    for c, conj in zip(preds, conjunctions):
        if conj is not None:
            seen[int(c)][conj.features].append(conj.uncertainty)
    rules = {}
    for c in sorted(seen):
        scored = []
        for feats, us in seen[c].items():
            u = min(math.fsum(us) / len(us), 1.0)
            scored.append((-len(us) * u, len(feats), feats, u))
        scored.sort()
        kept = [Conjunction(feats, u) for _, _, feats, u in scored[:max_conjunctions]]
        rule_u = min(math.fsum(k.uncertainty for k in kept) / len(kept), 1.0)
        rules[c] = canonicalize(DnfRule(c, tuple(kept), rule_u))
    return rules


def local_round(
    state: ClientState,
    global_params: np.ndarray | None = None,
    epochs: int | None = None,
) -> tuple[ClientState, RuleReport]:
    predictor = state.predictor
    if global_params is not None:
        predictor = predictor.with_params(global_params)
    predictor = dataclasses.replace(
        predictor, seed=derive_seed(state.root_seed, "train", state.client_id, state.round_index)
    )
    predictor = train(predictor, state.local_train, epochs)

    X, _ = stack(state.local_train)
    preds, conj = sample_conjunctions(predictor, X, state.schema)
    rules = build_class_rules(preds, conj, state.max_conjunctions)

    eval_pts = state.local_test or state.local_train
    Xt, yt = stack(eval_pts)
    entries = {}
    for c, rule in rules.items():
        acc = class_rule_accuracy(rule_mask(rule, Xt, predictor.satisfaction_threshold), yt, c)
        entries[c] = RuleEntry(rule, float(acc), rule.uncertainty)
    if not entries:
        log.debug("client %d extracted no rules this round", state.client_id)

    report = RuleReport(
        state.client_id,
        entries,
        predictor.params_vector(),
        len(state.local_train),
    )
    new_state = dataclasses.replace(state, predictor=predictor, round_index=state.round_index + 1, last_report=report)
    return new_state, report
