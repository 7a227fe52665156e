import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedrules.client import RuleEntry, RuleReport
from fedrules.errors import InvalidArgumentError
from fedrules.model import ConceptDataPoint
from fedrules.rules import Conjunction, DnfRule
from fedrules.server import (
    aggregate_class_rule,
    aggregate_models,
    client_weights,
    group_and_rank,
    server_round,
)


def R(*conj, u=1.0, cls=0):
    return DnfRule(cls, tuple(Conjunction(c, u) for c in conj), u)


def report(k, entries, params=None, n=10):
    ents = {c: RuleEntry(rule, acc, rule.uncertainty) for c, (rule, acc) in entries.items()}
    return RuleReport(k, ents, np.zeros(4) if params is None else np.asarray(params, float), n)


def pt(bits, label):
    v = np.asarray(bits, dtype=float)
    return ConceptDataPoint(v, np.ones_like(v), label)


# ------------------------------------------------------------------ ranking


def test_rank_score_single_group():
    (g,) = group_and_rank([report(0, {0: (R((1,), u=0.8), 0.9)})], 0)
    assert g.score == pytest.approx(0.72, abs=1e-12) and g.n == 1


def test_rank_score_two_contributors():
    reps = [report(0, {0: (R((1,), u=0.8), 0.9)}), report(1, {0: (R((1,), u=1.0), 0.7)})]
    (g,) = group_and_rank(reps, 0)
    assert g.score == pytest.approx(0.71, abs=1e-12)
    assert g.contributors == (0, 1)
    assert g.rule.uncertainty == pytest.approx(0.9, abs=1e-12)


def test_rank_orders_by_score_then_size():
    reps = [
        # dyadic values so the tie on score is exact
        report(0, {0: (R((1,), u=0.5), 0.75)}),  # 0.375
        report(1, {0: (R((2,), u=1.0), 0.25)}),  # 0.25
        report(2, {0: (R((3,), u=0.75), 0.5)}),  # 0.375, n=2 with client 3
        report(3, {0: (R((3,), u=0.75), 0.5)}),
    ]
    ranked = group_and_rank(reps, 0)
    assert [g.rule.structure() for g in ranked] == [((3,),), ((1,),), ((2,),)]


def test_rank_force_certain_ignores_uncertainty():
    reps = [report(0, {0: (R((1,), u=0.5), 0.9)}), report(1, {0: (R((2,), u=1.0), 0.8)})]
    assert group_and_rank(reps, 0)[0].contributors == (1,)
    top = group_and_rank(reps, 0, force_certain=True)[0]
    assert top.contributors == (0,) and top.rule.uncertainty == 1.0


# -------------------------------------------------------------- aggregation


def test_m_one_returns_top_rule(bird_schema):
    ranked = group_and_rank([report(0, {0: (R((0,)), 0.9)}), report(1, {0: (R((2,)), 0.5)})], 0)
    rule, trace = aggregate_class_rule(ranked, 1, [pt([1, 0, 0, 0, 0, 0], 0)], bird_schema)
    assert rule == ranked[0].rule and len(trace) == 1


def test_conflicting_groups_are_ored(bird_schema):
    # class 0 birds are either black- or gray-winged
    val = [pt([1, 0, 0, 0, 0, 0], 0), pt([0, 1, 0, 0, 0, 0], 0), pt([0, 0, 1, 0, 0, 0], 1)]
    ranked = group_and_rank([report(0, {0: (R((0,)), 0.9)}), report(1, {0: (R((1,)), 0.8)})], 0)
    rule, trace = aggregate_class_rule(ranked, 3, val, bird_schema)
    assert trace[1].connective == "or" and trace[1].accepted
    assert rule.structure() == ((0,), (1,))


def test_gate_rejects_worse_candidate(bird_schema):
    # AND with bill_short would drop the gray-billed positive
    val = [pt([1, 0, 1, 0, 0, 0], 0), pt([1, 0, 0, 1, 0, 0], 0), pt([0, 1, 1, 0, 0, 0], 1)]
    ranked = group_and_rank([report(0, {0: (R((0,)), 0.9)}), report(1, {0: (R((2,)), 0.8)})], 0)
    rule, trace = aggregate_class_rule(ranked, 3, val, bird_schema)
    assert trace[1].connective == "and" and not trace[1].accepted
    assert rule == ranked[0].rule
    assert trace[1].validation_accuracy < trace[0].validation_accuracy


def test_gate_accepts_and_when_it_helps(bird_schema):
    val = [pt([1, 0, 1, 0, 0, 0], 0), pt([1, 0, 0, 1, 0, 0], 1), pt([0, 1, 1, 0, 0, 0], 2)]
    ranked = group_and_rank([report(0, {0: (R((0,)), 0.9)}), report(1, {0: (R((2,)), 0.8)})], 0)
    rule, trace = aggregate_class_rule(ranked, 3, val, bird_schema)
    assert trace[1].accepted and rule.structure() == ((0, 2),)


def test_aggregate_errors(bird_schema):
    ranked = group_and_rank([report(0, {0: (R((0,)), 0.9)})], 0)
    with pytest.raises(InvalidArgumentError):
        aggregate_class_rule([], 3, [pt([1] * 6, 0)], bird_schema)
    with pytest.raises(InvalidArgumentError):
        aggregate_class_rule(ranked, 3, [], bird_schema)


# ------------------------------------------------------------------ weights


def test_client_weights_examples():
    assert list(client_weights([2, 1, 1])) == [0.5, 0.25, 0.25]
    assert client_weights([0, 0, 0]) == pytest.approx([1 / 3] * 3, abs=1e-15)
    assert list(client_weights([5], K=1)) == [1.0]
    with pytest.raises(InvalidArgumentError):
        client_weights([1, -1])


@given(st.lists(st.integers(0, 50), min_size=1, max_size=12))
def test_client_weights_normalised(t):
    w = client_weights(t)
    assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-9
    if sum(t):
        assert np.allclose(w, np.array(t) / sum(t), atol=1e-15)


def test_aggregate_models_examples():
    p, q = np.array([1.0, 2.0]), np.array([3.0, -2.0])
    assert list(aggregate_models([p, p, p], [0.2, 0.3, 0.5])) == pytest.approx([1.0, 2.0], abs=1e-15)
    assert list(aggregate_models([p, q], [0.5, 0.5])) == [2.0, 0.0]
    assert list(aggregate_models([p, q], [1.0, 0.0])) == [1.0, 2.0]
    with pytest.raises(InvalidArgumentError):
        aggregate_models([p, np.zeros(3)], [0.5, 0.5])
    with pytest.raises(InvalidArgumentError):
        aggregate_models([p, q], [0.6, 0.6])


# ------------------------------------------------------------- server round


def test_single_client_rules_become_global(bird_schema):
    rep = report(4, {0: (R((0,)), 0.9), 2: (R((5,), cls=2), 0.7)}, params=[1, 2, 3, 4])
    gr = server_round([rep], [pt([1, 0, 0, 0, 0, 1], 0)], bird_schema)
    assert gr.rules[0] == rep.entries[0].rule and gr.rules[2] == rep.entries[2].rule
    assert gr.weights == {4: 1.0}
    assert list(gr.params) == [1, 2, 3, 4]


def _mixed_reports():
    good = [report(k, {c: (R((2 * c,), cls=c), 0.95) for c in range(3)}, params=[k] * 4) for k in range(2)]
    bad = [report(k, {c: (R((2 * c + 1,), cls=c, u=0.5), 0.4) for c in range(3)}, params=[k] * 4) for k in (2, 3)]
    return good + bad


def test_fedavg_mode_ignores_rule_quality(bird_schema):
    gr = server_round(_mixed_reports(), [pt([1, 0, 1, 0, 1, 0], 0)], bird_schema, m=1, mode="fedavg")
    assert gr.weights == {k: 0.25 for k in range(4)}


def test_uncertainty_mode_rewards_top_clients(bird_schema):
    gr = server_round(_mixed_reports(), [pt([1, 0, 1, 0, 1, 0], 0)], bird_schema, m=1)
    assert gr.tallies == {0: 3, 1: 3, 2: 0, 3: 0}
    assert gr.weights == {0: 0.5, 1: 0.5, 2: 0.0, 3: 0.0}


def test_always_top_client_gets_all_weight(bird_schema):
    reps = [report(0, {c: (R((2 * c,), cls=c), 0.99) for c in range(3)})]
    reps += [report(k, {c: (R((2 * c + 1,), cls=c), 0.5) for c in range(3)}) for k in (1, 2)]
    gr = server_round(reps, [pt([1, 0, 1, 0, 1, 0], 0)], bird_schema, m=1)
    assert gr.weights == {0: 1.0, 1: 0.0, 2: 0.0}


def test_accepted_tally_mode_counts_only_kept_groups(bird_schema):
    val = [pt([1, 0, 1, 0, 0, 0], 0), pt([1, 0, 0, 1, 0, 0], 0), pt([0, 1, 1, 0, 0, 0], 1)]
    reps = [report(0, {0: (R((0,)), 0.9)}), report(1, {0: (R((2,)), 0.8)})]
    ranked = server_round(reps, val, bird_schema, tally_mode="ranked")
    accepted = server_round(reps, val, bird_schema, tally_mode="accepted")
    assert ranked.tallies == {0: 1, 1: 1}
    assert accepted.tallies == {0: 1, 1: 0}


def test_no_uncertainty_mode_matches_on_certain_reports(bird_schema):
    reps = [report(k, {c: (R((2 * c + k % 2,), cls=c), 0.9 - 0.1 * k) for c in range(3)}) for k in range(4)]
    val = [pt([1, 0, 1, 0, 1, 0], 0), pt([0, 1, 0, 1, 0, 1], 1)]
    a = server_round(reps, val, bird_schema, mode="uncertainty")
    b = server_round(reps, val, bird_schema, mode="no_uncertainty")
    assert a.rules == b.rules


def test_server_round_validates_inputs(bird_schema):
    with pytest.raises(InvalidArgumentError):
        server_round([], [pt([1] * 6, 0)], bird_schema)
    with pytest.raises(InvalidArgumentError):
        server_round(_mixed_reports(), [pt([1] * 6, 0)], bird_schema, mode="median")


def test_server_round_deterministic_and_order_free(bird_schema):
    reps = _mixed_reports()
    val = [pt([1, 0, 1, 0, 1, 0], 0), pt([0, 1, 0, 1, 0, 1], 2)]
    a = server_round(reps, val, bird_schema).to_record(bird_schema)
    b = server_round(list(reversed(reps)), val, bird_schema).to_record(bird_schema)
    assert a == b
