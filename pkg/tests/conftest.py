import numpy as np
import pytest
from hypothesis import strategies as st

from fedrules.rules import Conjunction, DnfRule, FeatureSchema


@pytest.fixture
def bird_schema():
    return FeatureSchema.from_groups(
        {
            "wing_color": ["wing_black", "wing_gray"],
            "bill_length": ["bill_short", "bill_long"],
            "size": ["size_small", "size_large"],
        },
        ["albatross", "gull", "tern"],
    )


def small_schema(n_features=8, n_groups=3, n_classes=2):
    group_of = [f % n_groups for f in range(n_features)]
    return FeatureSchema(
        tuple(f"f{i}" for i in range(n_features)),
        tuple(group_of),
        tuple(f"c{i}" for i in range(n_classes)),
    )


@st.composite
def conjunctions(draw, n_features=8, max_size=3, schema=None):
    """Conjunctions free of same-group literals when ``schema`` is given."""
    feats = draw(st.lists(st.integers(0, n_features - 1), min_size=1, max_size=max_size, unique=True))
    if schema is not None:
        by_group = {}
        for f in feats:
            by_group.setdefault(schema.group_of[f], f)
        feats = list(by_group.values())
    u = draw(st.floats(0.0, 1.0, allow_nan=False))
    return Conjunction(tuple(feats), u)


@st.composite
def rules(draw, n_features=8, class_index=0, max_conj=3, schema=None):
    conj = draw(st.lists(conjunctions(n_features, schema=schema), min_size=1, max_size=max_conj))
    u = draw(st.floats(0.0, 1.0, allow_nan=False))
    return DnfRule(class_index, tuple(conj), u)


def unit_vectors(n):
    return st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=n, max_size=n).map(np.array)


# acceptance criteria register here; the summary prints one line per criterion
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
