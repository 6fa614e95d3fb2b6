import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentsql.metrics import (
    MetricScores,
    R_VES_VALUES,
    aggregate,
    cell_equal,
    exec_match,
    r_ves,
    round_pct,
    soft_f1,
)
from agentsql.sqlexec import ResultTable


def table(rows, width=None):
    if width is None:
        width = len(rows[0]) if rows else 1
    cols = tuple(f"c{i}" for i in range(width))
    return ResultTable(columns=cols, rows=tuple(tuple(r) for r in rows))


# --- exec_match -----------------------------------------------------------

def brute_force_match(gold: ResultTable, pred: ResultTable) -> int:
    """Independent oracle: exact multiset equality over row tuples."""
    if len(gold.columns) != len(pred.columns):
        return 0
    return int(Counter(gold.rows) == Counter(pred.rows))


def synthetic_pairs(n=250, seed=7):
    """Discrete-valued pairs (ints / short strings / None) so exact multiset
    equality is a valid oracle."""
    rng = random.Random(seed)
    values = [0, 1, 2, -5, "a", "bb", None, "x"]
    pairs = []
    for _ in range(n):
        width = rng.randint(1, 3)
        rows = [tuple(rng.choice(values) for _ in range(width)) for _ in range(rng.randint(0, 5))]
        kind = rng.random()
        if kind < 0.4:
            pred_rows = list(rows)
            rng.shuffle(pred_rows)
        elif kind < 0.6 and rows:
            pred_rows = rows + [rows[0]]  # duplicate a row
        elif kind < 0.8:
            pred_rows = [tuple(rng.choice(values) for _ in range(width)) for _ in rows]
        else:
            pred_rows = rows[:-1] if rows else [("a",) * width]
        pairs.append((table(rows, width), table(pred_rows, width)))
    return pairs


def test_exec_match_against_brute_force_oracle():
    pairs = synthetic_pairs()
    assert len(pairs) >= 200
    for gold, pred in pairs:
        assert exec_match(gold, pred) == brute_force_match(gold, pred)


def test_exec_match_order_insensitive():
    assert exec_match(table([(1, "a"), (2, "b")]), table([(2, "b"), (1, "a")])) == 1


def test_exec_match_duplicates_matter():
    assert exec_match(table([(1,)]), table([(1,), (1,)])) == 0


def test_exec_match_disjoint():
    assert exec_match(table([(1,)]), table([(2,)])) == 0


def test_exec_match_numeric_tolerance():
    assert exec_match(table([(1,)]), table([(1.0,)])) == 1
    assert exec_match(table([(1,)]), table([(1.1,)])) == 0


def test_exec_match_column_count():
    assert exec_match(table([(1,)], width=1), table([(1, 2)], width=2)) == 0


def test_cell_equal_semantics():
    assert cell_equal(None, None)
    assert not cell_equal(None, "")
    assert not cell_equal(None, 0)
    assert cell_equal(2, 2.0)
    assert cell_equal(1000, 1001) is False
    assert cell_equal(1_000_000, 1_000_000.5)  # within 1e-6 relative
    assert cell_equal("x", "x")
    assert not cell_equal("x", "X")


# --- soft F1 --------------------------------------------------------------

# (gold rows, pred rows, tp, fp, fn, f1) under canonical-sort-then-zip
# pairing with per-row multiset cell matching.
SOFT_F1_CORPUS = [
    ([], [], 0, 0, 0, 1.0),
    ([(1,)], [(1,)], 1, 0, 0, 1.0),
    ([(1,)], [(2,)], 0, 1, 1, 0.0),
    ([(1,)], [], 0, 0, 1, 0.0),
    ([], [(1,)], 0, 1, 0, 0.0),
    ([("a", 1), ("b", 2)], [("a", 1), ("b", 3)], 3, 1, 1, 0.75),
    ([(1, 2)], [(2, 1)], 2, 0, 0, 1.0),
    ([(1,)], [(1,), (1,)], 1, 1, 0, 2 / 3),
    ([(1,), (2,)], [(2,), (1,)], 2, 0, 0, 1.0),
    ([(None,)], [(None,)], 1, 0, 0, 1.0),
    ([(None,)], [("",)], 0, 1, 1, 0.0),
    ([(1, "x")], [(1, "y")], 1, 1, 1, 0.5),
    ([(1, 2, 3)], [(1, 2, 3)], 3, 0, 0, 1.0),
    ([(1, 2, 3)], [(3, 2, 1)], 3, 0, 0, 1.0),
    ([(1.0,)], [(1,)], 1, 0, 0, 1.0),
    ([(0.3333333,)], [(0.3333333000003,)], 1, 0, 0, 1.0),
    ([(1,), (2,), (3,)], [(1,)], 1, 0, 2, 0.5),
    ([(1, 2), (3, 4)], [], 0, 0, 4, 0.0),
    ([("a", "b")], [("b", "a")], 2, 0, 0, 1.0),
    ([(1, 1)], [(1, 2)], 1, 1, 1, 0.5),
    ([(1, 1)], [(1, 1)], 2, 0, 0, 1.0),
    ([(1,), (5,)], [(2,), (5,)], 1, 1, 1, 0.5),
    ([(1, 2), (3, 4)], [(3, 4)], 0, 2, 4, 0.0),
    ([("x",)], [("X",)], 0, 1, 1, 0.0),
    ([(2,), (2,)], [(2,)], 1, 0, 1, 2 / 3),
]


@pytest.mark.parametrize("gold,pred,tp,fp,fn,f1", SOFT_F1_CORPUS)
def test_soft_f1_hand_labeled(gold, pred, tp, fp, fn, f1):
    width = max((len(r) for r in gold + pred), default=1)
    counts = soft_f1(table(gold, width), table(pred, width))
    assert (counts.tp, counts.fp, counts.fn) == (tp, fp, fn)
    assert counts.f1 == pytest.approx(f1)


def test_soft_f1_corpus_size():
    assert len(SOFT_F1_CORPUS) == 25


def test_identical_tables_perfect():
    t = table([(1, "a"), (2, "b")])
    counts = soft_f1(t, t)
    assert counts.precision == counts.recall == counts.f1 == 1


# --- R-VES ----------------------------------------------------------------

R_VES_GRID = {
    0.1: 0.25,
    0.249: 0.25,
    0.25: 0.5,
    0.49: 0.5,
    0.5: 0.75,
    0.99: 0.75,
    1.0: 1.0,
    1.99: 1.0,
    2.0: 1.25,
    10: 1.25,
}


@pytest.mark.parametrize("tau,expected", sorted(R_VES_GRID.items()))
def test_r_ves_boundary_grid(tau, expected):
    assert r_ves(1, tau) == expected


def test_r_ves_incorrect_is_zero():
    assert r_ves(0) == 0.0


def test_r_ves_correct_requires_tau():
    with pytest.raises(ValueError):
        r_ves(1, None)


# --- properties -----------------------------------------------------------

cells = st.one_of(st.integers(-3, 3), st.sampled_from(["a", "b", ""]), st.none())


@st.composite
def tables_pair(draw):
    width = draw(st.integers(1, 3))
    rows = lambda: draw(st.lists(st.tuples(*[cells] * width), max_size=4))
    return table(rows(), width), table(rows(), width)


@settings(max_examples=200, deadline=None)
@given(tables_pair())
def test_exec_match_symmetry_and_reflexivity(pair):
    a, b = pair
    assert exec_match(a, b) == exec_match(b, a)
    assert exec_match(a, a) == 1
    assert exec_match(b, b) == 1


@settings(max_examples=200, deadline=None)
@given(tables_pair())
def test_soft_f1_bounds_and_exact_match_implication(pair):
    gold, pred = pair
    counts = soft_f1(gold, pred)
    assert 0 <= counts.f1 <= 1
    if exec_match(gold, pred) == 1:
        assert counts.f1 == 1


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.001, max_value=100), st.floats(min_value=0.001, max_value=100))
def test_r_ves_image_and_monotonicity(t1, t2):
    assert r_ves(1, t1) in R_VES_VALUES
    lo, hi = sorted([t1, t2])
    assert r_ves(1, lo) <= r_ves(1, hi)


# --- aggregate ------------------------------------------------------------

def ms(ex=0, f1=0.0, rv=0.0, diff="unlabeled"):
    return MetricScores(ex=ex, soft_f1=f1, r_ves=rv, difficulty=diff)


def test_aggregate_simple_mean():
    summary = aggregate([ms(ex=1), ms(ex=1), ms(ex=1), ms(ex=0)])
    assert summary.ex_pct == 75.0


def test_aggregate_all_zero():
    summary = aggregate([ms(), ms(), ms()])
    assert summary.ex_pct == summary.soft_f1_pct == summary.r_ves_pct == 0.0


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_reference_summation():
    rng = random.Random(3)
    scores = [
        ms(ex=rng.randint(0, 1), f1=rng.random(), rv=rng.choice([0, 0.25, 0.5, 0.75, 1.0, 1.25]),
           diff=rng.choice(["simple", "moderate", "hard"]))
        for _ in range(500)
    ]
    summary = aggregate(scores, stratify=True)
    # Oracle: independent one-pass mean.
    total_ex = total_f1 = total_rv = 0.0
    for s in scores:
        total_ex += s.ex
        total_f1 += s.soft_f1
        total_rv += s.r_ves
    n = len(scores)
    assert summary.ex_pct == round_pct(total_ex / n)
    assert summary.soft_f1_pct == round_pct(total_f1 / n)
    assert summary.r_ves_pct == round_pct(total_rv / n)
    assert sum(b["count"] for b in summary.by_difficulty.values()) == n


def test_table1_formatting_262_of_500():
    scores = [ms(ex=1) for _ in range(262)] + [ms(ex=0) for _ in range(238)]
    assert aggregate(scores).ex_pct == 52.4


def test_round_pct_half_up():
    assert round_pct(0.52449) == 52.4
    assert round_pct(0.5245) == 52.5
    assert round_pct(0.125, decimals=0) == 13.0
