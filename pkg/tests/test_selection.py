import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import straight_line_cv_k1
from resptree.data import ColumnSchema, Dataset, SyntheticSpec, generate_synthetic
from resptree.selection import (
    CVTrace, TreeConfig, ZeroBaselineVariance, assign_folds, cv_trace, fit_with_selection, select_k,
)
from resptree.tree import grow_tree, min_leaf_size

# (estimate, standard error) rows as published; the split-8 row is absent
TRACE_LARGE = [
    (1.0000035, 0.002957722), (0.9635960, 0.002878444), (0.9557780, 0.002895847),
    (0.9490003, 0.002861895), (0.9448612, 0.002879159), (0.9411233, 0.002881512),
    (0.9377399, 0.002861368), (0.9354613, 0.002863227), (0.9345158, 0.002864500),
    (0.9327541, 0.002864051), (0.9319742, 0.002867013), (0.9303069, 0.002870322),
]
TRACE_SMALL = [
    (1.0002935, 0.03239150), (0.9634402, 0.03024989), (0.9441707, 0.02935236),
    (0.9385307, 0.02916412), (0.9263617, 0.02840939), (0.9257025, 0.02833990),
    (0.9258469, 0.02834133),
]

COLUMNS = [
    {"name": "a", "kind": "numeric", "dist": {"type": "uniform", "low": 0, "high": 1}},
    {"name": "b", "kind": "numeric", "dist": {"type": "uniform_int", "low": 0, "high": 9}},
    {"name": "c", "kind": "nominal", "levels": ["p", "q", "r", "s"], "dist": {"type": "categorical"}},
]


def _data(n, seed, propensity):
    return generate_synthetic(SyntheticSpec(n, seed, COLUMNS, propensity))


def test_large_trace_stop():
    assert select_k(TRACE_LARGE) == 6


def test_small_trace_stop():
    assert select_k(TRACE_SMALL) == 1


def test_no_improvement_stops_at_zero():
    assert select_k([(1.0, 0.01), (1.0, 0.01), (0.5, 0.01)]) == 0


def test_short_trace():
    assert select_k([(1.0, 0.1)]) == 0
    assert select_k([]) == 0


def test_tie_continues():
    # |delta| == sigma is not a failure to improve
    assert select_k([(1.0, 0.0), (0.75, 0.25), (0.7, 0.25)]) == 1


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0.5, 1.1), st.floats(0.0, 0.1)), min_size=2, max_size=12),
       st.floats(1.0, 5.0))
def test_selection_monotone_in_sigma(rows, factor):
    inflated = [(e, s * factor) for e, s in rows]
    assert select_k(inflated) <= select_k(rows)


def test_fold_assignment():
    for n in (20, 37, 1000, 1003):
        f = assign_folds(n, seed=4)
        sizes = np.bincount(f, minlength=10)
        assert sizes.max() - sizes.min() <= 1 and sizes.sum() == n
    assert np.array_equal(assign_folds(100, 1), assign_folds(100, 1))


def test_straight_line_fold_errors():
    rng = np.random.default_rng(17)
    schema = [ColumnSchema("x", "numeric"), ColumnSchema("R", "binary")]
    for seed in range(5):
        x = rng.integers(0, 10, 20).astype(float)
        y = (rng.random(20) < np.where(x > 4, 0.8, 0.2)).astype(float)
        if y.min() == y.max():
            continue
        ds = Dataset(schema, {"x": x, "R": y}, response="R")
        trace = cv_trace(ds, TreeConfig(k_max=1), seed=seed)
        e0, e1 = straight_line_cv_k1(list(x), list(y), list(trace.folds), min_leaf_size)
        assert np.allclose(trace.fold_errors[0], e0, rtol=0, atol=1e-12)
        assert np.allclose(trace.fold_errors[1], e1, rtol=0, atol=1e-12)


def test_identities_and_determinism():
    ds = _data(2000, 3, {"type": "logistic", "intercept": -1.0, "coefficients": {"a": 2.0, "b": 0.1}})
    t1 = cv_trace(ds, seed=9)
    t2 = cv_trace(ds, seed=9)
    assert t1.check_identities(1e-12)
    assert np.array_equal(t1.fold_errors, t2.fold_errors)
    assert (t1.fold_errors >= 0).all() and (t1.sigma >= 0).all()
    assert abs(t1.r_bar - ds.y.mean()) < 1e-15


def test_r0_near_one():
    for seed in range(5):
        ds = _data(1000, seed, {"type": "constant", "value": 0.7})
        assert 0.9 <= cv_trace(ds, k_max=0, seed=seed).r_sq[0] <= 1.1


def test_zero_baseline_variance():
    ds = _data(100, 1, {"type": "constant", "value": 1.0})
    with pytest.raises(ZeroBaselineVariance, match="zero baseline variance"):
        cv_trace(ds)


def test_too_small_for_cv():
    ds = _data(19, 1, {"type": "constant", "value": 0.5})
    with pytest.raises(ValueError):
        cv_trace(ds)


def test_trace_csv(tmp_path):
    ds = _data(500, 2, {"type": "constant", "value": 0.5})
    t = cv_trace(ds, k_max=3, seed=1)
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "split,estimate,std_error" and len(lines) == 5
    assert isinstance(t, CVTrace) and t.k_max == 3


def test_k_max_zero_selection():
    ds = _data(500, 2, {"type": "constant", "value": 0.5})
    res = fit_with_selection(ds, TreeConfig(k_max=0), seed=1)
    assert res.k_selected == 0 and res.model.k == 0


def test_final_tree_nested():
    tree = {"column": "a", "threshold": 0.5, "left": {"p": 0.2},
            "right": {"column": "b", "threshold": 4, "left": {"p": 0.9}, "right": {"p": 0.6}}}
    ds = _data(5000, 5, {"type": "tree", "tree": tree})
    res = fit_with_selection(ds, seed=3)
    assert res.k_selected >= 1
    for m in range(res.k_selected + 1):
        assert grow_tree(ds, m).to_dict() == res.model.prefix(m).to_dict()


def test_calibration_no_structure():
    zero = sum(
        fit_with_selection(_data(5000, seed, {"type": "constant", "value": 0.6}), seed=seed).k_selected == 0
        for seed in range(100)
    )
    assert zero >= 90


def test_calibration_planted_split():
    tree = {"column": "b", "threshold": 4, "left": {"p": 0.9}, "right": {"p": 0.5}}
    good = 0
    for seed in range(100):
        res = fit_with_selection(_data(5000, seed, {"type": "tree", "tree": tree}), seed=seed)
        good += res.k_selected == 1 and res.model.root.rule.column == "b"
    assert good >= 95
