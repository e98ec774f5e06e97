import csv
import itertools
import math

import numpy as np
import pytest

from resptree.selection import TreeConfig
from resptree.simulation import (
    MODEL5_TREE, REFERENCE_SUMMARIES, gen_sim_data, p_model, quartile_bins, replicate_seeds, run_comparison,
    six_number_summary, propensity_summary, true_propensity,
)


def test_model4_diagonal_is_half():
    for v in (36, 50, 100):
        assert p_model(4, (v, v, 7, 0, 2, 1)) == 0.5


def test_model1_at_origin():
    assert p_model(1, (0, 0, 0, 55, 0, 0)) == pytest.approx(1 / (1 + math.exp(-0.003)), abs=1e-15)
    assert p_model(1, (0, 0, 0, 0, 0, 0)) == pytest.approx(0.500750, abs=1e-6)


def test_model2_at_origin():
    assert p_model(2, (0, 0, 0, 0, 0, 0)) == 0.5


def test_model5_default_tree_leaves():
    assert p_model(5, (0, 50, 50, 50, 0, 1)) == 0.90
    assert p_model(5, (10, 50, 50, 50, 0, 0)) == 0.21
    assert p_model(5, (40, 50, 50, 50, 0, 0)) == 0.65
    assert p_model(5, (90, 50, 50, 50, 0, 0)) == 0.51
    override = {"column": "x2", "threshold": 50, "left": {"p": 0.1}, "right": {"p": 0.2}}
    assert p_model(5, (0, 51, 0, 0, 0, 0), tree5=override) == 0.2


@pytest.mark.parametrize("x", [(101, 0, 0, 0, 0, 0), (0, -1, 0, 0, 0, 0), (0, 0, 2.5, 0, 0, 0),
                               (0, 0, 0, 0, 5, 0), (0, 0, 0, 0, 0, 2)])
def test_out_of_domain(x):
    with pytest.raises(ValueError):
        p_model(1, x)


def test_unknown_model():
    with pytest.raises(ValueError):
        p_model(6, (0, 0, 0, 0, 0, 0))


def test_c1_mean():
    ds, _, _ = gen_sim_data(1, 1_000_000, 3)
    assert abs(ds["c1"].mean() - 0.8) <= 0.004


def test_model1_propensity_summary():
    row = propensity_summary(1, 100_000, seed=0)
    assert all(abs(a - b) <= 0.02 for a, b in zip(row, REFERENCE_SUMMARIES[1]))


def test_generation_reproducible():
    a = gen_sim_data(2, 500, 9)
    b = gen_sim_data(2, 500, 9)
    assert a[0].equals(b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(gen_sim_data(2, 500, 10)[1], a[1])


def test_propensities_inside_unit_interval():
    rng = np.random.default_rng(0)
    n = 1_000_000
    X = {c: rng.integers(0, 101, n).astype(float) for c in ("x1", "x2", "x3", "x4")}
    X["c1"] = rng.integers(0, 5, n).astype(float)
    X["c2"] = rng.integers(0, 2, n).astype(float)
    corners = list(itertools.product((0, 100), (0, 100), (0, 100), (0, 100), (0, 4), (0, 1)))
    for k, c in enumerate(("x1", "x2", "x3", "x4", "c1", "c2")):
        X[c] = np.concatenate([X[c], [float(v[k]) for v in corners]])
    for m in range(1, 6):
        p = true_propensity(m, X)
        assert ((p > 0) & (p < 1)).all(), m


def test_quartile_bins_partition():
    rng = np.random.default_rng(1)
    for n in (4, 7, 500, 501):
        p = rng.choice([0.2, 0.5, 0.7, 0.9], size=n)
        bins = quartile_bins(p)
        sizes = np.bincount(bins, minlength=4)
        assert sizes.sum() == n and sizes.max() - sizes.min() <= 3
        # bins are ordered by p
        for q in range(3):
            if sizes[q] and sizes[q + 1]:
                assert p[bins == q].max() <= p[bins == q + 1].min()


def test_six_number_summary():
    assert six_number_summary(np.array([1.0, 2.0, 3.0, 4.0, 5.0])) == (1.0, 2.0, 3.0, 3.0, 4.0, 5.0)


def test_replicate_seeds_distinct():
    seeds = {replicate_seeds(7, i) for i in range(200)}
    assert len(seeds) == 200
    assert replicate_seeds(7, 3) == replicate_seeds(7, 3)


def test_single_replicate_report(tmp_path):
    rep = run_comparison(5, replicates=1, n=500, seed=2)
    assert len(rep.replicates) == 1 and not rep.failures
    r = rep.replicates[0]
    assert sorted(np.unique(r.bins).tolist()) == [0, 1, 2, 3]
    sizes = np.bincount(r.bins)
    assert sizes.sum() == 500 and sizes.max() - sizes.min() <= 3
    for m in ("logistic", "tree"):
        e = r.errors[m]
        assert e.shape == (500,) and ((e > -1) & (e < 1)).all()
    files = rep.write_csv(tmp_path)
    with open(files[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 and sum(int(x["count"]) for x in rows) == 1000
    with open(files[1]) as fh:
        assert next(csv.reader(fh)) == ["model", "min", "q1", "median", "mean", "q3", "max"]


def test_determinism_under_parallelism():
    serial = run_comparison(1, replicates=4, n=300, seed=11)
    parallel = run_comparison(1, replicates=4, n=300, seed=11, n_jobs=2)
    for a, b in zip(serial.replicates, parallel.replicates):
        assert a.index == b.index
        for m in ("logistic", "tree"):
            assert np.array_equal(a.errors[m], b.errors[m])


def test_fresh_evaluation_changes_records():
    a = run_comparison(1, replicates=1, n=300, seed=5)
    b = run_comparison(1, replicates=1, n=300, seed=5, fresh_eval=True)
    assert not np.array_equal(a.replicates[0].p, b.replicates[0].p)


def test_failures_are_counted():
    with pytest.raises(RuntimeError, match="replicates failed"):
        run_comparison(1, replicates=2, n=100, seed=1, config=TreeConfig(columns=("nope",)))


def test_bad_arguments():
    with pytest.raises(ValueError):
        run_comparison(1, replicates=0)
    with pytest.raises(ValueError):
        run_comparison(9, replicates=1)


def test_model5_default_tree_is_documented_shape():
    leaves = []

    def walk(nd):
        if "p" in nd:
            leaves.append(nd["p"])
        else:
            walk(nd["left"])
            walk(nd["right"])

    walk(MODEL5_TREE)
    assert sorted(leaves) == [0.21, 0.51, 0.65, 0.90]
