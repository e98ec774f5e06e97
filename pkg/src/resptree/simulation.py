"""Tree-versus-logistic comparison on five known response-propensity models.

Every data set has six features: ``x1..x4`` uniform on the integers 0..100,
``c1 ~ Binomial(4, 0.2)`` (ordinal) and ``c2 ~ Bernoulli(0.3)``. Responses are
Bernoulli draws with the model's propensity.

Replicate ``r`` of a study with master seed ``s`` draws all of its randomness
from ``np.random.SeedSequence(s, spawn_key=(r,))``, so results do not depend
on how replicates are scheduled.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import ColumnSchema, Dataset
from .logistic import full_scope, stepwise_select
from .selection import TreeConfig, fit_with_selection

FEATURES = ("x1", "x2", "x3", "x4", "c1", "c2")
NUMERIC = ("x1", "x2", "x3", "x4")
SCHEMA = (
    *(ColumnSchema(c, "numeric") for c in NUMERIC),
    ColumnSchema("c1", "ordinal", tuple(str(i) for i in range(5))),
    ColumnSchema("c2", "binary"),
    ColumnSchema("R", "binary"),
)
METHODS = ("logistic", "tree")

# piecewise-constant propensity for model 5, non-monotone in x1 when c2 = 0;
# leaf shares under the feature distribution: 0.21 -> 0.111, 0.65 -> 0.381,
# 0.51 -> 0.208, 0.90 -> 0.3
MODEL5_TREE = {
    "column": "c2", "threshold": 0.5,
    "left": {
        "column": "x1", "threshold": 15.5,
        "left": {"p": 0.21},
        "right": {"column": "x1", "threshold": 70.5, "left": {"p": 0.65}, "right": {"p": 0.51}},
    },
    "right": {"p": 0.90},
}


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def _eval_tree(node: Mapping, X: Mapping[str, np.ndarray]) -> np.ndarray:
    n = len(X["x1"])
    out = np.empty(n)
    stack = [(node, np.arange(n))]
    while stack:
        nd, rows = stack.pop()
        if "column" not in nd:
            out[rows] = nd["p"]
            continue
        left = X[nd["column"]][rows] <= nd["threshold"]
        stack.append((nd["left"], rows[left]))
        stack.append((nd["right"], rows[~left]))
    return out


def true_propensity(model_id: int, X: Mapping[str, np.ndarray], tree5: Mapping | None = None) -> np.ndarray:
    """Vectorized propensity of model ``model_id`` at feature columns ``X``."""
    x1, x2, x3 = (np.asarray(X[c], dtype=float) for c in ("x1", "x2", "x3"))
    c1, c2 = np.asarray(X["c1"], dtype=float), np.asarray(X["c2"], dtype=float)
    if model_id == 1:
        return _logistic(0.003 * (1 + 3 * x1 - 2 * x2 + 3 * x3))
    if model_id == 2:
        return _logistic(1e-4 * (x1 + 2 * x2 - 3 * x3 - x1 * x2 + 2 * x1 * x3 + x3**2))
    if model_id == 3:
        return _logistic(1e-4 * (c1 * x2 * x3 - x1 * x2 + 2 * x1 * x3 + c2 * x3**2))
    if model_id == 4:
        return np.where(x1 > 35, _logistic(0.01 * (x1 - x2)), _logistic(0.01 * (2 * x1 + x2)))
    if model_id == 5:
        return _eval_tree(tree5 or MODEL5_TREE, {"x1": x1, "x2": x2, "x3": x3,
                                                 "x4": np.asarray(X["x4"], float), "c1": c1, "c2": c2})
    raise ValueError(f"model id must be 1..5, got {model_id}")


def p_model(model_id: int, x: Sequence[float] | Mapping[str, float], tree5: Mapping | None = None) -> float:
    """Propensity of one feature vector ``(x1, x2, x3, x4, c1, c2)``."""
    if not isinstance(x, Mapping):
        if len(x) != 6:
            raise ValueError("feature vector needs six components (x1, x2, x3, x4, c1, c2)")
        x = dict(zip(FEATURES, x))
    for c in NUMERIC:
        v = x[c]
        if not (0 <= v <= 100 and float(v).is_integer()):
            raise ValueError(f"{c} must be an integer in [0, 100], got {v}")
    if x["c1"] not in (0, 1, 2, 3, 4):
        raise ValueError(f"c1 must be in 0..4, got {x['c1']}")
    if x["c2"] not in (0, 1):
        raise ValueError(f"c2 must be 0 or 1, got {x['c2']}")
    return float(true_propensity(model_id, {k: np.array([x[k]]) for k in FEATURES}, tree5)[0])


def _draw_features(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    X = {c: rng.integers(0, 101, size=n).astype(float) for c in NUMERIC}
    X["c1"] = rng.binomial(4, 0.2, size=n)
    X["c2"] = (rng.random(n) < 0.3).astype(float)
    return X


def gen_sim_data(model_id: int, n: int, seed, tree5: Mapping | None = None):
    """Draw ``n`` records; returns ``(dataset, true propensities, responses)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = _draw_features(rng, n)
    p = true_propensity(model_id, X, tree5)
    r = (rng.random(n) < p).astype(float)
    ds = Dataset(SCHEMA, {**X, "R": r}, response="R")
    ds.true_propensity = p
    return ds, p, r


def six_number_summary(p: np.ndarray) -> tuple[float, ...]:
    """(min, 1st quartile, median, mean, 3rd quartile, max)."""
    q1, med, q3 = np.quantile(p, [0.25, 0.5, 0.75])
    return float(p.min()), float(q1), float(med), float(p.mean()), float(q3), float(p.max())


def quartile_bins(p: np.ndarray) -> np.ndarray:
    """Quartile bin (0..3) of each record by rank of ``p``; bin sizes differ by <= 1."""
    n = p.shape[0]
    bins = np.empty(n, dtype=np.int64)
    bins[np.argsort(p, kind="stable")] = (np.arange(n) * 4) // n
    return bins


def box_stats(e: np.ndarray) -> dict:
    """Boxplot summary with whiskers at the most extreme points within 1.5 IQR."""
    if e.size == 0:
        return {"count": 0}
    q1, med, q3 = np.quantile(e, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    inside = e[(e >= q1 - 1.5 * iqr) & (e <= q3 + 1.5 * iqr)]
    return {
        "count": int(e.size),
        "mean": float(e.mean()),
        "mean_abs": float(np.abs(e).mean()),
        "q1": float(q1), "median": float(med), "q3": float(q3),
        "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
        "outliers": int(e.size - inside.size),
    }


@dataclass
class ReplicateResult:
    index: int
    p: np.ndarray
    bins: np.ndarray
    errors: dict[str, np.ndarray]
    k_selected: int
    n_terms: int


@dataclass
class SimReport:
    model_id: int
    n: int
    seed: int
    replicates: list[ReplicateResult]
    failures: list[tuple[int, str]] = field(default_factory=list)

    def pooled(self, method: str) -> np.ndarray:
        return np.concatenate([r.errors[method] for r in self.replicates])

    def mean_abs_error(self, method: str) -> float:
        return float(np.abs(self.pooled(method)).mean())

    def p_summary(self) -> tuple[float, ...]:
        return six_number_summary(np.concatenate([r.p for r in self.replicates]))

    def quartile_summary(self) -> list[dict]:
        bins = np.concatenate([r.bins for r in self.replicates])
        rows = []
        for method in METHODS:
            e = self.pooled(method)
            for q in range(4):
                rows.append({"method": method, "quartile": q + 1, **box_stats(e[bins == q])})
        return rows

    def write_csv(self, directory: str | Path) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        fields = ["method", "quartile", "count", "mean", "mean_abs", "q1", "median", "q3",
                  "whisker_low", "whisker_high", "outliers"]
        out = [d / "error_quartiles.csv", d / "p_summary.csv", d / "replicates.csv"]
        with open(out[0], "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for row in self.quartile_summary():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        with open(out[1], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "min", "q1", "median", "mean", "q3", "max"])
            w.writerow([self.model_id, *(f"{v:.6f}" for v in self.p_summary())])
        with open(out[2], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "k_selected", "logistic_terms",
                        "logistic_mean_abs", "tree_mean_abs"])
            for r in self.replicates:
                w.writerow([r.index, r.k_selected, r.n_terms,
                            repr(float(np.abs(r.errors["logistic"]).mean())),
                            repr(float(np.abs(r.errors["tree"]).mean()))])
            for idx, msg in self.failures:
                w.writerow([idx, "failed", msg, "", ""])
        return out


def replicate_seeds(seed: int, index: int) -> tuple[int, int, int]:
    """(data seed, fold seed, evaluation seed) of one replicate."""
    a, b, c = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(3, dtype=np.uint64)
    return int(a), int(b), int(c)


SIM_SCOPE = full_scope(FEATURES, quadratic=NUMERIC)


def run_replicate(model_id: int, n: int, seed: int, index: int,
                  config: TreeConfig | None = None, fresh_eval: bool = False,
                  tree5: Mapping | None = None) -> ReplicateResult:
    data_seed, fold_seed, eval_seed = replicate_seeds(seed, index)
    ds, p, _ = gen_sim_data(model_id, n, data_seed, tree5)
    tree = fit_with_selection(ds, config or TreeConfig(), seed=fold_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        logit = stepwise_select(ds, SIM_SCOPE)
    if fresh_eval:
        ds, p, _ = gen_sim_data(model_id, n, eval_seed, tree5)
    errors = {"logistic": logit.predict(ds) - p, "tree": tree.model.predict(ds) - p}
    return ReplicateResult(index, p, quartile_bins(p), errors, tree.k_selected, len(logit.terms))


def _run_one(args):
    model_id, n, seed, index, config, fresh_eval, tree5 = args
    try:
        return run_replicate(model_id, n, seed, index, config, fresh_eval, tree5)
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        return (index, f"{type(exc).__name__}: {exc}")


def run_comparison(
    model_id: int,
    replicates: int = 100,
    n: int = 500,
    seed: int = 0,
    config: TreeConfig | None = None,
    fresh_eval: bool = False,
    tree5: Mapping | None = None,
    n_jobs: int = 1,
) -> SimReport:
    """Fit both estimators on ``replicates`` simulated data sets and collect p-hat minus p.

    Errors are evaluated on each replicate's own records unless
    ``fresh_eval`` is set, in which case a new draw of the same size is used.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if model_id not in (1, 2, 3, 4, 5):
        raise ValueError(f"model id must be 1..5, got {model_id}")
    jobs = [(model_id, n, seed, i, config, fresh_eval, tree5) for i in range(replicates)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, replicates // (4 * n_jobs))))
    else:
        results = [_run_one(j) for j in jobs]
    done = [r for r in results if isinstance(r, ReplicateResult)]
    failed = [r for r in results if not isinstance(r, ReplicateResult)]
    if not done:
        raise RuntimeError(f"all {replicates} replicates failed; first error: {failed[0][1]}")
    return SimReport(model_id, n, seed, done, failed)


def propensity_summary(model_id: int, n: int = 100_000, seed: int = 0, tree5: Mapping | None = None) -> tuple[float, ...]:
    """Six-number summary of the true propensity over ``n`` simulated records."""
    _, p, _ = gen_sim_data(model_id, n, seed, tree5)
    return six_number_summary(p)


# published six-number summaries (min, q1, median, mean, q3, max) of p per model
REFERENCE_SUMMARIES = {
    1: (0.36, 0.58, 0.65, 0.64, 0.71, 0.86),
    2: (0.28, 0.52, 0.61, 0.63, 0.73, 0.95),
    3: (0.27, 0.48, 0.53, 0.55, 0.61, 0.97),
    4: (0.35, 0.52, 0.60, 0.60, 0.68, 0.85),
    5: (0.21, 0.51, 0.65, 0.65, 0.90, 0.90),
}
