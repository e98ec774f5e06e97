"""Independent brute-force reimplementations used as test oracles.

Nothing here calls into the library's search or CV code; only the data
containers are shared.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from resptree.data import ColumnSchema, Dataset


def reduction(nl, sl, nr, sr):
    # same arithmetic expression as the library, written out independently
    n = nl + nr
    d = sl / nl - sr / nr
    return (nl * nr / n) * d * d


def exhaustive_best_split(ds: Dataset, columns, min_leaf: int, target=None):
    """Every threshold and every category subset; returns (best reduction, list of rules)."""
    target = target or ds.response
    y = [float(v) for v in ds[target]]
    n = len(y)
    best, rules = None, []
    for name in columns:
        col = ds.column_schema(name)
        x = list(ds[name])
        cands = []
        if col.kind == "nominal":
            present = sorted(set(int(v) for v in x))
            for r in range(1, len(present)):
                for sub in itertools.combinations(present, r):
                    if present[0] not in sub:
                        continue
                    cands.append(("subset", frozenset(sub), [int(v) in sub for v in x]))
        else:
            vals = sorted(set(float(v) for v in x))
            for a, b in zip(vals, vals[1:]):
                t = (a + b) / 2
                cands.append(("threshold", t, [float(v) <= t for v in x]))
        for kind, key, left in cands:
            nl = sum(left)
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = sum(v for v, g in zip(y, left) if g)
            sr = sum(v for v, g in zip(y, left) if not g)
            red = reduction(nl, sl, nr, sr)
            if red <= 0:
                continue
            if best is None or red > best:
                best, rules = red, [(name, kind, key)]
            elif red == best:
                rules.append((name, kind, key))
    return best, rules


def straight_line_cv_k1(x: list[float], y: list[float], folds: list[int], min_leaf_fn):
    """Fold errors e_j for k=0 and k=1 trees on one numeric feature.

    The k=1 tree uses the best midpoint threshold on the fold's training rows,
    found by looping over every candidate.
    """
    n = len(y)
    e0, e1 = [], []
    for j in range(10):
        train = [i for i in range(n) if folds[i] != j]
        test = [i for i in range(n) if folds[i] == j]
        ml = min_leaf_fn(len(train))
        mean = sum(y[i] for i in train) / len(train)
        e0.append(10.0 / n * sum((y[i] - mean) ** 2 for i in test))
        vals = sorted(set(x[i] for i in train))
        best, best_t = None, None
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            L = [i for i in train if x[i] <= t]
            R = [i for i in train if x[i] > t]
            if len(L) < ml or len(R) < ml:
                continue
            red = reduction(len(L), sum(y[i] for i in L), len(R), sum(y[i] for i in R))
            if red > 0 and (best is None or red > best):
                best, best_t = red, t
        if best is None:
            e1.append(e0[-1])
            continue
        L = [i for i in train if x[i] <= best_t]
        R = [i for i in train if x[i] > best_t]
        mL = sum(y[i] for i in L) / len(L)
        mR = sum(y[i] for i in R) / len(R)
        e1.append(10.0 / n * sum((y[i] - (mL if x[i] <= best_t else mR)) ** 2 for i in test))
    return e0, e1


def ceil_pow(n: int) -> int:
    """Least m with m**8 >= n**5, by integer search."""
    m = 1
    while m**8 < n**5:
        m += 1
    return m


def random_dataset(rng: np.random.Generator, n: int, n_cols: int, max_arity: int = 6) -> Dataset:
    """Mixed-kind columns plus a binary response ``R``."""
    schema, cols = [], {}
    kinds = ["numeric", "ordinal", "nominal", "binary"]
    for c in range(n_cols):
        kind = kinds[int(rng.integers(len(kinds)))]
        name = f"v{c}"
        if kind == "numeric":
            schema.append(ColumnSchema(name, kind))
            cols[name] = rng.integers(0, 12, n).astype(float) if rng.random() < 0.5 else np.round(rng.normal(size=n), 2)
        elif kind == "binary":
            schema.append(ColumnSchema(name, kind))
            cols[name] = (rng.random(n) < 0.5).astype(float)
        else:
            k = int(rng.integers(2, max_arity + 1))
            schema.append(ColumnSchema(name, kind, tuple(f"L{i}" for i in range(k))))
            cols[name] = rng.integers(0, k, n)
    schema.append(ColumnSchema("R", "binary"))
    cols["R"] = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(float)
    return Dataset(schema, cols, response="R")


def binomial_se(mu: float, count: int) -> float:
    return math.sqrt(mu * (1 - mu) / count)
