"""Ten-fold cross-validation of the number of splits and the stopping rule."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .tree import TreeModel, grow_tree

N_FOLDS = 10


class ZeroBaselineVariance(ValueError):
    """The response is constant, so relative errors are undefined."""


@dataclass(frozen=True)
class TreeConfig:
    """Growth settings shared by CV and the final fit.

    ``min_leaf=None`` derives the minimum leaf size from each training
    sample's own size (fold-training size inside CV).
    """

    k_max: int = 20
    min_leaf: int | None = None
    columns: tuple[str, ...] | None = None


@dataclass
class CVTrace:
    """Per-``k`` cross-validation record.

    ``fold_errors[k, j]`` is ``10/n * sum over fold j of (R_i - p_j(x_i))**2``
    for the tree with ``k`` splits grown without fold ``j``.
    """

    fold_errors: np.ndarray
    epsilon_sq: np.ndarray
    r_sq: np.ndarray
    sigma: np.ndarray
    alpha_sq_0: float
    r_bar: float
    n: int
    seed: int
    folds: np.ndarray

    @property
    def k_max(self) -> int:
        return self.fold_errors.shape[0] - 1

    @property
    def estimates(self) -> np.ndarray:
        return self.r_sq

    def check_identities(self, atol: float = 1e-12) -> bool:
        e = self.fold_errors
        eps = e.mean(axis=1)
        sig = np.sqrt(((e - eps[:, None]) ** 2).sum(axis=1) / (9.0 * self.alpha_sq_0))
        return (
            np.allclose(eps, self.epsilon_sq, rtol=0, atol=atol)
            and np.allclose(eps / self.alpha_sq_0, self.r_sq, rtol=0, atol=atol)
            and np.allclose(sig, self.sigma, rtol=0, atol=atol)
        )

    def table(self) -> list[tuple[int, float, float]]:
        return [(k, float(self.r_sq[k]), float(self.sigma[k])) for k in range(self.k_max + 1)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["split", "estimate", "std_error"])
            for k, est, se in self.table():
                w.writerow([k, repr(est), repr(se)])


@dataclass
class SelectionResult:
    k_selected: int
    trace: CVTrace
    model: TreeModel


def assign_folds(n: int, seed: int, n_folds: int = N_FOLDS) -> np.ndarray:
    """Fold label per row: a seeded shuffle dealt round-robin, sizes differ by <= 1."""
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % n_folds
    return folds


def cv_trace(
    dataset: Dataset,
    config: TreeConfig | None = None,
    k_max: int | None = None,
    seed: int = 0,
) -> CVTrace:
    """Cross-validated relative prediction error for ``k = 0..k_max`` splits.

    Folds are drawn once and reused for every ``k``. Because growth is
    best-first, the ``k``-split tree of a fold is the ``k``-split prefix of
    that fold's fully grown tree, so each fold is grown once.
    """
    config = config or TreeConfig()
    k_max = config.k_max if k_max is None else k_max
    n = dataset.n
    if n < 2 * N_FOLDS:
        raise ValueError(f"cross-validation needs n >= {2 * N_FOLDS}, got {n}")
    y = dataset.y
    r_bar = float(y.mean())
    alpha_sq_0 = float(np.mean((y - r_bar) ** 2))
    if alpha_sq_0 == 0:
        raise ZeroBaselineVariance("zero baseline variance: the response is constant")

    folds = assign_folds(n, seed)
    errors = np.empty((k_max + 1, N_FOLDS))
    for j in range(N_FOLDS):
        test = np.flatnonzero(folds == j)
        train = np.flatnonzero(folds != j)
        tree = grow_tree(dataset, k_max, config.min_leaf, config.columns, rows=train)
        pred = tree.predict_prefixes(dataset, k_max, rows=test)
        errors[:, j] = (N_FOLDS / n) * ((y[test][None, :] - pred) ** 2).sum(axis=1)

    eps = errors.mean(axis=1)
    sigma = np.sqrt(((errors - eps[:, None]) ** 2).sum(axis=1) / (9.0 * alpha_sq_0))
    return CVTrace(errors, eps, eps / alpha_sq_0, sigma, alpha_sq_0, r_bar, n, seed, folds)


def select_k(trace) -> int:
    """Number of splits chosen by the one-standard-deviation rule.

    Scanning ``k = 0, 1, ...``, stop at the first ``k`` whose successor fails
    to change the relative error estimate by at least its own standard error
    (``|r(k+1) - r(k)| < sigma(k+1)``) and return ``k``. ``trace`` is a
    :class:`CVTrace` or a sequence of ``(estimate, std_error)`` rows.
    """
    if isinstance(trace, CVTrace):
        est, se = trace.r_sq, trace.sigma
    else:
        rows = np.asarray(trace, dtype=float).reshape(-1, 2)
        est, se = rows[:, 0], rows[:, 1]
    if len(est) < 2:
        return 0
    for k in range(len(est) - 1):
        if abs(est[k + 1] - est[k]) < se[k + 1]:
            return k
    return len(est) - 1


def fit_with_selection(
    dataset: Dataset,
    config: TreeConfig | None = None,
    seed: int = 0,
) -> SelectionResult:
    """Cross-validate, pick ``k`` and grow the final ``k``-split tree on all rows."""
    config = config or TreeConfig()
    trace = cv_trace(dataset, config, seed=seed)
    k = select_k(trace)
    model = grow_tree(dataset, k, config.min_leaf, config.columns)
    return SelectionResult(k, trace, model)
