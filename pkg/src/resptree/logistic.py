"""Logistic-regression propensity model fitted by iteratively reweighted least squares.

Terms are built from dataset columns: nominal columns enter as one-hot
indicators dropping the first level, ordinal columns as their integer level
rank, numeric and binary columns as they are (optionally log-transformed).
Interactions are elementwise products of their factors' encodings.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .data import ColumnSchema, Dataset, SchemaError

MAX_ITER = 25
GRAD_TOL = 1e-8
RIDGE = 1e-10
SEPARATION_BOUND = 30.0


class LogisticFitError(ValueError):
    pass


class RankDeficientError(LogisticFitError):
    pass


class SeparationError(LogisticFitError):
    pass


@dataclass(frozen=True)
class TermSpec:
    """One model term.

    ``kind`` is ``intercept``, ``main``, ``interaction`` (2 or 3 columns),
    ``quadratic`` (square of one numeric column) or ``transform`` (a
    transformed numeric column). ``transform="log"`` applies to every numeric
    column of the term.
    """

    kind: str
    columns: tuple[str, ...] = ()
    transform: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        arity = {"intercept": (0, 0), "main": (1, 1), "quadratic": (1, 1),
                 "transform": (1, 1), "interaction": (2, 3)}
        if self.kind not in arity:
            raise ValueError(f"unknown term kind {self.kind!r}")
        lo, hi = arity[self.kind]
        if not lo <= len(self.columns) <= hi:
            raise ValueError(f"{self.kind} term takes {lo}..{hi} columns, got {self.columns}")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError(f"repeated column in term {self.columns}")
        if self.kind == "transform" and self.transform is None:
            raise ValueError("transform term needs a transform")
        if self.transform not in (None, "log"):
            raise ValueError(f"unknown transform {self.transform!r}")

    @property
    def label(self) -> str:
        if self.kind == "intercept":
            return "(Intercept)"
        names = [f"{self.transform}({c})" if self.transform else c for c in self.columns]
        if self.kind == "quadratic":
            return f"{names[0]}^2"
        return ":".join(names)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "columns": list(self.columns)}
        if self.transform:
            d["transform"] = self.transform
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TermSpec":
        return cls(d["kind"], tuple(d.get("columns", ())), d.get("transform"))


INTERCEPT = TermSpec("intercept")


def _factor_block(col: ColumnSchema, x: np.ndarray, transform: str | None) -> tuple[np.ndarray, list[str]]:
    if col.kind == "nominal":
        levels = col.levels[1:]
        block = np.column_stack([(x == i + 1).astype(float) for i in range(len(levels))])
        return block, [f"{col.name}[{lv}]" for lv in levels]
    if col.kind == "ordinal":
        return x.astype(float)[:, None], [col.name]
    if transform == "log" and col.kind == "numeric":
        if (x <= 0).any():
            raise LogisticFitError(f"log transform of {col.name} needs strictly positive values")
        return np.log(x)[:, None], [f"log({col.name})"]
    return x.astype(float)[:, None], [col.name]


def term_block(term: TermSpec, schema: Mapping[str, ColumnSchema], data: Mapping[str, np.ndarray], n: int):
    """Design columns and column names contributed by one term."""
    if term.kind == "intercept":
        return np.ones((n, 1)), ["(Intercept)"]
    cols = []
    for c in term.columns:
        if c not in schema:
            raise SchemaError(f"unknown column {c}")
        cols.append(schema[c])
    if term.kind == "quadratic":
        if cols[0].kind != "numeric":
            raise LogisticFitError(f"quadratic term needs a numeric column, {cols[0].name} is {cols[0].kind}")
        b, names = _factor_block(cols[0], data[cols[0].name], term.transform)
        return b * b, [f"{names[0]}^2"]
    if term.kind == "transform" and cols[0].kind != "numeric":
        raise LogisticFitError(f"transform needs a numeric column, {cols[0].name} is {cols[0].kind}")
    block, names = np.ones((n, 1)), [""]
    for col in cols:
        b, nm = _factor_block(col, data[col.name], term.transform)
        block = (block[:, :, None] * b[:, None, :]).reshape(n, -1)
        names = [f"{a}:{z}" if a else z for a in names for z in nm]
    return block, names


def design_matrix(dataset: Dataset, terms: Sequence[TermSpec]):
    """Stack the term blocks; returns (X, column names, owning term index per column)."""
    schema = {c.name: c for c in dataset.schema}
    data = {c.name: dataset[c.name] for c in dataset.schema}
    blocks, names, owner = [], [], []
    for i, t in enumerate(terms):
        b, nm = term_block(t, schema, data, dataset.n)
        blocks.append(b)
        names += nm
        owner += [i] * len(nm)
    return np.hstack(blocks), names, np.asarray(owner)


# -- likelihood -----------------------------------------------------------


def expit(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_likelihood(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``beta``."""
    return X.T @ (y - expit(X @ beta))


@dataclass
class LogisticModel:
    terms: list[TermSpec]
    names: list[str]
    coef: np.ndarray
    std_errors: np.ndarray
    deviance: float
    aic: float
    iterations: int
    grad_norm: float
    converged: bool
    ridge_used: bool
    n: int
    schema: tuple[ColumnSchema, ...]
    target: str
    deviance_path: list[float] = field(default_factory=list)

    def linear_predictor(self, data) -> np.ndarray:
        if isinstance(data, Mapping):
            data = [data]
        if not isinstance(data, Dataset):
            data = Dataset.from_records(self.schema, [_complete(self.schema, r) for r in data])
        X, _, _ = design_matrix(data, self.terms)
        return X @ self.coef

    def predict(self, data) -> np.ndarray:
        return expit(self.linear_predictor(data))

    def report(self) -> dict:
        return {
            "target": self.target,
            "n": self.n,
            "terms": [t.to_dict() for t in self.terms],
            "coefficients": [
                {"name": nm, "estimate": float(b), "std_error": float(s)}
                for nm, b, s in zip(self.names, self.coef, self.std_errors)
            ],
            "deviance": self.deviance,
            "aic": self.aic,
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "gradient_max_norm": self.grad_norm,
                "ridge_used": self.ridge_used,
            },
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.report(), fh, indent=2)
            fh.write("\n")


def _complete(schema, rec: Mapping) -> dict:
    # columns the model does not use may be absent from a record
    out = dict(rec)
    for c in schema:
        if c.name not in out:
            out[c.name] = c.levels[0] if c.categorical else 0.0
    return out


def predict_logistic(model: LogisticModel, record: Mapping[str, Any]) -> float:
    return float(model.predict(record)[0])


def _collinear_columns(Xs: np.ndarray) -> list[int]:
    r = np.abs(np.diag(np.linalg.qr(Xs, mode="r")))
    if r.size == 0:
        return []
    return [i for i, v in enumerate(r) if v <= 1e-8 * r.max()]


def _irls(Xs: np.ndarray, y: np.ndarray, beta: np.ndarray, max_iter: int, tol: float):
    n = y.shape[0]
    ridge_used = False
    eta = Xs @ beta
    dev = -2.0 * float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    path = [dev]
    it = 0
    converged = False
    grad_norm = math.inf
    H = None
    for it in range(max_iter + 1):
        mu = expit(eta)
        grad = Xs.T @ (y - mu)
        grad_norm = float(np.abs(grad).max()) / n
        w = mu * (1.0 - mu)
        H = Xs.T @ (w[:, None] * Xs)
        if grad_norm < tol:
            converged = True
            break
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(H, grad)
            if not np.isfinite(step).all():
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            ridge_used = True
            step = np.linalg.solve(H + RIDGE * np.eye(H.shape[0]), grad)
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            eta_c = Xs @ cand
            dev_c = -2.0 * float(np.sum(y * eta_c - np.logaddexp(0.0, eta_c)))
            if dev_c <= dev:
                break
            t *= 0.5
        else:
            converged = grad_norm < math.sqrt(tol)
            break
        beta, eta, dev = cand, eta_c, dev_c
        path.append(dev)
        if np.abs(beta).max() > SEPARATION_BOUND:
            raise SeparationError("coefficients diverge: data are (quasi-)completely separated")
    return beta, dev, path, it, grad_norm, converged, ridge_used, H


def _fit_design(X, y, names, terms, owner, init=None, max_iter=MAX_ITER, tol=GRAD_TOL):
    n, p = X.shape
    if n <= p:
        raise LogisticFitError(f"need more rows ({n}) than coefficients ({p})")
    scale = X.std(axis=0)
    is_const = scale == 0
    scale[is_const] = np.abs(X[0, is_const])
    scale[scale == 0] = 1.0
    Xs = X / scale
    bad = _collinear_columns(Xs)
    if bad:
        culprits = sorted({terms[owner[i]].label for i in bad})
        raise RankDeficientError(f"design is rank deficient; collinear terms: {', '.join(culprits)}")
    if init is None:
        beta = np.zeros(p)
        icpt = [i for i, nm in enumerate(names) if nm == "(Intercept)"]
        if icpt:
            ybar = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
            beta[icpt[0]] = math.log(ybar / (1 - ybar)) / scale[icpt[0]]
    else:
        beta = init * scale
    beta, dev, path, it, gnorm, conv, ridge, H = _irls(Xs, y, beta, max_iter, tol)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(H)
    se = np.sqrt(np.clip(np.diag(cov), 0, None)) / scale
    return beta / scale, se, dev, path, it, gnorm, conv, ridge


def fit_logistic(
    dataset: Dataset,
    terms: Sequence[TermSpec],
    target: str | None = None,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
) -> LogisticModel:
    """Maximum-likelihood logistic fit of ``target`` on ``terms``.

    IRLS with step-halving; converged when the max-norm of the
    log-likelihood gradient per observation (on the internally rescaled
    design) falls below ``tol`` or after ``max_iter`` iterations, in which
    case ``converged`` is False and a warning is issued.
    """
    target = target or dataset.response
    if target is None:
        raise SchemaError("no target column")
    terms = list(terms)
    X, names, owner = design_matrix(dataset, terms)
    y = dataset[target].astype(float)
    coef, se, dev, path, it, gnorm, conv, ridge = _fit_design(X, y, names, terms, owner,
                                                             max_iter=max_iter, tol=tol)
    if not conv:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return LogisticModel(terms, names, coef, se, dev, dev + 2 * len(coef), it, gnorm, conv, ridge,
                         dataset.n, dataset.schema, target, path)


# -- stepwise selection ---------------------------------------------------


def _factors(t: TermSpec, schema: Mapping[str, ColumnSchema]) -> frozenset:
    return frozenset((c, t.transform if schema[c].kind == "numeric" else None) for c in t.columns)


def stepwise_select(
    dataset: Dataset,
    scope: Sequence[TermSpec],
    target: str | None = None,
    max_steps: int = 200,
) -> LogisticModel:
    """Bidirectional stepwise AIC search starting from the intercept-only model.

    Each step tries adding every scope term whose lower-order terms (from the
    scope) are all in the model, and dropping every term no other model term
    depends on; the candidate with the lowest AIC is taken if it beats the
    current AIC. Ties go to the lower scope index. Candidates whose fit fails
    are skipped with a warning.
    """
    target = target or dataset.response
    scope = list(scope)
    if INTERCEPT not in scope:
        raise ValueError("scope must include the intercept")
    schema = {c.name: c for c in dataset.schema}
    data = {c.name: dataset[c.name] for c in dataset.schema}
    y = dataset[target].astype(float)
    n = dataset.n

    blocks: dict[int, tuple[np.ndarray, list[str]]] = {}
    usable = []
    for i, t in enumerate(scope):
        try:
            blocks[i] = term_block(t, schema, data, n)
            usable.append(i)
        except (LogisticFitError, SchemaError) as exc:
            warnings.warn(f"skipping term {t.label}: {exc}", RuntimeWarning, stacklevel=2)
    facs = {i: _factors(scope[i], schema) for i in usable}
    subterms = {
        i: [j for j in usable if scope[i].kind == "interaction" and scope[j].kind != "quadratic"
            and scope[j].kind != "intercept" and facs[j] < facs[i]]
        for i in usable
    }
    icpt = scope.index(INTERCEPT)

    def fit(members: list[int], init: dict | None):
        members = sorted(members)
        X = np.hstack([blocks[i][0] for i in members])
        names = [nm for i in members for nm in blocks[i][1]]
        owner = np.concatenate([[k] * len(blocks[i][1]) for k, i in enumerate(members)]).astype(int)
        start = None
        if init is not None:
            start = np.concatenate([init.get(i, np.zeros(len(blocks[i][1]))) for i in members])
        coef, se, dev, path, it, gnorm, conv, ridge = _fit_design(
            X, y, names, [scope[i] for i in members], owner, init=start)
        by_term, pos = {}, 0
        for i in members:
            w = len(blocks[i][1])
            by_term[i] = coef[pos:pos + w]
            pos += w
        return members, names, coef, se, dev, path, it, gnorm, conv, ridge, by_term

    current = fit([icpt], None)
    cur_aic = current[4] + 2 * len(current[2])
    for _ in range(max_steps):
        members = set(current[0])
        best = None
        for i in usable:
            if i == icpt:
                continue
            if i in members:
                if any(i in subterms[j] for j in members):
                    continue
                trial = members - {i}
            else:
                if any(j not in members for j in subterms[i]):
                    continue
                trial = members | {i}
            try:
                res = fit(sorted(trial), current[10])
            except LogisticFitError as exc:
                warnings.warn(f"skipping candidate {scope[i].label}: {exc}", RuntimeWarning, stacklevel=2)
                continue
            aic = res[4] + 2 * len(res[2])
            if best is None or aic < best[0]:
                best = (aic, res)
        if best is None or not best[0] < cur_aic:
            break
        cur_aic, current = best
    members, names, coef, se, dev, path, it, gnorm, conv, ridge, _ = current
    return LogisticModel([scope[i] for i in members], names, coef, se, dev, cur_aic, it, gnorm, conv,
                         ridge, n, dataset.schema, target, path)


def full_scope(columns: Sequence[str], quadratic: Sequence[str] = ()) -> list[TermSpec]:
    """Intercept, main effects, all pairwise interactions and the given quadratics."""
    scope = [INTERCEPT]
    scope += [TermSpec("main", (c,)) for c in columns]
    scope += [TermSpec("interaction", pair) for pair in itertools.combinations(columns, 2)]
    scope += [TermSpec("quadratic", (c,)) for c in quadratic]
    return scope


def load_terms(path: str | Path) -> list[TermSpec]:
    with open(path, encoding="utf-8") as fh:
        return [TermSpec.from_dict(d) for d in json.load(fh)]
