"""Best-first recursive partitioning on within-node squared error.

Each step applies, among all current leaves, the feasible split with the
largest decrease in sum of squared errors. The ``j``-th split applied is
given ``order == j``, so the tree with the first ``k`` splits is a prefix of
the fully grown tree and trees are nested in ``k``.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .data import ColumnSchema, DataError, Dataset, SchemaError

FORMAT_NAME = "resptree-tree"
FORMAT_VERSION = 1

# nominal columns with at most this many levels present in a node fall back to
# full subset enumeration when the leaf-size constraint cuts off the best prefix
MAX_ENUMERATED_LEVELS = 16


def min_leaf_size(n: int) -> int:
    """Smallest leaf size allowed for a training sample of size ``n``: ceil(n**(5/8))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = math.ceil(n ** 0.625)
    # exact integer correction: m is the least integer with m**8 >= n**5
    while m > 1 and (m - 1) ** 8 >= n**5:
        m -= 1
    while m**8 < n**5:
        m += 1
    return m


@dataclass(frozen=True)
class SplitRule:
    """Binary split predicate; records satisfying it go to the left child.

    Threshold rules send ``x <= threshold`` left (ordinal columns compare level
    ranks). Subset rules send ``x in subset`` left.
    """

    column: str
    kind: str
    threshold: float | None = None
    subset: tuple[str, ...] | None = None
    order: int = 0

    def goes_left(self, x: np.ndarray, col: ColumnSchema) -> np.ndarray:
        if self.kind == "threshold":
            return x <= self.threshold
        codes = [col.code(v) for v in self.subset]
        return np.isin(x, codes)

    def describe(self, col: ColumnSchema, left: bool) -> str:
        name = self.column
        if self.kind == "subset":
            labels = ", ".join(self.subset)
            return f"{name} in {{{labels}}}" if left else f"{name} not in {{{labels}}}"
        t = self.threshold
        if col.kind == "binary":
            return f"{name} = {0 if left else 1}"
        if col.kind == "ordinal":
            if left:
                return f"{name} <= {col.levels[int(math.floor(t))]}"
            return f"{name} >= {col.levels[int(math.floor(t)) + 1]}"
        return f"{name} <= {t:g}" if left else f"{name} > {t:g}"

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"column": self.column, "kind": self.kind, "order": self.order}
        if self.kind == "threshold":
            d["threshold"] = self.threshold
        else:
            d["subset"] = list(self.subset)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitRule":
        subset = tuple(d["subset"]) if "subset" in d else None
        return cls(d["column"], d["kind"], d.get("threshold"), subset, int(d.get("order", 0)))


@dataclass(frozen=True)
class SplitCandidate:
    rule: SplitRule
    sse_reduction: float
    left_count: int
    right_count: int
    left_mean: float
    right_mean: float


@dataclass
class Node:
    id: int
    count: int
    mean: float
    sse: float
    parent: int | None = None
    rule: SplitRule | None = None
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


def sse_reduction(n_left, sum_left, n_right, sum_right):
    """Decrease in SSE from splitting a node into two children.

    Written as ``n_l n_r / n * (mean_l - mean_r)**2``, which equals
    ``SSE(parent) - SSE(left) - SSE(right)`` and stays nonnegative in
    floating point. Works elementwise on arrays.
    """
    n = n_left + n_right
    d = sum_left / n_left - sum_right / n_right
    return (n_left * n_right / n) * d * d


# -- split search -----------------------------------------------------------


def _scan_ordered(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best threshold split of one numeric/ordinal/binary column."""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cs = np.cumsum(y[order])
    total = cs[-1]
    n_left = np.arange(1, n, dtype=np.float64)
    ok = xs[1:] != xs[:-1]
    ok &= n_left >= min_leaf
    ok &= n - n_left >= min_leaf
    if not ok.any():
        return None
    idx = np.flatnonzero(ok)
    nl = n_left[idx]
    sl = cs[idx]
    red = sse_reduction(nl, sl, n - nl, total - sl)
    j = int(np.argmax(red))
    best = red[j]
    if not best > 0:
        return None
    i = idx[j]
    t = 0.5 * (xs[i] + xs[i + 1])
    if not xs[i] <= t < xs[i + 1]:
        t = xs[i]
    return float(best), float(t), int(nl[j]), float(sl[j]), float(total - sl[j])


def _canonical(subset: Sequence[int], present: Sequence[int]) -> tuple[int, ...]:
    # a partition and its mirror image are the same split; keep the side that
    # holds the smallest present code
    s = set(subset)
    if min(present) not in s:
        s = set(present) - s
    return tuple(sorted(s))


def _scan_nominal(x: np.ndarray, y: np.ndarray, n_levels: int, min_leaf: int):
    """Best subset split of one nominal column.

    Categories are ordered by within-node mean and only prefixes of that order
    are scanned; for squared error the unconstrained optimum is always such a
    prefix. When the leaf-size rule removes that optimum the subsets are
    enumerated instead (up to ``MAX_ENUMERATED_LEVELS`` present levels).
    """
    cnt = np.bincount(x, minlength=n_levels).astype(np.float64)
    sm = np.bincount(x, weights=y, minlength=n_levels)
    present = np.flatnonzero(cnt > 0)
    if present.size < 2:
        return None
    n = float(x.shape[0])
    total = float(sm[present].sum())
    means = sm[present] / cnt[present]
    order = present[np.lexsort((present, means))]
    cl = np.cumsum(cnt[order])[:-1]
    sl = np.cumsum(sm[order])[:-1]
    red = sse_reduction(cl, sl, n - cl, total - sl)
    ok = (cl >= min_leaf) & (n - cl >= min_leaf)
    best_all = red.max()
    if ok.any() and red[ok].max() >= best_all:
        best = best_all
        hits = np.flatnonzero(ok & (red == best))
        subsets = [_canonical(order[: i + 1].tolist(), present.tolist()) for i in hits]
        pick = min(range(len(hits)), key=lambda h: subsets[h])
        i = hits[pick]
        subset = subsets[pick]
        left_in_prefix = subset == tuple(sorted(order[: i + 1].tolist()))
        nl, s_l = (cl[i], sl[i]) if left_in_prefix else (n - cl[i], total - sl[i])
    elif present.size <= MAX_ENUMERATED_LEVELS:
        found = _enumerate_nominal(cnt, sm, present, n, total, min_leaf)
        if found is None:
            return None
        best, subset, nl, s_l = found
    else:
        if not ok.any():
            return None
        j = int(np.argmax(np.where(ok, red, -np.inf)))
        best = red[j]
        subset = _canonical(order[: j + 1].tolist(), present.tolist())
        left_in_prefix = subset == tuple(sorted(order[: j + 1].tolist()))
        nl, s_l = (cl[j], sl[j]) if left_in_prefix else (n - cl[j], total - sl[j])
    if not best > 0:
        return None
    return float(best), subset, int(nl), float(s_l), float(total - s_l)


def _enumerate_nominal(cnt, sm, present, n, total, min_leaf):
    m = present.size
    # first present level is pinned to the left side (canonical form)
    combos = np.arange(2 ** (m - 1) - 1, dtype=np.int64)
    bits = ((combos[:, None] >> np.arange(m - 1)) & 1).astype(np.float64)
    masks = np.hstack([np.ones((combos.size, 1)), bits])
    cl = masks @ cnt[present]
    sl = masks @ sm[present]
    ok = (cl >= min_leaf) & (n - cl >= min_leaf)
    if not ok.any():
        return None
    red = np.where(ok, sse_reduction(cl, sl, n - cl, total - sl), -np.inf)
    best = red.max()
    hits = np.flatnonzero(red == best)
    subsets = [tuple(present[masks[h] > 0].tolist()) for h in hits]
    pick = min(range(len(hits)), key=lambda h: subsets[h])
    h = hits[pick]
    return float(best), subsets[pick], cl[h], sl[h]


def _column_candidate(col: ColumnSchema, x: np.ndarray, y: np.ndarray, min_leaf: int):
    if col.kind == "nominal":
        found = _scan_nominal(x, y, len(col.levels), min_leaf)
        if found is None:
            return None
        red, codes, nl, sl, sr = found
        rule = SplitRule(col.name, "subset", subset=tuple(col.levels[c] for c in codes))
    else:
        found = _scan_ordered(x, y, min_leaf)
        if found is None:
            return None
        red, t, nl, sl, sr = found
        rule = SplitRule(col.name, "threshold", threshold=t)
    nr = x.shape[0] - nl
    return SplitCandidate(rule, red, nl, nr, sl / nl, sr / nr)


def _search(cols: Sequence[tuple[ColumnSchema, np.ndarray]], y: np.ndarray, min_leaf: int):
    if y.shape[0] < 2 * min_leaf or y.shape[0] < 2 or y.min() == y.max():
        return None
    best = None
    for col, x in cols:
        cand = _column_candidate(col, x, y, min_leaf)
        if cand is not None and (best is None or cand.sse_reduction > best.sse_reduction):
            best = cand
    return best


def _resolve_columns(dataset: Dataset, columns: Sequence[str] | None, target: str) -> list[str]:
    if columns is None:
        skip = {target, dataset.response, dataset.outcome}
        return [c.name for c in dataset.schema if c.name not in skip]
    for c in columns:
        dataset.column_schema(c)
    return list(columns)


def best_split(
    dataset: Dataset,
    rows: np.ndarray | None = None,
    columns: Sequence[str] | None = None,
    min_leaf: int = 1,
    target: str | None = None,
) -> SplitCandidate | None:
    """Best feasible split of ``rows`` (all rows by default) over ``columns``.

    Returns ``None`` when no split leaves both children with ``min_leaf`` rows
    and a positive SSE decrease. Ties go to the earliest column, then the
    smallest threshold or the lexicographically smallest subset.
    """
    target = target or dataset.response
    if target is None:
        raise SchemaError("no target column given and dataset has no response")
    names = _resolve_columns(dataset, columns, target)
    idx = np.arange(dataset.n) if rows is None else np.asarray(rows)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("row subset is empty")
    y = dataset[target][idx]
    cols = [(dataset.column_schema(c), dataset[c][idx]) for c in names]
    return _search(cols, y, min_leaf)


# -- the tree ---------------------------------------------------------------


@dataclass
class TreeModel:
    """A fitted tree. ``nodes[0]`` is the root; node ids are creation order."""

    nodes: list[Node]
    schema: tuple[ColumnSchema, ...]
    target: str
    min_leaf: int
    columns: tuple[str, ...]
    _col_by_name: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.schema = tuple(self.schema)
        self.columns = tuple(self.columns)
        self._col_by_name = {c.name: c for c in self.schema}

    @property
    def k(self) -> int:
        return sum(1 for nd in self.nodes if not nd.is_leaf)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def leaves(self) -> list[Node]:
        """Leaves in left-to-right order."""
        return [self.nodes[i] for i in self._dfs() if self.nodes[i].is_leaf]

    def _dfs(self) -> list[int]:
        out, stack = [], [0]
        while stack:
            i = stack.pop()
            out.append(i)
            nd = self.nodes[i]
            if not nd.is_leaf:
                stack.extend((nd.right, nd.left))
        return out

    def column_schema(self, name: str) -> ColumnSchema:
        return self._col_by_name[name]

    def splits(self) -> list[Node]:
        """Internal nodes sorted by split order."""
        return sorted((nd for nd in self.nodes if not nd.is_leaf), key=lambda nd: nd.rule.order)

    def prefix(self, k: int) -> "TreeModel":
        """The tree made of the first ``k`` splits."""
        k = max(0, min(k, self.k))
        keep = 1 + 2 * k
        nodes = []
        for nd in self.nodes[:keep]:
            internal = nd.rule is not None and nd.rule.order <= k
            nodes.append(
                Node(nd.id, nd.count, nd.mean, nd.sse, nd.parent,
                     nd.rule if internal else None,
                     nd.left if internal else None,
                     nd.right if internal else None)
            )
        return TreeModel(nodes, self.schema, self.target, self.min_leaf, self.columns)

    def path(self, node_id: int) -> list[tuple[Node, bool]]:
        """(ancestor, went_left) pairs from the root down to ``node_id``."""
        out = []
        nd = self.nodes[node_id]
        while nd.parent is not None:
            parent = self.nodes[nd.parent]
            out.append((parent, parent.left == nd.id))
            nd = parent
        return out[::-1]

    def describe_path(self, node_id: int) -> str:
        parts = [p.rule.describe(self.column_schema(p.rule.column), left) for p, left in self.path(node_id)]
        return " and ".join(parts) if parts else "all"

    def _matrix(self, data, rows=None) -> tuple[dict[str, np.ndarray], int]:
        if isinstance(data, Dataset):
            if rows is not None:
                return {c: data[c][rows] for c in self.columns}, len(rows)
            return {c: data[c] for c in self.columns}, data.n
        if isinstance(data, Mapping):
            data = [data]
        data = list(data)
        cols = {c: [] for c in self.columns}
        for rec in data:
            for c in self.columns:
                if c not in rec:
                    raise DataError(f"record is missing column {c}")
                cols[c].append(self._col_by_name[c].encode(rec[c]))
        return {c: np.asarray(v) for c, v in cols.items()}, len(data)

    def apply(self, data) -> np.ndarray:
        """Leaf node id reached by each record of a Dataset or record list."""
        X, n = self._matrix(data)
        where = np.zeros(n, dtype=np.int64)
        for nd in self.nodes:
            if nd.is_leaf:
                continue
            rows = np.flatnonzero(where == nd.id)
            if rows.size == 0:
                continue
            col = self._col_by_name[nd.rule.column]
            left = nd.rule.goes_left(X[nd.rule.column][rows], col)
            where[rows[left]] = nd.left
            where[rows[~left]] = nd.right
        return where

    def predict(self, data) -> np.ndarray:
        means = np.array([nd.mean for nd in self.nodes])
        return means[self.apply(data)]

    def predict_prefixes(self, data, k_max: int, rows=None) -> np.ndarray:
        """Predictions of ``prefix(k)`` for every ``k`` in ``0..k_max``; shape (k_max+1, n).

        ``rows`` selects records of a Dataset without copying it.
        """
        X, n = self._matrix(data, rows)
        out = np.empty((k_max + 1, n))
        born = {0: 0}
        for nd in self.nodes:
            if not nd.is_leaf:
                born[nd.left] = born[nd.right] = nd.rule.order
        rows_at = {0: np.arange(n)}
        for nd in self.nodes:
            rows = rows_at.pop(nd.id)
            end = k_max + 1 if nd.is_leaf else min(nd.rule.order, k_max + 1)
            if born[nd.id] < end:
                out[born[nd.id]:end, rows] = nd.mean
            if not nd.is_leaf:
                left = nd.rule.goes_left(X[nd.rule.column][rows], self._col_by_name[nd.rule.column])
                rows_at[nd.left] = rows[left]
                rows_at[nd.right] = rows[~left]
        return out

    # -- serialization

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "target": self.target,
            "min_leaf": self.min_leaf,
            "columns": list(self.columns),
            "schema": [c.to_dict() for c in self.schema],
            "nodes": [
                {
                    "id": nd.id, "count": nd.count, "mean": nd.mean, "sse": nd.sse,
                    "parent": nd.parent, "left": nd.left, "right": nd.right,
                    "rule": nd.rule.to_dict() if nd.rule else None,
                }
                for nd in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TreeModel":
        if d.get("format") != FORMAT_NAME:
            raise ValueError("not a tree model document")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported tree format version {d.get('version')}")
        nodes = [
            Node(e["id"], e["count"], e["mean"], e["sse"], e["parent"],
                 SplitRule.from_dict(e["rule"]) if e["rule"] else None, e["left"], e["right"])
            for e in d["nodes"]
        ]
        schema = [ColumnSchema.from_dict(c) for c in d["schema"]]
        return cls(nodes, schema, d["target"], d["min_leaf"], d["columns"])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "TreeModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def grow_tree(
    dataset: Dataset,
    k_max: int,
    min_leaf: int | None = None,
    columns: Sequence[str] | None = None,
    target: str | None = None,
    rows: np.ndarray | None = None,
) -> TreeModel:
    """Grow a tree best-first for at most ``k_max`` splits.

    ``min_leaf=None`` uses :func:`min_leaf_size` of the training size.
    ``rows`` restricts training to a subset of the dataset (used for CV folds).
    """
    target = target or dataset.response
    if target is None:
        raise SchemaError("no target column given and dataset has no response")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    names = _resolve_columns(dataset, columns, target)
    idx = np.arange(dataset.n) if rows is None else np.asarray(rows)
    if idx.size == 0:
        raise ValueError("cannot grow a tree on an empty dataset")
    if min_leaf is None:
        min_leaf = min_leaf_size(idx.size)
    y_all = dataset[target]
    schemas = [dataset.column_schema(c) for c in names]
    X_all = [dataset[c] for c in names]

    def make_node(node_id, rows, parent):
        y = y_all[rows]
        m = float(y.mean())
        return Node(node_id, int(rows.size), m, float(np.sum((y - m) ** 2)), parent)

    def candidate(rows):
        return _search([(s, x[rows]) for s, x in zip(schemas, X_all)], y_all[rows], min_leaf)

    nodes = [make_node(0, idx, None)]
    rows_of = {0: idx}
    heap: list = []

    def push(node_id):
        if k_max == 0:
            return
        cand = candidate(rows_of[node_id])
        if cand is not None:
            heapq.heappush(heap, (-cand.sse_reduction, node_id, cand))

    push(0)
    k = 0
    while heap and k < k_max:
        _, node_id, cand = heapq.heappop(heap)
        k += 1
        rule = SplitRule(cand.rule.column, cand.rule.kind, cand.rule.threshold, cand.rule.subset, k)
        rows = rows_of.pop(node_id)
        col = dataset.column_schema(rule.column)
        left = rule.goes_left(dataset[rule.column][rows], col)
        nd = nodes[node_id]
        nd.rule = rule
        nd.left, nd.right = len(nodes), len(nodes) + 1
        for child, sel in ((nd.left, left), (nd.right, ~left)):
            rows_of[child] = rows[sel]
            nodes.append(make_node(child, rows[sel], node_id))
        push(nd.left)
        push(nd.right)
    return TreeModel(nodes, dataset.schema, target, min_leaf, names)


def predict(tree: TreeModel, record: Mapping[str, Any]) -> float:
    """Mean response of the leaf reached by one record."""
    return float(tree.predict(record)[0])
