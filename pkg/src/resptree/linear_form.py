"""Linear representations of a fitted tree and frozen-structure refits.

A tree with ``k`` splits can be written two ways:

* split form: an intercept plus one coefficient per split, each attached to
  the conjunction of conditions that reaches the split's node and takes its
  designated ("on") branch; a record's value is the intercept plus the
  coefficients of every term it satisfies;
* cell form: one mean per leaf, with the leaf's path conjunction as the cell
  indicator.

Each split's "on" branch is the child with the lower fitted mean (the right
child on ties), so the intercept is the mean of the cell reached by always
taking the higher branch and most coefficients read as decrements.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .data import Dataset
from .tree import Node, SplitRule, TreeModel

Literal = tuple[SplitRule, bool]  # (rule, satisfied-side is left)


@dataclass(frozen=True)
class SplitTerm:
    node_id: int
    order: int
    literals: tuple[Literal, ...]
    description: str
    coefficient: float
    std_error: float


@dataclass(frozen=True)
class Cell:
    id: int
    node_id: int
    literals: tuple[Literal, ...]
    description: str
    mu: float
    count: int
    std_error: float

    @property
    def empty(self) -> bool:
        return self.count == 0


def _literal_masks(tree: TreeModel, literals: Sequence[Literal], X: Mapping[str, np.ndarray], n: int):
    mask = np.ones(n, dtype=bool)
    for rule, left in literals:
        hit = rule.goes_left(X[rule.column], tree.column_schema(rule.column))
        mask &= hit if left else ~hit
    return mask


@dataclass
class CellForm:
    """Cell means over mutually exclusive, exhaustive tree cells."""

    tree: TreeModel
    target: str
    cells: list[Cell]

    @property
    def empty_cells(self) -> list[int]:
        return [c.id for c in self.cells if c.empty]

    def indicators(self, data, rows=None) -> np.ndarray:
        """Cell membership matrix, shape (n, number of cells)."""
        X, n = self.tree._matrix(data, rows)
        return np.column_stack([_literal_masks(self.tree, c.literals, X, n) for c in self.cells])

    def assign(self, data) -> np.ndarray:
        """Cell id per record."""
        ind = self.indicators(data)
        hits = ind.sum(axis=1)
        if not (hits == 1).all():
            raise AssertionError("cell predicates are not a partition for these records")
        ids = np.array([c.id for c in self.cells])
        return ids[ind.argmax(axis=1)]

    def evaluate(self, data) -> np.ndarray:
        mu = np.array([c.mu for c in self.cells])
        ids = self.assign(data)
        return mu[ids - 1]

    def rows(self) -> list[dict]:
        return [
            {"cell": c.id, "description": c.description, "count": c.count,
             "mu": c.mu, "std_error": c.std_error}
            for c in self.cells
        ]

    def to_csv(self, path: str | Path) -> None:
        _write_rows(path, self.rows(), ["cell", "description", "count", "mu", "std_error"])


@dataclass
class SplitForm:
    """Intercept plus one coefficient per split."""

    tree: TreeModel
    target: str
    intercept: float
    intercept_se: float
    terms: list[SplitTerm] = field(default_factory=list)

    def evaluate(self, data, rows=None) -> np.ndarray:
        X, n = self.tree._matrix(data, rows)
        out = np.full(n, self.intercept)
        for t in self.terms:
            out = out + np.where(_literal_masks(self.tree, t.literals, X, n), t.coefficient, 0.0)
        return out

    def rows(self) -> list[dict]:
        out = [{"split": "1", "coefficient": self.intercept, "std_error": self.intercept_se}]
        out += [{"split": t.description, "coefficient": t.coefficient, "std_error": t.std_error}
                for t in self.terms]
        return out

    def to_csv(self, path: str | Path) -> None:
        _write_rows(path, self.rows(), ["split", "coefficient", "std_error"])


def _write_rows(path, rows: list[dict], header: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _on_left(tree: TreeModel, nd: Node) -> bool:
    return tree.nodes[nd.left].mean < tree.nodes[nd.right].mean


def _base_leaf(tree: TreeModel, node_id: int) -> int:
    nd = tree.nodes[node_id]
    while not nd.is_leaf:
        nd = tree.nodes[nd.right if _on_left(tree, nd) else nd.left]
    return nd.id


def _path_literals(tree: TreeModel, node_id: int) -> tuple[Literal, ...]:
    return tuple((p.rule, left) for p, left in tree.path(node_id))


def _describe(tree: TreeModel, literals: Sequence[Literal]) -> str:
    if not literals:
        return "all"
    return " and ".join(r.describe(tree.column_schema(r.column), left) for r, left in literals)


def _build(tree: TreeModel, target: str, stats: Mapping[int, tuple[float, int, float]]):
    cells = []
    for i, leaf in enumerate(tree.leaves, start=1):
        mu, count, se = stats[leaf.id]
        lits = _path_literals(tree, leaf.id)
        cells.append(Cell(i, leaf.id, lits, _describe(tree, lits), mu, count, se))
    cell_form = CellForm(tree, target, cells)

    base = _base_leaf(tree, 0)
    terms = []
    for nd in tree.splits():
        on_left = _on_left(tree, nd)
        on, off = (nd.left, nd.right) if on_left else (nd.right, nd.left)
        a, b = stats[_base_leaf(tree, on)], stats[_base_leaf(tree, off)]
        lits = _path_literals(tree, nd.id) + ((nd.rule, on_left),)
        terms.append(SplitTerm(nd.id, nd.rule.order, lits, _describe(tree, lits),
                               a[0] - b[0], math.hypot(a[2], b[2])))
    split_form = SplitForm(tree, target, stats[base][0], stats[base][2], terms)
    return split_form, cell_form


def _leaf_stats(tree: TreeModel, y: np.ndarray, leaf_ids: np.ndarray, binary: bool):
    stats = {}
    for leaf in tree.leaves:
        v = y[leaf_ids == leaf.id]
        m = v.size
        if m == 0:
            stats[leaf.id] = (math.nan, 0, math.nan)
            continue
        mu = float(v.mean())
        if binary:
            se = math.sqrt(mu * (1 - mu) / m)
        else:
            se = float(v.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
        stats[leaf.id] = (mu, m, se)
    return stats


def _fit_stats(tree: TreeModel):
    binary = tree.column_schema(tree.target).kind == "binary"
    stats = {}
    for leaf in tree.leaves:
        m, mu = leaf.count, leaf.mean
        if binary:
            se = math.sqrt(mu * (1 - mu) / m)
        else:
            se = math.sqrt(leaf.sse / (m - 1) / m) if m > 1 else math.nan
        stats[leaf.id] = (mu, m, se)
    return stats


def to_split_form(tree: TreeModel) -> SplitForm:
    return _build(tree, tree.target, _fit_stats(tree))[0]


def to_cell_form(tree: TreeModel) -> CellForm:
    return _build(tree, tree.target, _fit_stats(tree))[1]


def refit(
    structure: TreeModel | CellForm | SplitForm,
    dataset: Dataset,
    target: str | None = None,
) -> tuple[SplitForm, CellForm]:
    """Re-estimate both forms' coefficients on ``dataset`` with the splits frozen.

    ``target`` may be the response or any numeric outcome column. Cells with
    no records get ``count == 0`` and NaN coefficients; coefficients that
    depend on them are NaN as well.
    """
    tree = structure if isinstance(structure, TreeModel) else structure.tree
    target = target or tree.target
    col = dataset.column_schema(target)
    leaf_ids = tree.apply(dataset)
    stats = _leaf_stats(tree, dataset[target], leaf_ids, col.kind == "binary")
    return _build(tree, target, stats)


def cell_assign(form: CellForm, record: Mapping[str, Any]) -> int:
    """Id of the single cell whose predicate ``record`` satisfies."""
    return int(form.assign(record)[0])


def comparison_rows(forms: Sequence[SplitForm], labels: Sequence[str]) -> list[dict]:
    """Side-by-side split coefficients of forms sharing one structure."""
    rows = []
    for i, row in enumerate(forms[0].rows()):
        out = {"split": row["split"]}
        for lab, f in zip(labels, forms):
            out[lab] = f.rows()[i]["coefficient"]
        rows.append(out)
    return rows


def write_comparison(path: str | Path, forms: Sequence[SplitForm], labels: Sequence[str]) -> None:
    _write_rows(path, comparison_rows(forms, labels), ["split", *labels])
