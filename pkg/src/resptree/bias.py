"""Respondent versus nonrespondent outcome gaps, overall and by tree cell.

An auxiliary outcome known for every sampled unit (a payroll-based wage
proxy, say) shows whether respondents differ from nonrespondents. Within a
response cell the propensity model treats the two groups as exchangeable, so
a persistent within-cell gap points to nonignorable nonresponse.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, Dataset
from .linear_form import CellForm

DEFAULT_SE_MULTIPLIER = 4.0
CSV_COLUMNS = (
    "cell", "predicate", "count", "response_rate", "respondent_mean",
    "nonrespondent_mean", "gap", "gap_se", "flag",
)


def _groups(dataset: Dataset, outcome: str, response: str) -> tuple[np.ndarray, np.ndarray]:
    if dataset.column_schema(response).kind != "binary":
        raise DataError(f"response column {response} must be binary")
    if dataset.column_schema(outcome).kind != "numeric":
        raise DataError(f"outcome column {outcome} must be numeric")
    return np.asarray(dataset[outcome], dtype=float), np.asarray(dataset[response]) == 1.0


def overall_gap(dataset: Dataset, outcome: str, response: str) -> tuple[float, float]:
    """Unweighted mean outcome of respondents and of nonrespondents.

    Raises
    ------
    DataError
        If either group is empty.
    """
    w, r = _groups(dataset, outcome, response)
    if not r.any():
        raise DataError("no respondents: respondent mean is undefined")
    if r.all():
        raise DataError("no nonrespondents: nonrespondent mean is undefined")
    return float(w[r].mean()), float(w[~r].mean())


@dataclass(frozen=True)
class CellGap:
    """Gap statistics for one cell; ``cell == 0`` is the overall row.

    Means of an empty group are NaN and ``undefined`` is set; such cells are
    never flagged.
    """

    cell: int
    predicate: str
    count: int
    respondents: int
    response_rate: float
    respondent_mean: float
    nonrespondent_mean: float
    gap: float
    gap_se: float
    flag: bool

    @property
    def undefined(self) -> bool:
        return math.isnan(self.gap)


def _mean_var(v: np.ndarray) -> tuple[float, float]:
    if v.size == 0:
        return math.nan, math.nan
    var = float(v.var(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), var


def _cell(cell: int, predicate: str, w: np.ndarray, r: np.ndarray) -> CellGap:
    m1, v1 = _mean_var(w[r])
    m0, v0 = _mean_var(w[~r])
    n1, n0 = int(r.sum()), int((~r).sum())
    gap = m1 - m0
    se = math.sqrt(v1 / n1 + v0 / n0) if n1 and n0 else math.nan
    rate = n1 / r.size if r.size else math.nan
    return CellGap(cell, predicate, int(r.size), n1, rate, m1, m0, gap, se, False)


@dataclass
class GapReport:
    """Per-cell gaps plus the overall row, with risk flags.

    A cell is flagged when its response rate is below the overall rate, its
    |gap| exceeds ``se_multiplier`` two-sample standard errors and, if a
    ``threshold`` is set, |gap| also exceeds it.
    """

    outcome: str
    response: str
    overall: CellGap
    cells: list[CellGap]
    threshold: float | None
    se_multiplier: float

    @property
    def flagged(self) -> list[int]:
        return [c.cell for c in self.cells if c.flag]

    def triples(self) -> list[tuple[float, float, float]]:
        """(response rate, respondent mean, nonrespondent mean) per cell."""
        return [(c.response_rate, c.respondent_mean, c.nonrespondent_mean) for c in self.cells]

    def rows(self) -> list[dict]:
        out = []
        for c in [*self.cells, self.overall]:
            out.append({
                "cell": "overall" if c.cell == 0 else c.cell,
                "predicate": c.predicate,
                "count": c.count,
                "response_rate": c.response_rate,
                "respondent_mean": c.respondent_mean,
                "nonrespondent_mean": c.nonrespondent_mean,
                "gap": c.gap,
                "gap_se": c.gap_se,
                "flag": int(c.flag),
            })
        return out

    def to_csv(self, path: str | Path) -> None:
        def fmt(v):
            if isinstance(v, float):
                return "NA" if math.isnan(v) else repr(v)
            return v

        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.rows():
                w.writerow([fmt(row[k]) for k in CSV_COLUMNS])


def cell_gaps(
    structure: CellForm,
    dataset: Dataset,
    outcome: str,
    response: str,
    threshold: float | None = None,
    se_multiplier: float = DEFAULT_SE_MULTIPLIER,
) -> GapReport:
    """Respondent/nonrespondent outcome gaps within each cell of ``structure``.

    Parameters
    ----------
    structure : CellForm
        Cells to compare within; only the predicates are used.
    dataset : Dataset
        Must carry the structure's split columns, ``outcome`` and ``response``.
    threshold : float, optional
        Minimum |gap| for a flag, on top of the standard-error rule.
    se_multiplier : float
        Number of two-sample standard errors |gap| must exceed.

    Returns
    -------
    GapReport
    """
    w, r = _groups(dataset, outcome, response)
    overall = _cell(0, "all", w, r)
    ids = structure.assign(dataset)
    cells = []
    for c in structure.cells:
        m = ids == c.id
        g = _cell(c.id, c.description, w[m], r[m])
        flag = (
            not g.undefined
            and g.response_rate < overall.response_rate
            and abs(g.gap) > se_multiplier * g.gap_se
            and (threshold is None or abs(g.gap) > threshold)
        )
        cells.append(CellGap(**{**g.__dict__, "flag": bool(flag)}))
    return GapReport(outcome, response, overall, cells, threshold, se_multiplier)
