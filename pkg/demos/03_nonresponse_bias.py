"""
Looking for outcome gaps inside response cells
==============================================

Within a cell, respondents and nonrespondents should look alike if
nonresponse is ignorable given the cell. Here one cell has a planted gap:
its nonrespondents earn 500 less. The gap report flags exactly that cell.
"""

from resptree.bias import cell_gaps
from resptree.data import SyntheticSpec, generate_synthetic
from resptree.linear_form import to_cell_form
from resptree.tree import grow_tree

truth = {
    "column": "a", "threshold": 49,
    "left": {"column": "b", "threshold": 0.5,
             "left": {"p": 0.85, "mean": 8000.0}, "right": {"p": 0.75, "mean": 9000.0}},
    "right": {"column": "b", "threshold": 0.5,
              "left": {"p": 0.70, "mean": 10000.0},
              "right": {"p": 0.55, "mean": 12000.0, "nonrespondent_shift": -500.0}},
}
columns = [
    {"name": "a", "kind": "numeric", "dist": {"type": "uniform_int", "low": 0, "high": 99}},
    {"name": "b", "kind": "binary", "dist": {"type": "bernoulli", "p": 0.5}},
    {"name": "z", "kind": "numeric", "dist": {"type": "uniform", "low": 0, "high": 1}},
]


def panel(seed):
    spec = SyntheticSpec(50_000, seed, columns, {"type": "tree", "tree": truth},
                         outcome={"name": "W", "noise_sd": 2500.0})
    return generate_synthetic(spec)


# cells come from a tree fitted on the response indicator alone
form = to_cell_form(grow_tree(panel(0), 3))
report = cell_gaps(form, panel(1), "W", "RESP", threshold=250)

for c in [*report.cells, report.overall]:
    flag = "FLAG" if c.flag else ""
    print(f"{c.predicate:<22} rate {c.response_rate:.3f}  gap {c.gap:+8.1f} (se {c.gap_se:6.1f}) {flag}")
