"""
Checking a tree on an independent panel
=======================================

Fit on one panel, then freeze the split predicates and re-estimate the cell
means on a second panel drawn from the same truth. Cell propensities
should agree to within sampling error.
"""

import math

from resptree.data import SyntheticSpec, establishment_spec, generate_synthetic
from resptree.linear_form import refit, to_cell_form
from resptree.selection import fit_with_selection

truth = establishment_spec(1, seed=0)
panel_a = generate_synthetic(SyntheticSpec(50_000, 11, truth.columns, truth.propensity, outcome=truth.outcome))
panel_b = generate_synthetic(SyntheticSpec(50_000, 12, truth.columns, truth.propensity, outcome=truth.outcome))

tree = fit_with_selection(panel_a, seed=5).model
_, cells_b = refit(tree, panel_b)
# the same frozen cells can carry any numeric outcome
_, wages_b = refit(tree, panel_b, "WAGE")

print(f"{'cell':>4} {'p (A)':>8} {'p (B)':>8} {'|diff|/se':>9} {'wage (B)':>10}")
for a, b, w in zip(to_cell_form(tree).cells, cells_b.cells, wages_b.cells):
    se = math.sqrt(a.mu * (1 - a.mu) / a.count)
    print(f"{a.id:>4} {a.mu:8.4f} {b.mu:8.4f} {abs(a.mu - b.mu) / se:9.2f} {w.mu:10.0f}")
