"""
Growing and selecting a propensity tree
=======================================

Draw a synthetic establishment panel, grow a tree best-first, and let
10-fold cross-validation with the one-standard-deviation rule choose the
number of splits. The selected tree is printed in both linear forms.
"""

from resptree.data import establishment_spec, generate_synthetic
from resptree.linear_form import to_cell_form, to_split_form
from resptree.selection import TreeConfig, fit_with_selection

ds = generate_synthetic(establishment_spec(20_000, seed=1))
print(f"{ds.n} establishments, response rate {ds.y.mean():.3f}")

# the minimum leaf size defaults to the least m with m**8 >= n**5
res = fit_with_selection(ds, TreeConfig(k_max=12), seed=7)

print("\nCross-validated relative error by number of splits")
for k, est, se in res.trace.table():
    mark = "  <- selected" if k == res.k_selected else ""
    print(f"{k:>3}  {est:.5f}  ({se:.5f}){mark}")

# split form: intercept plus one coefficient per split indicator
print("\nSplit form")
for row in to_split_form(res.model).rows():
    print(f"{row['coefficient']:+.4f}  {row['split']}")

# cell form: one mean per mutually exclusive cell
print("\nCell form")
for c in to_cell_form(res.model).cells:
    print(f"cell {c.id}: n={c.count:>5}  p={c.mu:.4f}  {c.description}")
