"""Regression-tree models of unit response propensity."""

from .data import ColumnSchema, Dataset, SyntheticSpec, generate_synthetic, load_csv
from .linear_form import cell_assign, refit, to_cell_form, to_split_form
from .logistic import TermSpec, fit_logistic, predict_logistic, stepwise_select
from .selection import TreeConfig, cv_trace, fit_with_selection, select_k
from .tree import TreeModel, best_split, grow_tree, min_leaf_size, predict

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema", "Dataset", "SyntheticSpec", "generate_synthetic", "load_csv",
    "cell_assign", "refit", "to_cell_form", "to_split_form",
    "TermSpec", "fit_logistic", "predict_logistic", "stepwise_select",
    "TreeConfig", "cv_trace", "fit_with_selection", "select_k",
    "TreeModel", "best_split", "grow_tree", "min_leaf_size", "predict",
]
