"""Command-line interface.

Every command writes its artifacts and a ``manifest.json`` (configuration,
seed, SHA-256 of each artifact) into ``--out``. Existing files are never
overwritten unless ``--force`` is given.

Exit status: 0 on success, 1 on data or model errors (a JSON object with
``error`` and ``message`` keys is written to stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bias import DEFAULT_SE_MULTIPLIER, cell_gaps
from .data import (DataError, SchemaError, SpecError, establishment_spec, generate_synthetic,
                   load_csv, load_schema, load_synthetic_spec, save_schema)
from .linear_form import refit, to_cell_form, to_split_form, write_comparison
from .logistic import (INTERCEPT, LogisticFitError, TermSpec, design_matrix, expit, fit_logistic,
                       full_scope, load_terms, stepwise_select)
from .selection import TreeConfig, ZeroBaselineVariance, cv_trace, fit_with_selection
from .simulation import run_comparison
from .tree import TreeModel

SEED_MAX = 2**64 - 1


class OutputExists(Exception):
    pass


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64 - 1]")
    return v


def _columns(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.artifacts: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        if p.exists() and not self.args.force:
            raise OutputExists(f"{p} exists; pass --force to overwrite")
        self.artifacts.append(p)
        return p

    def start(self, names: list[str]) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        for n in [*names, "manifest.json"]:
            if (self.out / n).exists() and not self.args.force:
                raise OutputExists(f"{self.out / n} exists; pass --force to overwrite")

    def finish(self) -> None:
        config = {k: v for k, v in vars(self.args).items() if k not in ("func", "force")}
        doc = {
            "tool": "resptree",
            "version": __version__,
            "command": self.args.command,
            "seed": getattr(self.args, "seed", None),
            "config": config,
            "artifacts": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.artifacts},
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load(args, path=None):
    schema, response, outcome = load_schema(args.schema)
    response = getattr(args, "response", None) or response
    outcome = getattr(args, "outcome", None) or outcome
    ds = load_csv(path or args.data, schema, response, outcome,
                  drop_incomplete=getattr(args, "drop_incomplete", False))
    if ds.dropped_rows:
        print(f"dropped {ds.dropped_rows} incomplete rows", file=sys.stderr)
    return ds


def _tree_config(args) -> TreeConfig:
    return TreeConfig(k_max=args.k_max, min_leaf=args.min_leaf, columns=args.columns)


# -- commands -----------------------------------------------------------------


def cmd_fit(args) -> None:
    run = Run(args)
    names = ["tree.json", "split_form.csv", "cell_form.csv", "cv_trace.csv"]
    run.start(names)
    ds = _load(args)
    res = fit_with_selection(ds, _tree_config(args), seed=args.seed)
    res.model.save(run.path(names[0]))
    to_split_form(res.model).to_csv(run.path(names[1]))
    to_cell_form(res.model).to_csv(run.path(names[2]))
    res.trace.to_csv(run.path(names[3]))
    run.finish()
    print(f"selected k = {res.k_selected} splits ({len(res.model.leaves)} cells), n = {ds.n}")


def cmd_cv(args) -> None:
    run = Run(args)
    run.start(["cv_trace.csv"])
    ds = _load(args)
    trace = cv_trace(ds, _tree_config(args), seed=args.seed)
    trace.to_csv(run.path("cv_trace.csv"))
    run.finish()
    print(f"{'split':>5}  {'estimate':>10}  {'std error':>10}")
    for k, est, se in trace.table():
        print(f"{k:>5}  {est:10.7f}  {se:10.7f}")


def cmd_validate(args) -> None:
    run = Run(args)
    names = ["comparison.csv", "cells_refit.csv"]
    run.start(names)
    tree = TreeModel.load(args.tree)
    ds = _load(args)
    fitted = to_split_form(tree)
    split_b, cells_b = refit(tree, ds)
    forms, labels = [fitted, split_b], ["fit", "refit"]
    if args.outcome:
        forms.append(refit(tree, ds, args.outcome)[0])
        labels.append(args.outcome)
    write_comparison(run.path(names[0]), forms, labels)
    cells_b.to_csv(run.path(names[1]))
    run.finish()
    if cells_b.empty_cells:
        print(f"empty cells on refit: {cells_b.empty_cells}", file=sys.stderr)
    fit_mu = [c.mu for c in to_cell_form(tree).cells]
    gap = max((abs(a - c.mu) for a, c in zip(fit_mu, cells_b.cells) if not c.empty), default=0.0)
    print(f"max |fit - refit| cell propensity difference: {gap:.4f}")


def cmd_bias(args) -> None:
    run = Run(args)
    run.start(["gaps.csv"])
    tree = TreeModel.load(args.tree)
    ds = _load(args)
    if ds.outcome is None or ds.response is None:
        raise SchemaError("bias needs response and outcome columns (schema or --response/--outcome)")
    rep = cell_gaps(to_cell_form(tree), ds, ds.outcome, ds.response,
                    threshold=args.threshold, se_multiplier=args.se_multiplier)
    rep.to_csv(run.path("gaps.csv"))
    run.finish()
    o = rep.overall
    print(f"respondent mean {o.respondent_mean:.2f}, nonrespondent mean {o.nonrespondent_mean:.2f}")
    print(f"flagged cells: {rep.flagged or 'none'}")


def cmd_simulate(args) -> None:
    run = Run(args)
    names = ["error_quartiles.csv", "p_summary.csv", "replicates.csv"]
    run.start(names)
    tree5 = None
    if args.tree5:
        with open(args.tree5, encoding="utf-8") as fh:
            tree5 = json.load(fh)
    rep = run_comparison(args.model, args.replicates, args.n, seed=args.seed,
                         config=TreeConfig(k_max=args.k_max), fresh_eval=args.fresh_eval,
                         tree5=tree5, n_jobs=args.jobs)
    written = rep.write_csv(run.out)
    run.artifacts.extend(written)
    run.finish()
    print(f"model {args.model}: mean |error| logistic {rep.mean_abs_error('logistic'):.4f}, "
          f"tree {rep.mean_abs_error('tree'):.4f}; {len(rep.failures)} failed replicates")


def cmd_generate(args) -> None:
    run = Run(args)
    run.start(["data.csv", "schema.json"])
    if args.spec:
        spec = load_synthetic_spec(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
        if args.n is not None:
            spec.n = args.n
    else:
        spec = establishment_spec(args.n, args.seed)
    args.seed = spec.seed
    ds = generate_synthetic(spec)
    ds.to_csv(run.path("data.csv"))
    save_schema(run.path("schema.json"), ds.schema, ds.response, ds.outcome)
    run.finish()
    print(f"wrote {ds.n} rows, response rate {ds.y.mean():.4f}")


def cmd_predict(args) -> None:
    run = Run(args)
    run.start(["predictions.csv"])
    with open(args.model, encoding="utf-8") as fh:
        doc = json.load(fh)
    ds = _load(args)
    if doc.get("format") == "resptree-tree":
        tree = TreeModel.from_dict(doc)
        cells = to_cell_form(tree).assign(ds)
        pred = tree.predict(ds)
    elif "coefficients" in doc and "terms" in doc:
        terms = [TermSpec.from_dict(t) for t in doc["terms"]]
        X, _, _ = design_matrix(ds, terms)
        pred = expit(X @ np.array([c["estimate"] for c in doc["coefficients"]]))
        cells = None
    else:
        raise DataError(f"{args.model}: not a tree or logistic model file")
    with open(run.path("predictions.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "prediction"] + (["cell"] if cells is not None else []))
        for i, p in enumerate(pred, start=1):
            w.writerow([i, repr(float(p))] + ([int(cells[i - 1])] if cells is not None else []))
    run.finish()
    print(f"scored {ds.n} rows")


def cmd_logit(args) -> None:
    run = Run(args)
    run.start(["logit.json"])
    ds = _load(args)
    if args.terms:
        terms = load_terms(args.terms)
    else:
        cols = args.columns or tuple(c.name for c in ds.schema
                                     if c.name not in (ds.response, ds.outcome))
        quad = args.quadratic or ()
        if args.pairwise:
            terms = full_scope(cols, quadratic=quad)
        else:
            terms = [INTERCEPT, *(TermSpec("main", (c,)) for c in cols),
                     *(TermSpec("quadratic", (c,)) for c in quad)]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = stepwise_select(ds, terms) if args.stepwise else fit_logistic(ds, terms)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    model.save(run.path("logit.json"))
    run.finish()
    print(f"{len(model.terms)} terms, AIC {model.aic:.3f}, converged {model.converged}")


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resptree", description="Regression-tree response propensity models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if data:
            sp.add_argument("--data", required=True, help="CSV file")
            sp.add_argument("--schema", required=True, help="JSON schema sidecar")
            sp.add_argument("--response", help="response column (overrides the schema)")
            sp.add_argument("--drop-incomplete", action="store_true",
                            help="drop rows with missing values instead of failing")

    def tree_opts(sp):
        sp.add_argument("--k-max", type=int, default=20)
        sp.add_argument("--min-leaf", type=int, help="override the n^(5/8) minimum leaf size")
        sp.add_argument("--columns", type=_columns, help="comma-separated split columns")

    sp = sub.add_parser("fit", help="grow, cross-validate and select a tree")
    common(sp)
    tree_opts(sp)
    sp.add_argument("--seed", type=_seed, required=True, help="fold-assignment seed")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="print the cross-validation trace")
    common(sp)
    tree_opts(sp)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("validate", help="refit a saved tree's coefficients on another panel")
    common(sp)
    sp.add_argument("--tree", required=True, help="tree JSON from `fit`")
    sp.add_argument("--outcome", help="also refit this numeric outcome column")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("bias", help="respondent vs nonrespondent outcome gaps by cell")
    common(sp)
    sp.add_argument("--tree", required=True)
    sp.add_argument("--outcome", help="outcome column (overrides the schema)")
    sp.add_argument("--threshold", type=float, help="minimum |gap| for a flag")
    sp.add_argument("--se-multiplier", type=float, default=DEFAULT_SE_MULTIPLIER)
    sp.set_defaults(func=cmd_bias)

    sp = sub.add_parser("simulate", help="tree vs logistic simulation study")
    common(sp, data=False)
    sp.add_argument("--model", type=int, required=True, choices=range(1, 6))
    sp.add_argument("--replicates", type=int, default=100)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--k-max", type=int, default=20)
    sp.add_argument("--fresh-eval", action="store_true", help="evaluate on a fresh draw")
    sp.add_argument("--tree5", help="JSON tree overriding the model-5 propensity")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("generate", help="draw a synthetic dataset")
    common(sp, data=False)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="synthetic spec JSON (carries its own seed)")
    src.add_argument("--preset", choices=["establishment"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=_seed, help="required with --preset; overrides a spec's seed")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("predict", help="score a CSV with a saved tree or logistic model")
    common(sp)
    sp.add_argument("--model", required=True, help="model JSON from `fit` or `logit`")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("logit", help="fit the logistic baseline")
    common(sp)
    sp.add_argument("--terms", help="JSON list of terms")
    sp.add_argument("--columns", type=_columns, help="main-effect columns (default: all features)")
    sp.add_argument("--quadratic", type=_columns, help="numeric columns to square")
    sp.add_argument("--pairwise", action="store_true", help="add all pairwise interactions")
    sp.add_argument("--stepwise", action="store_true", help="stepwise AIC selection over the terms")
    sp.set_defaults(func=cmd_logit)
    return p


DATA_ERRORS = (DataError, SchemaError, SpecError, LogisticFitError, ZeroBaselineVariance,
               OutputExists, OSError, ValueError, KeyError, RuntimeError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and args.preset and (args.seed is None or args.n is None):
        parser.error("--preset needs --n and --seed")
    try:
        args.func(args)
    except DATA_ERRORS as exc:
        err = {"error": type(exc).__name__, "message": str(exc).strip("'\""), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
