"""Columnar unit-record datasets, CSV ingestion and a seeded synthetic generator.

Categorical columns (ordinal, nominal) are stored as integer codes into the
schema's ``levels``; ordinal codes are level ranks, so threshold splits on an
ordinal column compare ranks. Numeric and binary columns are float64.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

KINDS = ("numeric", "ordinal", "nominal", "binary")
MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "null", "NULL"})


class SchemaError(ValueError):
    """Schema definition or schema/data mismatch."""


class DataError(ValueError):
    """A cell value that does not conform to its column kind."""


class SpecError(ValueError):
    """Invalid synthetic-data specification."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name}: unknown kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.categorical:
            if len(self.levels) < 2:
                raise SchemaError(f"column {self.name}: {self.kind} needs >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"column {self.name}: duplicate levels")
        elif self.levels:
            raise SchemaError(f"column {self.name}: levels only allowed for ordinal/nominal")

    @property
    def categorical(self) -> bool:
        return self.kind in ("ordinal", "nominal")

    def code(self, value: Any) -> int:
        """Integer code of a category label."""
        label = _label(value)
        try:
            return self.levels.index(label)
        except ValueError:
            raise DataError(f"{self.kind} column {self.name}: unknown level {label!r}") from None

    def encode(self, value: Any) -> float:
        """Internal (numeric) representation of a single raw value."""
        if self.categorical:
            return float(self.code(value))
        x = float(value)
        if self.kind == "binary" and x not in (0.0, 1.0):
            raise DataError(f"binary column {self.name}: value {value!r} not in {{0,1}}")
        if math.isnan(x):
            raise DataError(f"column {self.name}: missing value")
        return x

    def decode(self, x: float) -> Any:
        if self.categorical:
            return self.levels[int(x)]
        if self.kind == "binary":
            return int(x)
        return float(x)

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.levels:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ColumnSchema":
        return cls(d["name"], d["kind"], tuple(d.get("levels", ())))


def _label(value: Any) -> str:
    # 2.0 and "2" name the same level
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    return str(value)


def _check_schema(schema: Sequence[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise SchemaError(f"duplicate column names: {dup}")


class Dataset:
    """Immutable table of unit records.

    Parameters
    ----------
    schema : sequence of ColumnSchema
    columns : mapping of column name to array of internal values
        (float values for numeric/binary, integer codes for categorical).
    response : str, optional
        Name of the binary response column holding the response indicators.
    outcome : str, optional
        Name of a numeric outcome column (e.g. a linked wage proxy).
    """

    def __init__(
        self,
        schema: Sequence[ColumnSchema],
        columns: Mapping[str, Any],
        response: str | None = None,
        outcome: str | None = None,
    ):
        schema = tuple(schema)
        _check_schema(schema)
        self.schema = schema
        self._by_name = {c.name: c for c in schema}
        missing = [c.name for c in schema if c.name not in columns]
        if missing:
            raise SchemaError(f"missing column {missing[0]}")
        extra = [k for k in columns if k not in self._by_name]
        if extra:
            raise SchemaError(f"column {extra[0]} not in schema")

        cols = {}
        n = None
        for c in schema:
            arr = np.asarray(columns[c.name])
            if c.categorical:
                arr = arr.astype(np.int64)
                if arr.size and (arr.min() < 0 or arr.max() >= len(c.levels)):
                    raise DataError(f"{c.kind} column {c.name}: code out of range")
            else:
                arr = arr.astype(np.float64)
                if np.isnan(arr).any():
                    raise DataError(f"column {c.name}: missing value")
                if c.kind == "binary" and not np.isin(arr, (0.0, 1.0)).all():
                    raise DataError(f"binary column {c.name}: values must be 0/1")
            if arr.ndim != 1:
                raise DataError(f"column {c.name}: expected a 1-d array")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataError(f"column {c.name}: length {arr.shape[0]} != {n}")
            arr.setflags(write=False)
            cols[c.name] = arr
        if not n:
            raise DataError("dataset has no rows")
        self._cols = cols
        self.n = int(n)

        for role, name in (("response", response), ("outcome", outcome)):
            if name is not None and name not in self._by_name:
                raise SchemaError(f"{role} column {name} not in schema")
        if response is not None and self._by_name[response].kind != "binary":
            raise SchemaError(f"response column {response} must be binary")
        if outcome is not None and self._by_name[outcome].kind not in ("numeric", "binary"):
            raise SchemaError(f"outcome column {outcome} must be numeric")
        self.response = response
        self.outcome = outcome
        self.dropped_rows = 0
        self.true_propensity: np.ndarray | None = None

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, columns={self.names}, response={self.response!r})"

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column_schema(self, name: str) -> ColumnSchema:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown column {name}") from None

    def __getitem__(self, name: str) -> np.ndarray:
        self.column_schema(name)
        return self._cols[name]

    def values(self, name: str) -> np.ndarray:
        """Decoded column: category labels for categorical columns."""
        c = self.column_schema(name)
        if c.categorical:
            return np.asarray(c.levels, dtype=object)[self._cols[name]]
        return self._cols[name]

    @property
    def y(self) -> np.ndarray:
        if self.response is None:
            raise SchemaError("dataset has no response column")
        return self._cols[self.response]

    def row(self, i: int) -> dict:
        """Record ``i`` as a mapping of column name to raw value."""
        return {c.name: c.decode(self._cols[c.name][i]) for c in self.schema}

    def records(self) -> Iterable[dict]:
        for i in range(self.n):
            yield self.row(i)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.schema,
            {k: v[idx] for k, v in self._cols.items()},
            self.response,
            self.outcome,
        )

    def with_roles(self, response: str | None = None, outcome: str | None = None) -> "Dataset":
        return Dataset(self.schema, self._cols, response, outcome)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and self.n == other.n
            and all(np.array_equal(self._cols[k], other._cols[k]) for k in self._cols)
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.names)
            cols = [(c, self._cols[c.name]) for c in self.schema]
            for i in range(self.n):
                w.writerow([_format_cell(c, arr[i]) for c, arr in cols])

    @classmethod
    def from_records(
        cls,
        schema: Sequence[ColumnSchema],
        records: Iterable[Mapping[str, Any]],
        response: str | None = None,
        outcome: str | None = None,
    ) -> "Dataset":
        schema = tuple(schema)
        rows = list(records)
        cols = {c.name: [c.encode(r[c.name]) for r in rows] for c in schema}
        return cls(schema, cols, response, outcome)


def _format_cell(col: ColumnSchema, x) -> str:
    if col.categorical:
        return col.levels[int(x)]
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


# -- CSV and schema sidecar ------------------------------------------------


def load_schema(path: str | Path) -> tuple[list[ColumnSchema], str | None, str | None]:
    """Read a JSON schema sidecar.

    The file holds ``{"columns": [{"name", "kind", "levels"?}, ...],
    "response": name?, "outcome": name?}``.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    schema = [ColumnSchema.from_dict(d) for d in doc["columns"]]
    _check_schema(schema)
    return schema, doc.get("response"), doc.get("outcome")


def save_schema(
    path: str | Path,
    schema: Sequence[ColumnSchema],
    response: str | None = None,
    outcome: str | None = None,
) -> None:
    doc = {"columns": [c.to_dict() for c in schema]}
    if response is not None:
        doc["response"] = response
    if outcome is not None:
        doc["outcome"] = outcome
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_csv(
    path: str | Path,
    schema: Sequence[ColumnSchema],
    response: str | None = None,
    outcome: str | None = None,
    drop_incomplete: bool = False,
) -> Dataset:
    """Parse a comma-separated file with a header row into a :class:`Dataset`.

    Header names must match the schema (in any order). Missing cells raise
    :class:`DataError` unless ``drop_incomplete`` is set, in which case the
    incomplete rows are removed and their count is stored on the returned
    dataset as ``dropped_rows``. Row numbers in errors count data rows from 1.
    """
    schema = list(schema)
    _check_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for c in schema:
            if c.name not in header:
                raise SchemaError(f"missing column {c.name}")
        extra = [h for h in header if h not in {c.name for c in schema}]
        if extra:
            raise SchemaError(f"column {extra[0]} not in schema")
        pos = [header.index(c.name) for c in schema]
        cols: dict[str, list[float]] = {c.name: [] for c in schema}
        dropped = 0
        for rownum, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(raw)}")
            cells = [raw[p].strip() for p in pos]
            if any(v in MISSING_TOKENS for v in cells):
                if drop_incomplete:
                    dropped += 1
                    continue
                c = schema[next(i for i, v in enumerate(cells) if v in MISSING_TOKENS)]
                raise DataError(f"missing value in column {c.name} row {rownum}")
            for c, v in zip(schema, cells):
                cols[c.name].append(_parse_cell(c, v, rownum))
    ds = Dataset(schema, cols, response, outcome)
    ds.dropped_rows = dropped
    return ds


def _parse_cell(col: ColumnSchema, v: str, rownum: int) -> float:
    if col.categorical:
        try:
            return float(col.levels.index(v))
        except ValueError:
            raise DataError(f"{col.kind} column {col.name} row {rownum}: unknown level {v!r}") from None
    try:
        x = float(v)
    except ValueError:
        raise DataError(f"{col.kind} column {col.name} row {rownum}: cannot parse {v!r}") from None
    if col.kind == "binary" and x not in (0.0, 1.0):
        raise DataError(f"binary column {col.name} row {rownum}: value {v!r} not in {{0,1}}")
    return x


# -- synthetic generator ----------------------------------------------------


@dataclass
class SyntheticSpec:
    """Description of a synthetic unit-record population.

    ``columns`` is a list of ``{"name", "kind", "levels"?, "dist": {...}}``
    entries. Supported distributions: ``uniform_int`` (low, high inclusive),
    ``uniform`` (low, high), ``normal`` (mean, sd), ``lognormal`` (mean, sigma,
    optional ``round``/``min``), ``poisson`` (lam, optional ``shift``),
    ``binomial`` (n, p), ``bernoulli`` (p), ``categorical`` (probs per level).

    ``propensity`` is one of ``{"type": "constant", "value"}``,
    ``{"type": "logistic", "intercept", "coefficients": {col: beta}}`` or
    ``{"type": "tree", "tree": node}`` where ``node`` is either a leaf
    ``{"p", "mean"?, "nonrespondent_shift"?}`` or
    ``{"column", "threshold" | "subset", "left", "right"}``; rows with
    ``x <= threshold`` (or ``x in subset``) go left.

    ``outcome`` optionally adds a numeric column: ``{"name", "noise_sd",
    "mean"?}``. Under a tree propensity each leaf's ``mean`` and
    ``nonrespondent_shift`` (added to nonrespondents' outcome) apply.
    """

    n: int
    seed: int
    columns: list[dict]
    propensity: dict
    response: str = "RESP"
    outcome: dict | None = None

    def schema(self) -> list[ColumnSchema]:
        cols = [ColumnSchema(c["name"], c["kind"], tuple(c.get("levels", ()))) for c in self.columns]
        cols.append(ColumnSchema(self.response, "binary"))
        if self.outcome:
            cols.append(ColumnSchema(self.outcome["name"], "numeric"))
        return cols

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "seed": self.seed,
            "columns": self.columns,
            "propensity": self.propensity,
            "response": self.response,
        }
        if self.outcome:
            d["outcome"] = self.outcome
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticSpec":
        if "seed" not in d or not isinstance(d["seed"], int):
            raise SpecError("synthetic spec needs an integer 'seed'")
        return cls(
            n=int(d["n"]),
            seed=int(d["seed"]),
            columns=list(d["columns"]),
            propensity=dict(d["propensity"]),
            response=d.get("response", "RESP"),
            outcome=d.get("outcome"),
        )


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    with open(path, encoding="utf-8") as fh:
        return SyntheticSpec.from_dict(json.load(fh))


def _draw(rng: np.random.Generator, col: dict, n: int) -> np.ndarray:
    dist = col.get("dist", {})
    t = dist.get("type")
    kind = col["kind"]
    if kind in ("ordinal", "nominal"):
        levels = col["levels"]
        probs = dist.get("probs")
        if t not in (None, "categorical"):
            raise SpecError(f"column {col['name']}: categorical columns need a categorical dist")
        if probs is None:
            probs = [1.0 / len(levels)] * len(levels)
        probs = np.asarray(probs, dtype=float)
        if len(probs) != len(levels) or (probs < 0).any() or not math.isclose(probs.sum(), 1.0):
            raise SpecError(f"column {col['name']}: bad category probabilities")
        return rng.choice(len(levels), size=n, p=probs)
    if t == "uniform_int":
        return rng.integers(dist["low"], dist["high"] + 1, size=n).astype(float)
    if t == "uniform":
        return rng.uniform(dist["low"], dist["high"], size=n)
    if t == "normal":
        return rng.normal(dist["mean"], dist["sd"], size=n)
    if t == "lognormal":
        x = rng.lognormal(dist["mean"], dist["sigma"], size=n)
        if dist.get("round"):
            x = np.round(x)
        if "min" in dist:
            x = np.maximum(x, dist["min"])
        return x
    if t == "poisson":
        return rng.poisson(dist["lam"], size=n).astype(float) + dist.get("shift", 0)
    if t == "binomial":
        return rng.binomial(dist["n"], dist["p"], size=n).astype(float)
    if t == "bernoulli":
        return (rng.random(n) < dist["p"]).astype(float)
    raise SpecError(f"column {col['name']}: unknown distribution {t!r}")


def _tree_leaves(node: Mapping, cols: Mapping[str, np.ndarray], schema: Mapping[str, ColumnSchema],
                 rows: np.ndarray, out: list) -> None:
    if "column" not in node:
        out.append((node, rows))
        return
    name = node["column"]
    if name not in cols:
        raise SpecError(f"tree splits on unknown column {name}")
    x = cols[name][rows]
    if "subset" in node:
        codes = [schema[name].code(v) for v in node["subset"]]
        left = np.isin(x, codes)
    else:
        left = x <= node["threshold"]
    _tree_leaves(node["left"], cols, schema, rows[left], out)
    _tree_leaves(node["right"], cols, schema, rows[~left], out)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset from ``spec``; a pure function of the spec and its seed.

    Responses are independent Bernoulli draws with probability equal to the
    true propensity of each record.
    """
    if spec.n < 1:
        raise SpecError("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    schema = spec.schema()
    by_name = {c.name: c for c in schema}
    cols: dict[str, np.ndarray] = {}
    for col in spec.columns:
        cols[col["name"]] = _draw(rng, col, spec.n)
        if col["kind"] == "binary" and not np.isin(cols[col["name"]], (0.0, 1.0)).all():
            raise SpecError(f"column {col['name']}: binary draws must be 0/1")

    n = spec.n
    prop = spec.propensity
    leaves: list = []
    if prop["type"] == "constant":
        p = np.full(n, float(prop["value"]))
    elif prop["type"] == "logistic":
        z = np.full(n, float(prop.get("intercept", 0.0)))
        for name, beta in prop.get("coefficients", {}).items():
            z = z + beta * cols[name]
        p = 1.0 / (1.0 + np.exp(-z))
    elif prop["type"] == "tree":
        _tree_leaves(prop["tree"], cols, by_name, np.arange(n), leaves)
        p = np.empty(n)
        for leaf, rows in leaves:
            p[rows] = leaf["p"]
    else:
        raise SpecError(f"unknown propensity type {prop['type']!r}")
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise SpecError("propensity outside [0, 1]")

    resp = (rng.random(n) < p).astype(float)
    cols[spec.response] = resp
    if spec.outcome:
        o = spec.outcome
        mean = np.full(n, float(o.get("mean", 0.0)))
        shift = np.zeros(n)
        for leaf, rows in leaves:
            if "mean" in leaf:
                mean[rows] = leaf["mean"]
            shift[rows] = leaf.get("nonrespondent_shift", 0.0)
        noise = rng.normal(0.0, float(o.get("noise_sd", 0.0)), size=n)
        cols[o["name"]] = mean + shift * (1.0 - resp) + noise
    ds = Dataset(schema, cols, spec.response, spec.outcome["name"] if spec.outcome else None)
    ds.true_propensity = p
    return ds


# -- an establishment-like population ----------------------------------------

INDUSTRIES = (
    "natural resources and mining", "construction", "manufacturing",
    "trade/transportation/utilities", "information", "finance",
    "professional and business services", "education and health",
    "leisure and hospitality", "other services", "local government",
)
WHITE_COLLAR = ("information", "finance", "professional and business services")
MSA_LEVELS = ("non-MSA", "50-149,999", "150-249,999", "250-499,999", "500-999,999", "1,000,000+")


def establishment_spec(n: int, seed: int, wage_noise: float = 2500.0) -> SyntheticSpec:
    """Synthetic establishment frame with a seven-cell propensity tree.

    Cell propensities and mean quarterly wages are chosen to resemble a
    mail-survey establishment population; large white-collar multi-unit
    establishments have the lowest response rate and nonrespondents in
    several cells are paid more than respondents.
    """
    leaf = lambda p, mean, shift=0.0: {"p": p, "mean": mean, "nonrespondent_shift": shift}  # noqa: E731
    tree = {
        "column": "EMPL", "threshold": 20,
        "left": {
            "column": "MULTI", "threshold": 1,
            "left": {"column": "EMPL", "threshold": 9,
                     "left": leaf(0.8883, 8261, 300.0),
                     "right": leaf(0.8176, 7702, 200.0)},
            "right": leaf(0.7304, 11655, 1500.0),
        },
        "right": {
            "column": "IND", "subset": list(WHITE_COLLAR),
            "left": {"column": "MULTI", "threshold": 1,
                     "left": leaf(0.6436, 12109, 2200.0),
                     "right": leaf(0.4745, 13407, 2400.0)},
            "right": {"column": "MSA", "threshold": 4,
                      "left": leaf(0.7472, 7291, 300.0),
                      "right": leaf(0.6662, 8997, 400.0)},
        },
    }
    columns = [
        {"name": "EMPL", "kind": "numeric",
         "dist": {"type": "lognormal", "mean": 2.6, "sigma": 1.3, "round": True, "min": 1}},
        {"name": "IND", "kind": "nominal", "levels": list(INDUSTRIES),
         "dist": {"type": "categorical",
                  "probs": [0.02, 0.12, 0.08, 0.2, 0.03, 0.08, 0.14, 0.12, 0.1, 0.08, 0.03]}},
        {"name": "MSA", "kind": "ordinal", "levels": list(MSA_LEVELS),
         "dist": {"type": "categorical", "probs": [0.18, 0.1, 0.08, 0.12, 0.14, 0.38]}},
        {"name": "AGE", "kind": "numeric", "dist": {"type": "uniform", "low": 0.0, "high": 40.0}},
        {"name": "MULTI", "kind": "numeric", "dist": {"type": "poisson", "lam": 0.6, "shift": 1}},
        {"name": "AUX", "kind": "binary", "dist": {"type": "bernoulli", "p": 0.05}},
    ]
    return SyntheticSpec(
        n=n, seed=seed, columns=columns,
        propensity={"type": "tree", "tree": tree},
        response="RESP",
        outcome={"name": "WAGE", "noise_sd": wage_noise, "mean": 9000.0},
    )
