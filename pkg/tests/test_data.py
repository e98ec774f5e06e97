import json
import math

import numpy as np
import pytest

from resptree.data import (
    ColumnSchema, DataError, Dataset, SchemaError, SpecError, SyntheticSpec, establishment_spec,
    generate_synthetic, load_csv, load_schema, load_synthetic_spec, save_schema,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


SCHEMA = [ColumnSchema("EMPL", "numeric"), ColumnSchema("RESP", "binary")]


def test_three_row_file(tmp_path):
    f = _write(tmp_path / "d.csv", "EMPL,RESP\n5,1\n12,0\n3.5,1\n")
    ds = load_csv(f, SCHEMA, response="RESP")
    assert ds.n == 3
    assert list(ds["EMPL"]) == [5.0, 12.0, 3.5]
    assert list(ds.y) == [1.0, 0.0, 1.0]


def test_header_order_insensitive(tmp_path):
    f = _write(tmp_path / "d.csv", "RESP,EMPL\n1,5\n0,7\n")
    assert list(load_csv(f, SCHEMA)["EMPL"]) == [5.0, 7.0]


def test_bad_binary_value_names_row(tmp_path):
    f = _write(tmp_path / "d.csv", "EMPL,RESP\n5,1\n6,2\n")
    with pytest.raises(DataError, match="binary column RESP row 2"):
        load_csv(f, SCHEMA)


def test_missing_column(tmp_path):
    f = _write(tmp_path / "d.csv", "EMPL\n5\n")
    with pytest.raises(SchemaError, match="RESP"):
        load_csv(f, SCHEMA)


def test_unparseable_cell(tmp_path):
    f = _write(tmp_path / "d.csv", "EMPL,RESP\nabc,1\n")
    with pytest.raises(DataError, match="EMPL row 1"):
        load_csv(f, SCHEMA)


def test_missing_value_rejected_or_dropped(tmp_path):
    f = _write(tmp_path / "d.csv", "EMPL,RESP\n5,1\n,0\n7,NA\n8,0\n")
    with pytest.raises(DataError, match="missing value in column EMPL row 2"):
        load_csv(f, SCHEMA)
    ds = load_csv(f, SCHEMA, drop_incomplete=True)
    assert ds.n == 2 and ds.dropped_rows == 2


def test_quoted_fields_and_levels(tmp_path):
    schema = [ColumnSchema("MSA", "ordinal", ("small", "1,000,000+")), ColumnSchema("RESP", "binary")]
    f = _write(tmp_path / "d.csv", 'MSA,RESP\n"1,000,000+",1\nsmall,0\n')
    ds = load_csv(f, schema)
    assert list(ds["MSA"]) == [1, 0]
    bad = _write(tmp_path / "e.csv", "MSA,RESP\nhuge,1\n")
    with pytest.raises(DataError):
        load_csv(bad, schema)


def test_schema_invariants():
    with pytest.raises(SchemaError):
        ColumnSchema("A", "ordinal", ("only",))
    with pytest.raises(SchemaError):
        ColumnSchema("A", "weird")
    with pytest.raises(SchemaError):
        Dataset([ColumnSchema("A", "numeric"), ColumnSchema("A", "binary")], {"A": [1.0]})


def test_response_must_be_binary_column():
    with pytest.raises(SchemaError):
        Dataset([ColumnSchema("A", "numeric")], {"A": [0.5]}, response="A")


def test_round_trip_generated(tmp_path):
    ds = generate_synthetic(establishment_spec(2000, seed=11))
    ds.to_csv(tmp_path / "d.csv")
    save_schema(tmp_path / "s.json", ds.schema, ds.response, ds.outcome)
    schema, resp, out = load_schema(tmp_path / "s.json")
    back = load_csv(tmp_path / "d.csv", schema, resp, out)
    assert back.equals(ds)
    for c in ds.schema:
        assert np.array_equal(back[c.name], ds[c.name])


def test_round_trip_awkward_floats(tmp_path):
    schema = [ColumnSchema("X", "numeric"), ColumnSchema("R", "binary")]
    vals = [0.1, 1 / 3, -2.5e-300, 1e22, 123456789.123456789, 2.0**60]
    ds = Dataset(schema, {"X": vals, "R": [1, 0, 1, 0, 1, 0]}, response="R")
    ds.to_csv(tmp_path / "d.csv")
    assert load_csv(tmp_path / "d.csv", schema, "R").equals(ds)


def test_dataset_is_immutable():
    ds = Dataset(SCHEMA, {"EMPL": [1.0, 2.0], "RESP": [0, 1]}, response="RESP")
    with pytest.raises(ValueError):
        ds["EMPL"][0] = 5.0


def _const_spec(p, n, seed=3):
    return SyntheticSpec(
        n=n, seed=seed,
        columns=[{"name": "X", "kind": "numeric", "dist": {"type": "uniform", "low": 0, "high": 1}}],
        propensity={"type": "constant", "value": p},
    )


def test_constant_one_propensity():
    assert generate_synthetic(_const_spec(1.0, 500)).y.min() == 1.0


def test_constant_half_propensity_rate():
    # 3.9 binomial standard deviations at n = 1e5
    rate = generate_synthetic(_const_spec(0.5, 100_000)).y.mean()
    assert 0.494 <= rate <= 0.506


def test_generator_deterministic():
    a = generate_synthetic(establishment_spec(3000, seed=99))
    b = generate_synthetic(establishment_spec(3000, seed=99))
    c = generate_synthetic(establishment_spec(3000, seed=100))
    assert a.equals(b)
    assert not a.equals(c)


def test_rate_converges_to_mean_propensity():
    ds = generate_synthetic(establishment_spec(100_000, seed=4))
    p = ds.true_propensity
    sd = math.sqrt((p * (1 - p)).sum()) / ds.n
    assert abs(ds.y.mean() - p.mean()) <= 4 * sd


def test_propensity_out_of_range():
    with pytest.raises(SpecError):
        generate_synthetic(_const_spec(1.2, 10))


def test_spec_file_requires_seed(tmp_path):
    d = _const_spec(0.5, 10).to_dict()
    del d["seed"]
    f = tmp_path / "spec.json"
    f.write_text(json.dumps(d))
    with pytest.raises(SpecError, match="seed"):
        load_synthetic_spec(f)


def test_tree_propensity_outcome_shift():
    spec = SyntheticSpec(
        n=40_000, seed=8,
        columns=[{"name": "X", "kind": "numeric", "dist": {"type": "uniform_int", "low": 0, "high": 9}}],
        propensity={"type": "tree", "tree": {
            "column": "X", "threshold": 4,
            "left": {"p": 0.9, "mean": 100.0},
            "right": {"p": 0.5, "mean": 200.0, "nonrespondent_shift": 50.0}}},
        outcome={"name": "W", "noise_sd": 0.0},
    )
    ds = generate_synthetic(spec)
    x, w, r = ds["X"], ds["W"], ds.y
    assert set(np.unique(w[x <= 4])) == {100.0}
    assert set(np.unique(w[(x > 4) & (r == 1)])) == {200.0}
    assert set(np.unique(w[(x > 4) & (r == 0)])) == {250.0}
    assert abs(r[x <= 4].mean() - 0.9) < 0.01
