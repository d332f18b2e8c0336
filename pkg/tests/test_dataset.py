import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthaudit.dataset import (CATEGORICAL, NUMERIC, UNKNOWN, ColumnSchema, Condition, ConditionalQuery,
                                TabularDataset, align, build_detection_dataset, column_statistics, infer_schema,
                                load_csv, load_schema, merge_schemas, save_schema, train_test_split)
from synthaudit.errors import DataError, SchemaMismatchError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def table(n, seed=0, provenance="real"):
    rng = np.random.default_rng(seed)
    schema = (ColumnSchema("a", NUMERIC), ColumnSchema("c", CATEGORICAL, ("x", "y", "z")))
    return TabularDataset(schema, np.column_stack([rng.normal(size=n), rng.integers(0, 3, n)]), provenance)


# --- schema inference -------------------------------------------------------

def test_infer_float_column_is_numeric():
    s = infer_schema([["1.5"], ["2.0"], ["3.7"]], ["v"])
    assert s[0].kind == NUMERIC


def test_infer_text_column_is_categorical():
    s = infer_schema([["yes"], ["no"], ["yes"]], ["v"])
    assert s[0].kind == CATEGORICAL and s[0].categories == ("yes", "no")


def test_low_cardinality_integer_column_is_categorical():
    rng = np.random.default_rng(0)
    rows = [[str(v)] for v in rng.integers(0, 3, 1000)]
    s = infer_schema(rows, ["v"])
    assert s[0].kind == CATEGORICAL and len(s[0].categories) == 3


def test_high_cardinality_integer_column_is_numeric():
    rows = [[str(v)] for v in range(100)]
    assert infer_schema(rows, ["v"])[0].kind == NUMERIC


def test_infer_needs_rows():
    with pytest.raises(DataError):
        infer_schema([], ["v"])


# --- schema and dataset invariants ---------------------------------------------

def test_categorical_column_needs_categories():
    with pytest.raises(DataError):
        ColumnSchema("c", CATEGORICAL, ())


def test_duplicate_names_rejected():
    with pytest.raises(DataError):
        TabularDataset((ColumnSchema("a", NUMERIC), ColumnSchema("a", NUMERIC)), np.zeros((2, 2)))


def test_non_finite_cells_rejected():
    with pytest.raises(DataError):
        TabularDataset((ColumnSchema("a", NUMERIC),), np.array([[1.0], [np.inf]]))


def test_invalid_category_code_rejected():
    with pytest.raises(DataError):
        TabularDataset((ColumnSchema("c", CATEGORICAL, ("x",)),), np.array([[1.0]]))


def test_unseen_label_maps_to_unknown():
    col = ColumnSchema("c", CATEGORICAL, ("x", "y"))
    assert col.decode(col.encode("nope")) == UNKNOWN


def test_schema_file_roundtrip(tmp_path):
    schema = [ColumnSchema("a", NUMERIC), ColumnSchema("c", CATEGORICAL, ("x", "y"), "reject")]
    save_schema(schema, tmp_path / "s.json")
    assert load_schema(tmp_path / "s.json") == schema


# --- CSV ingestion ----------------------------------------------------------

def test_load_csv_types_and_values(tmp_path):
    rows = "\n".join(f"{i * 0.5},{'ab'[i % 2]}" for i in range(30))
    d = load_csv(write(tmp_path / "t.csv", "num,cat\n" + rows + "\n"))
    assert (d.n, d.p) == (30, 2)
    assert d.schema[0].kind == NUMERIC and d.schema[1].categories == ("a", "b")
    assert d.values[3, 0] == 1.5


def test_header_only_file_is_an_error(tmp_path):
    with pytest.raises(DataError, match="zero"):
        load_csv(write(tmp_path / "e.csv", "a,b\n"))


def test_empty_file_is_an_error(tmp_path):
    with pytest.raises(DataError):
        load_csv(write(tmp_path / "e.csv", ""))


def test_ragged_row_is_an_error(tmp_path):
    with pytest.raises(DataError, match="expected 2 cells"):
        load_csv(write(tmp_path / "r.csv", "a,b\n1,2\n3\n"))


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_unparseable_numeric_under_reject(tmp_path):
    schema = [ColumnSchema("a", NUMERIC, missing_policy="reject")]
    with pytest.raises(DataError, match="unparseable"):
        load_csv(write(tmp_path / "r.csv", "a\n1\nfoo\n"), schema)


def test_missing_rows_dropped_under_drop_row(tmp_path):
    schema = [ColumnSchema("a", NUMERIC), ColumnSchema("b", CATEGORICAL, ("u", "v"))]
    d = load_csv(write(tmp_path / "m.csv", "a,b\n1,u\n?,v\n3,?\n4,v\n"), schema)
    assert d.column("a").tolist() == [1.0, 4.0]


def test_header_schema_mismatch(tmp_path):
    with pytest.raises(SchemaMismatchError):
        load_csv(write(tmp_path / "h.csv", "a,b\n1,2\n"), [ColumnSchema("a", NUMERIC), ColumnSchema("c", NUMERIC)])


def test_csv_roundtrip(tmp_path):
    d = table(50)
    d.to_csv(tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", d.schema)
    np.testing.assert_array_equal(back.values, d.values)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, width=64), min_size=1, max_size=40))
def test_numeric_cells_survive_csv(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    d = TabularDataset((ColumnSchema("a", NUMERIC),), np.array(xs)[:, None])
    d.to_csv(path)
    np.testing.assert_array_equal(load_csv(path, d.schema).values, d.values)


# --- detection dataset ------------------------------------------------------

def test_equal_sizes_give_balanced_labels():
    d = build_detection_dataset(table(100, 0), table(100, 1, "synthetic"), seed=0)
    assert d.data.n == 200 and d.labels.sum() == 100


def test_larger_class_is_downsampled():
    d = build_detection_dataset(table(120, 0), table(100, 1, "synthetic"), seed=0)
    assert d.data.n == 200 and d.labels.sum() == 100


def test_downsampling_is_deterministic():
    a = build_detection_dataset(table(150, 0), table(100, 1), seed=3)
    b = build_detection_dataset(table(150, 0), table(100, 1), seed=3)
    np.testing.assert_array_equal(a.data.values, b.data.values)


def test_category_only_in_synthetic_is_merged():
    real = TabularDataset.from_columns({"c": ["a", "b", "a"]})
    synth = TabularDataset.from_columns({"c": ["a", "b", "q"]})
    d = build_detection_dataset(real, synth)
    assert d.data.schema[0].categories == ("a", "b", "q")
    assert d.data.schema[0].decode(d.data.values[5, 0]) == "q"


def test_kind_mismatch_is_an_error():
    a = TabularDataset((ColumnSchema("v", NUMERIC),), np.zeros((3, 1)))
    b = TabularDataset((ColumnSchema("v", CATEGORICAL, ("x",)),), np.zeros((3, 1)))
    with pytest.raises(SchemaMismatchError):
        build_detection_dataset(a, b)


def test_empty_input_is_an_error():
    with pytest.raises(DataError):
        build_detection_dataset(table(10), table(0))


def test_align_keeps_labels():
    a = (ColumnSchema("c", CATEGORICAL, ("x", "y")),)
    b = (ColumnSchema("c", CATEGORICAL, ("y", "x", "z")),)
    d = TabularDataset(a, np.array([[0.0], [1.0], [-1.0]]))
    out = align(d, merge_schemas(b, a))
    assert [r[0] for r in out.decoded_rows()] == ["x", "y", UNKNOWN]


@given(st.integers(2, 300), st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 2 ** 16))
def test_split_is_stratified_and_balanced(n_real, n_synth, frac, seed):
    d = train_test_split(build_detection_dataset(table(n_real, 0), table(n_synth, 1), seed), frac, seed)
    m = min(n_real, n_synth)
    assert d.labels.sum() == m and len(d.labels) == 2 * m
    for c in (0, 1):
        k = int(d.is_test[d.labels == c].sum())
        assert k == min(max(round(frac * m), 1), m - 1)


def test_split_rejects_bad_fraction():
    d = build_detection_dataset(table(10), table(10))
    with pytest.raises(DataError):
        train_test_split(d, 1.0)


# --- statistics -------------------------------------------------------------

@given(st.integers(0, 2 ** 16), st.integers(2, 200))
def test_stats_report_invariants(seed, n):
    rng = np.random.default_rng(seed)
    schema = (ColumnSchema("a", NUMERIC), ColumnSchema("b", NUMERIC), ColumnSchema("c", CATEGORICAL, ("x", "y")))
    d = TabularDataset(schema, np.column_stack([rng.normal(size=n), rng.normal(size=n), rng.integers(0, 2, n)]))
    rep = column_statistics(d)
    assert abs(sum(rep.marginals["c"]["frequencies"].values()) - 1) <= 1e-12
    np.testing.assert_allclose(rep.correlation, rep.correlation.T)
    np.testing.assert_array_equal(np.diag(rep.correlation), 1.0)


def test_conditional_statistics_match_direct_computation():
    rng = np.random.default_rng(0)
    age = rng.integers(17, 60, 2000).astype(float)
    edu = np.clip(np.round(age / 5 + rng.normal(size=2000)), 1, 16)
    d = TabularDataset((ColumnSchema("age", NUMERIC), ColumnSchema("edu", NUMERIC)), np.column_stack([age, edu]))
    rep = column_statistics(d, [
        ConditionalQuery("edu", (Condition("age", "==", 17),), "mean", label="m"),
        ConditionalQuery("edu", (Condition.parse("age==17"),), "fraction", value=4, label="f"),
        ConditionalQuery("age", (Condition.parse("age<=20"),), "corr", other="edu", label="c"),
    ])
    sel = age == 17
    assert rep.conditional("m") == pytest.approx(edu[sel].mean())
    assert rep.conditional("f") == pytest.approx(np.mean(edu[sel] == 4))
    young = age <= 20
    assert rep.conditional("c") == pytest.approx(np.corrcoef(age[young], edu[young])[0, 1])


def test_empty_condition_gives_none():
    rep = column_statistics(table(20), [ConditionalQuery("a", (Condition("a", ">", 1e9),))])
    assert rep.conditionals[0]["value"] is None and rep.conditionals[0]["n_rows"] == 0
