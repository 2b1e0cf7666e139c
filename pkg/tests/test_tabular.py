import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carmine import tabular
from carmine.pipeline import bundled
from conftest import make_table

SCHEMA = [
    tabular.AttributeMeta("Country", "", "identifier"),
    tabular.AttributeMeta("Obesity", "%", "demographic"),
    tabular.AttributeMeta("DpM", "per million", "covid-outcome"),
]


def test_load_csv_parses_rows_and_missing_cells():
    raw = b"Country,Obesity,DpM\nA,10.5,100\nB,n/a,20\nC,,3e2\n"
    table, report = tabular.load_csv(raw, SCHEMA)
    assert table.row_ids == ("A", "B", "C")
    assert table.column_names == ["Obesity", "DpM"]
    assert math.isnan(table.column("Obesity")[1]) and math.isnan(table.column("Obesity")[2])
    assert table.column("DpM").tolist() == [100.0, 20.0, 300.0]
    # "n/a" is reported, an empty cell is simply missing
    assert [(a.row_id, a.action) for a in report] == [("B", "set-missing")]


def test_load_csv_header_only_gives_empty_table():
    table, report = tabular.load_csv(io.BytesIO(b"Country,DpM,Obesity\n"), SCHEMA)
    assert table.values.shape == (0, 2)
    assert report == []


def test_load_csv_header_order_is_free_and_bom_is_ignored():
    table, _ = tabular.load_csv("﻿Country,DpM,Obesity\nA,1,2\n".encode(), SCHEMA)
    assert table.column("Obesity")[0] == 2.0


def test_load_csv_rejects_schema_mismatch():
    with pytest.raises(tabular.SchemaError, match=r"missing=\['DpM'\].*extra=\['Foo'\]"):
        tabular.load_csv(b"Country,Obesity,Foo\nA,1,2\n", SCHEMA)


def test_load_csv_rejects_duplicate_ids():
    with pytest.raises(tabular.SchemaError, match="'A'"):
        tabular.load_csv(b"Country,Obesity,DpM\nA,1,2\nA,3,4\n", SCHEMA)


def test_bundled_snapshot_shape(snapshot_table, schema):
    assert len(schema) == 27
    assert snapshot_table.values.shape == (165, 26)
    assert len(set(snapshot_table.row_ids)) == 165


def test_covid_role_reserved():
    with pytest.raises(ValueError):
        tabular.AttributeMeta("Obesity", "", "covid-outcome")


def test_table_is_read_only():
    t = make_table({"a": [1.0, 2.0]})
    with pytest.raises(ValueError):
        t.values[0, 0] = 5.0


def test_drop_invalid_rows():
    t = make_table({"a": [1, 2, 3]}, row_ids=["Asian countries", "Chile", "World"])
    out, report = tabular.drop_invalid_rows(t, ["countries", "World"])
    assert out.row_ids == ("Chile",)
    assert {a.row_id for a in report} == {"Asian countries", "World"}
    same, report = tabular.drop_invalid_rows(t, [])
    assert same.equals(t) and report == []
    gone, report = tabular.drop_invalid_rows(t, ["a", "C", "W"])
    assert gone.row_ids == () and len(report) == 3


def test_bundled_blocklist_drops_aggregates(snapshot_table):
    out, report = tabular.drop_invalid_rows(snapshot_table, tabular.load_blocklist(bundled("blocklist.txt")))
    assert len(out.row_ids) == 162
    assert sorted(a.row_id for a in report) == ["Asian countries", "High income", "World"]


def test_column_stats_examples():
    s = tabular.column_stats(make_table({"a": [1, 2, 3, 4, 100]}), "a", 1.5)
    assert (s.q1, s.median, s.q3, s.upper_fence, s.lower_fence) == (2.0, 3.0, 4.0, 7.0, -1.0)
    s = tabular.column_stats(make_table({"a": [5, 5, 5]}), "a")
    assert s.std == 0 and s.iqr == 0 and s.lower_fence == s.upper_fence == 5
    s = tabular.column_stats(make_table({"a": [1, 2, 3]}), "a")
    assert s.mean == 2 and s.std == 1


def test_column_stats_all_missing_raises():
    with pytest.raises(ValueError):
        tabular.column_stats(make_table({"a": [np.nan, np.nan]}), "a")


def _quartile_oracle(xs, p):
    # sort, then interpolate at (n - 1) * p
    xs = sorted(xs)
    h = (len(xs) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
def test_quartiles_match_sort_and_interpolate(xs):
    s = tabular.column_stats(make_table({"a": xs}), "a")
    for got, p in ((s.q1, 0.25), (s.median, 0.5), (s.q3, 0.75)):
        assert got == pytest.approx(_quartile_oracle(xs, p), rel=1e-12, abs=1e-9)
    assert s.iqr >= 0 and s.std >= 0


def test_outlier_flags():
    t = make_table({"a": [1, 2, 3, 4, 100]})
    assert tabular.iqr_outlier_flags(t, "a", 1.5).tolist() == [False] * 4 + [True]
    assert not tabular.iqr_outlier_flags(make_table({"a": [5, 5, 5]}), "a").any()
    assert not tabular.iqr_outlier_flags(t, "a", math.inf).any()


def test_remove_outliers_blanks_cell_or_drops_row():
    t = make_table({"a": [1, 2, 3, 4, 100], "b": [1, 1, 1, 1, 1]})
    out, report = tabular.remove_outliers(t, ["a"], 1.5)
    assert out.row_ids == t.row_ids and math.isnan(out.column("a")[4]) and out.column("b")[4] == 1
    assert [(a.row_id, a.column, a.action) for a in report] == [("r4", "a", "set-missing")]
    out, report = tabular.remove_outliers(t, ["a"], 1.5, drop_row=True)
    assert out.row_ids == ("r0", "r1", "r2", "r3")
    assert report[0].action == "drop-row"


def test_zscore_examples():
    z = tabular.zscore_normalize(make_table({"a": [1, 2, 3], "c": [5, 5, 5]}))
    assert z.table.column("a").tolist() == [-1.0, 0.0, 1.0]
    assert z.table.column("c").tolist() == [0.0, 0.0, 0.0]
    assert z.degenerate == ["c"]
    assert z.stats["a"] == (2.0, 1.0)


def test_zscore_keeps_missing_cells():
    z = tabular.zscore_normalize(make_table({"a": [1, np.nan, 3]}))
    assert math.isnan(z.table.column("a")[1])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40).filter(lambda xs: max(xs) - min(xs) > 1e-3))
def test_zscore_round_trip(xs):
    t = make_table({"a": xs})
    z = tabular.zscore_normalize(t)
    back = z.invert().column("a")
    np.testing.assert_allclose(back, xs, rtol=1e-9, atol=1e-9 * max(1.0, max(abs(x) for x in xs)))
    col = z.table.column("a")
    assert abs(col.mean()) < 1e-9 and abs(col.std(ddof=1) - 1) < 1e-9


def test_write_csv_round_trip(tmp_path):
    t = make_table({"Obesity": [0.1, np.nan], "DpM": [1 / 3, 2e-17]}, row_ids=["A", "B"])
    path = tmp_path / "t.csv"
    tabular.write_csv(t, path)
    back, report = tabular.load_csv(path, SCHEMA)
    assert report == [] and back.row_ids == t.row_ids
    np.testing.assert_array_equal(back.values, t.values)
