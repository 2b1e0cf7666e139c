import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carmine import discretizer as dz
from carmine.pipeline import bundled
from conftest import make_table

BUNDLED_BINS = dz.ThresholdConfig.load(bundled("thresholds.json"))


def test_bin_value_examples():
    cuts, labels = (10, 35), ("L", "M", "H")
    assert [dz.bin_value(v, cuts, labels) for v in (5, 20, 40)] == ["L", "M", "H"]
    assert dz.bin_value(8.5, (8.5, 25), labels) == "L"
    assert dz.bin_value(600, (25, 100, 500), dz.OUTCOME_LABELS) == "high"


def test_bin_value_rejects_nan():
    with pytest.raises(ValueError):
        dz.bin_value(float("nan"), (1,), ("a", "b"))


@pytest.mark.parametrize("attribute", list(BUNDLED_BINS))
def test_bundled_config_boundaries(attribute):
    """Each cut is the top of its bin; anything above moves up one label."""
    bins = BUNDLED_BINS[attribute]
    for k, cut in enumerate(bins.cuts):
        assert dz.bin_value(cut, bins.cuts, bins.labels) == bins.labels[k]
        above = np.nextafter(cut, np.inf)
        assert dz.bin_value(above, bins.cuts, bins.labels) == bins.labels[k + 1]
    assert dz.bin_value(bins.cuts[0] - 1, bins.cuts, bins.labels) == bins.labels[0]
    assert dz.bin_value(bins.cuts[-1] * 10 + 1, bins.cuts, bins.labels) == bins.labels[-1]


def test_bundled_config_covers_every_attribute(schema):
    names = [a.name for a in schema if a.role != "identifier"]
    assert list(BUNDLED_BINS) == names
    assert BUNDLED_BINS["TpM"].labels == dz.OUTCOME_LABELS
    assert dz.bin_value(15000, BUNDLED_BINS["TpM"].cuts, BUNDLED_BINS["TpM"].labels) == "Minor"


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6, unique=True),
    st.floats(-2e3, 2e3),
    st.floats(0, 500),
)
def test_binning_is_monotone(cuts, v, delta):
    cuts = sorted(cuts)
    labels = [str(i) for i in range(len(cuts) + 1)]
    lo = int(dz.bin_value(v, cuts, labels))
    hi = int(dz.bin_value(v + delta, cuts, labels))
    assert lo <= hi


def test_bins_validation():
    with pytest.raises(ValueError):
        dz.Bins((2, 1), ("a", "b", "c"))
    with pytest.raises(ValueError):
        dz.Bins((1,), ("a",))
    with pytest.raises(ValueError):
        dz.Bins((1,), ("a", "a"))


def test_auto_thresholds_examples():
    assert dz.auto_thresholds(range(1, 9), (0.25, 0.75)) == (2.75, 6.25)
    assert dz.auto_thresholds([1, 2, 3, 4], (0.5,)) == (2.5,)
    with pytest.raises(ValueError, match="fewer bins"):
        dz.auto_thresholds([3, 3, 3, 3], (0.5,))


def test_auto_thresholds_merges_duplicate_cuts():
    with pytest.warns(UserWarning, match="collapsed"):
        cuts = dz.auto_thresholds([1, 1, 1, 1, 1, 1, 2, 3, 4, 5], (0.2, 0.4, 0.9))
    assert cuts == pytest.approx((1.0, 4.1))


@given(st.lists(st.floats(-1e4, 1e4), min_size=4, max_size=50))
def test_auto_thresholds_increasing(values):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cuts = dz.auto_thresholds(values, (0.33, 0.67))
    except ValueError:
        return
    assert all(b > a for a, b in zip(cuts, cuts[1:]))
    assert min(values) <= cuts[0] and cuts[-1] < max(values)


def test_discretize_table_and_histogram():
    t = make_table({"Obesity": [5, 10, 30, np.nan], "DpM": [600, 25, 26, 99]})
    cat = dz.discretize_table(t, BUNDLED_BINS.__class__({k: BUNDLED_BINS[k] for k in ("Obesity", "DpM")}))
    assert cat.column("Obesity") == ["L", "M", "H", None]
    assert cat.column("DpM") == ["high", "Minor", "low", "low"]
    assert dz.category_histogram(cat, "DpM") == {"Minor": 1, "low": 2, "high": 1}
    assert list(dz.category_histogram(cat, "Obesity")) == ["L", "M", "H"]


def test_discretize_edge_cases():
    t = make_table({"a": [1.0, 2.0]})
    empty = dz.discretize_table(t, dz.ThresholdConfig())
    assert empty.attributes == () and empty.row_ids == t.row_ids
    one = dz.discretize_table(make_table({"a": [1.0]}), dz.ThresholdConfig(a=dz.Bins((0.5,), ("x", "y"))))
    assert one.column("a") == ["y"]
    missing = dz.discretize_table(make_table({"a": [np.nan]}), dz.ThresholdConfig(a=dz.Bins((0.5,), ("x", "y"))))
    assert dz.category_histogram(missing, "a") == {}
    with pytest.raises(ValueError, match="unknown"):
        dz.discretize_table(t, dz.ThresholdConfig(zz=dz.Bins((0.5,), ("x", "y"))))


def test_histogram_counts():
    cat = dz.CategoricalTable.from_labels(
        ["a", "b", "c", "d"], {"X": ["L", "L", "M", "H"]}, dz.ThresholdConfig(X=dz.Bins((1, 2), ("L", "M", "H")))
    )
    assert dz.category_histogram(cat, "X") == {"L": 2, "M": 1, "H": 1}
    with pytest.raises(KeyError):
        dz.category_histogram(cat, "Y")


def test_snapshot_has_four_dpm_buckets(snapshot_table):
    cat = dz.discretize_table(snapshot_table, BUNDLED_BINS)
    assert len(cat.attributes) == 26
    hist = dz.category_histogram(cat, "DpM")
    assert list(hist) == list(dz.OUTCOME_LABELS) and min(hist.values()) > 0


def test_categorical_csv_round_trip(tmp_path):
    config = dz.ThresholdConfig(X=dz.Bins((1, 2), ("L", "M", "H")))
    cat = dz.CategoricalTable.from_labels(["a", "b"], {"X": ["H", None]}, config)
    dz.write_categorical_csv(cat, tmp_path / "c.csv")
    assert dz.read_categorical_csv(tmp_path / "c.csv", config).equals(cat)


def test_config_json_round_trip(tmp_path):
    BUNDLED_BINS.dump(tmp_path / "t.json")
    assert json.loads((tmp_path / "t.json").read_text()) == BUNDLED_BINS.to_json()
    assert dz.ThresholdConfig.load(tmp_path / "t.json") == BUNDLED_BINS
