import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfdistill.data import (
    AEP,
    AIR_QUALITY,
    AIRFOIL,
    PRESETS,
    MissingPolicy,
    RawTable,
    Split,
    load_csv,
    manifest,
    mse,
    prepare,
    split_sequential,
    split_sizes,
    whiten,
    write_manifest,
)
from selfdistill.errors import DataError, InputError, SchemaError

AQ_HEADER = "Date;Time;CO(GT);PT08.S1(CO);NMHC(GT);C6H6(GT);PT08.S2(NMHC);NOx(GT);PT08.S3(NOx);NO2(GT);PT08.S4(NO2);PT08.S5(O3);T;RH;AH;;"
AQ_ROWS = [
    "10/03/2004;18.00.00;2,6;1360;150;11,9;1046;166;1056;113;1692;1268;13,6;48,9;0,7578;;",
    "10/03/2004;19.00.00;2;1292;112;9,4;955;103;1174;92;1559;972;13,3;47,7;0,7255;;",
    "10/03/2004;20.00.00;2,2;1402;88;9,0;939;131;1140;-200;1555;1074;11,9;54,0;0,7502;;",
    "10/03/2004;21.00.00;-200;1376;80;9,2;948;172;1092;122;1584;1203;11,0;60,0;0,7867;;",
    "10/03/2004;22.00.00;1,6;1272;51;6,5;836;131;1205;116;1490;1110;11,2;59,6;0,7888;;",
    "10/03/2004;23.00.00;1,2;1197;38;4,7;750;89;1337;96;1393;949;11,2;59,2;bad;;",
    ";;;;;;;;;;;;;;;;",
]


@pytest.fixture
def aq_file(tmp_path):
    path = tmp_path / "AirQualityUCI.csv"
    path.write_text("\n".join([AQ_HEADER] + AQ_ROWS) + "\n")
    return path


def test_air_quality_parsing(aq_file):
    t = load_csv(aq_file, AIR_QUALITY.feature_names, AIR_QUALITY.target_name, MissingPolicy((-200,)))
    assert t.counts == {"rows_read": 7, "rows_dropped_missing": 2, "rows_dropped_unparseable": 1, "rows_kept": 4}
    # -200 in an unused column (CO(GT)) does not drop the row
    assert t.frame.shape == (4, 9)
    np.testing.assert_array_equal(t.frame.iloc[0].to_numpy(), [1360, 1046, 1056, 1692, 1268, 13.6, 48.9, 0.7578, 113])
    assert t.frame.iloc[0]["AH"] == float("0.7578")  # bit-exact


def test_missing_target_drops_one_row(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,y\n1,2,3\n4,5,\n7,8,9\n")
    t = load_csv(path, ["a", "b"], "y")
    assert t.counts["rows_kept"] == 2 and t.counts["rows_dropped_missing"] == 1


def test_tab_and_comma_delimiters(tmp_path):
    p1 = tmp_path / "tab.csv"
    p1.write_text("a\tb\ty\n1.5\t2\t3\n")
    p2 = tmp_path / "comma.csv"
    p2.write_text("a,b,y\n1.5,2,3\n")
    for p in (p1, p2):
        np.testing.assert_array_equal(load_csv(p, ["a", "b"], "y").frame.to_numpy(), [[1.5, 2, 3]])


def test_schema_and_file_errors(tmp_path, aq_file):
    with pytest.raises(SchemaError):
        load_csv(aq_file, ["nope"], "NO2(GT)")
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv", ["a"], "y")


def test_cleaning_is_idempotent(tmp_path, aq_file):
    t = load_csv(aq_file, AIR_QUALITY.feature_names, AIR_QUALITY.target_name, MissingPolicy((-200,)))
    again = tmp_path / "clean.csv"
    t.frame.to_csv(again, index=False)
    t2 = load_csv(again, AIR_QUALITY.feature_names, AIR_QUALITY.target_name, MissingPolicy((-200,)))
    assert t2.counts["rows_kept"] == t.counts["rows_kept"]
    np.testing.assert_array_equal(t2.frame.to_numpy(), t.frame.to_numpy())


def _table(n, d=3, seed=0):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame(rng.standard_normal((n, d + 1)) * 3 + 5, columns=[f"x{i}" for i in range(d)] + ["y"])
    return RawTable(frame, [f"x{i}" for i in range(d)], "y", "memory", {"rows_kept": n})


def test_split_sizes():
    assert split_sizes(10) == (3, 3, 4)
    assert split_sizes(6941) == (2082, 2082, 2777)
    with pytest.raises(InputError):
        split_sizes(10, (0.5, 0.5, 0.5))


@given(st.integers(4, 5000))
def test_split_sizes_within_one_row(total):
    train, val, test = split_sizes(total)
    assert train + val + test == total
    assert 0 <= 0.3 * total - train < 1 and 0 <= 0.3 * total - val < 1
    assert 0 <= test - 0.4 * total < 2


def test_sequential_split_is_contiguous():
    t = _table(10)
    ds = split_sequential(t)
    full = t.frame.to_numpy()
    np.testing.assert_array_equal(ds.train.features, full[:3, :-1])
    np.testing.assert_array_equal(ds.validation.target, full[3:6, -1])
    np.testing.assert_array_equal(ds.test.features, full[6:, :-1])
    assert ds.provenance["split_mode"] == "sequential"


def test_shuffled_split_needs_seed_and_is_deterministic():
    t = _table(30)
    with pytest.raises(InputError):
        split_sequential(t, shuffle=True)
    a = split_sequential(t, shuffle=True, seed=4)
    b = split_sequential(t, shuffle=True, seed=4)
    np.testing.assert_array_equal(a.train.features, b.train.features)
    assert not np.array_equal(a.train.features, split_sequential(t).train.features)


def test_empty_split_rejected():
    with pytest.raises(InputError):
        split_sequential(_table(2))


def test_whitening_properties():
    t = _table(200)
    t.frame["x1"] = 7.0  # constant column
    ds = split_sequential(t)
    w = whiten(ds)
    assert w.whitening.dropped_features == ["x1"]
    assert w.feature_names == ["x0", "x2"]
    assert np.all(np.abs(w.train.features.mean(axis=0)) <= 1e-10)
    np.testing.assert_allclose(w.train.features.std(axis=0), 1.0, atol=1e-10)
    assert abs(w.train.target.mean()) <= 1e-10
    assert not np.allclose(w.test.features.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(w.whitening.unwhiten_features(w.train.features), ds.train.features[:, [0, 2]], atol=1e-10)
    np.testing.assert_allclose(w.whitening.unwhiten_target(w.train.target), ds.train.target, atol=1e-10)
    twice = whiten(w)
    np.testing.assert_allclose(twice.test.features, w.test.features, atol=1e-10)


def test_whitening_uses_train_statistics_only():
    ds = split_sequential(_table(100))
    tampered = type(ds)(ds.feature_names, ds.target_name, ds.train, Split(ds.validation.features * 100, ds.validation.target), ds.test)
    np.testing.assert_array_equal(whiten(tampered).test.features, whiten(ds).test.features)


def test_mse_cases():
    ds = whiten(split_sequential(_table(300)))
    theta = np.array([1.0, -2.0, 0.5])
    perfect = Split(ds.train.features, ds.train.features @ theta)
    assert mse(theta, perfect) == 0.0
    assert mse(np.zeros(3), ds.train) == pytest.approx(1.0, rel=1e-12)
    assert mse(np.zeros(3), ds.test) == pytest.approx(float(np.mean(ds.test.target**2)), rel=1e-12)
    with pytest.raises(InputError):
        mse(np.zeros(2), ds.train)


def test_hourly_downsample(tmp_path):
    stamps = pd.date_range("2016-01-11 17:00:00", periods=60, freq="10min")
    frame = pd.DataFrame({"date": stamps.strftime("%Y-%m-%d %H:%M:%S"), "a": np.arange(60.0), "y": np.arange(60.0) * 2})
    path = tmp_path / "aep.csv"
    frame.to_csv(path, index=False)
    t = load_csv(path, ["a"], "y", hourly_column="date")
    assert t.counts["rows_after_hourly"] == 10
    np.testing.assert_array_equal(t.frame["a"].to_numpy(), np.arange(0, 60, 6))


def test_presets():
    assert set(PRESETS) == {"air_quality", "airfoil", "aep"}
    assert len(AIR_QUALITY.feature_names) == 8 and AIR_QUALITY.feature_names[-1] == "AH"
    assert AIR_QUALITY.target_name == "NO2(GT)" and AIR_QUALITY.sentinels == (-200,)
    assert len(AIRFOIL.feature_names) == 5
    assert len(AEP.feature_names) == 24 and AEP.inferred_features
    assert not {"date", "lights", "Windspeed", "Visibility"} & set(AEP.feature_names)


def test_prepare_and_manifest(tmp_path):
    rng = np.random.default_rng(3)
    lines = [AQ_HEADER]
    for i in range(20):
        vals = ";".join(f"{v:.3f}".replace(".", ",") for v in rng.uniform(1, 100, 13))
        lines.append(f"10/03/2004;{i:02d}.00.00;{vals};;")
    aq_file = tmp_path / "AirQualityUCI.csv"
    aq_file.write_text("\n".join(lines) + "\n")
    ds = prepare(AIR_QUALITY, aq_file)
    assert ds.provenance["rows_kept"] == 20
    assert [ds.train.size, ds.validation.size, ds.test.size] == [6, 6, 8]
    assert abs(ds.train.target.mean()) <= 1e-10
    m = manifest(ds)
    assert len(m["source_sha256"]) == 64
    assert set(m["splits"]) == {"train", "validation", "test"}
    out = tmp_path / "m.json"
    write_manifest(ds, out)
    first = out.read_text()
    write_manifest(prepare(AIR_QUALITY, aq_file), out)
    assert out.read_text() == first
    assert json.loads(first)["provenance"]["dataset"] == "air_quality"


def _airfoil_lines(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 10.0, (n, 5))
    y = x @ np.array([0.5, -1.0, 2.0, 0.1, 3.0]) + 0.1 * rng.standard_normal(n) + 120
    return ["\t".join(repr(float(v)) for v in row) for row in np.column_stack([x, y])]


def test_headerless_airfoil_file(tmp_path):
    path = tmp_path / AIRFOIL.filename
    path.write_text("\n".join(_airfoil_lines(40)) + "\n")
    ds = prepare(AIRFOIL, path)
    assert ds.provenance["rows_kept"] == 40
    assert ds.feature_names == list(AIRFOIL.feature_names)
    labelled = tmp_path / "with_header.tsv"
    labelled.write_text("\t".join(AIRFOIL.feature_names + (AIRFOIL.target_name,)) + "\n" + path.read_text())
    np.testing.assert_array_equal(prepare(AIRFOIL, labelled).test.features, ds.test.features)
