import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crocs.core import ConfigError, ConsumerRecord, DataError, RepresentativeLoadSet
from crocs.io import (config_from_dict, config_to_dict, day_ordinal, ingest, load_config, load_dataset,
                      ordinal_date, read_partition_csv, read_rls_dir, read_set_matrix, rls_from_dict, rls_to_dict,
                      save_dataset, write_config, write_partition_csv, write_rls_dir, write_set_matrix,
                      write_wide_csv)
from crocs.pipeline import CrocsConfig


def long_csv(path, rows):
    path.write_text("consumer_id,timestamp,kwh\n" + "".join(f"{c},{t},{v}\n" for c, t, v in rows))
    return path


def day_rows(cid, date, phi=4, skip=()):
    step = 24 * 60 // phi
    out = []
    for s in range(phi):
        if s in skip:
            continue
        h, m = divmod(s * step, 60)
        out.append((cid, f"{date}T{h:02d}:{m:02d}:00", float(s + 1)))
    return out


def test_day_ordinals():
    assert day_ordinal(dt.date(1970, 1, 2)) == 1
    assert ordinal_date(day_ordinal(dt.date(2023, 3, 5))) == dt.date(2023, 3, 5)


def test_ingest_long(tmp_path):
    rows = (day_rows("a", "2024-01-01") + day_rows("a", "2024-01-02", skip={2})
            + day_rows("a", "2024-01-06") + day_rows("b", "2024-01-01", skip={0, 1, 2}))
    f = long_csv(tmp_path / "m.csv", rows)
    recs, rep = ingest(f, "long", phi=4, max_missing_fraction=0.25)
    assert [r.consumer_id for r in recs] == ["a"]
    a = recs[0]
    assert a.p == 3
    np.testing.assert_allclose(a.values[1], [1, 2, 3, 4])    # interpolated gap
    assert list(a.day_index) == [day_ordinal(dt.date(2024, 1, d)) for d in (1, 2, 6)]
    assert "b" in rep["excluded_consumers"]
    # 2024-01-06 is a Saturday
    recs, rep = ingest(f, "long", phi=4, workdays_only=True, max_missing_fraction=0.25)
    assert recs[0].p == 2
    assert rep["filtered_days"]["a"] == ["2024-01-06"]


def test_ingest_errors_name_the_problem(tmp_path):
    f = long_csv(tmp_path / "dup.csv", day_rows("a", "2024-01-01") + day_rows("a", "2024-01-01")[:1])
    with pytest.raises(DataError, match="duplicate timestamp 2024-01-01T00:00:00"):
        ingest(f, "long", phi=4)
    rows = day_rows("a", "2024-01-02") + day_rows("a", "2024-01-01")
    with pytest.raises(DataError, match="not increasing"):
        ingest(long_csv(tmp_path / "order.csv", rows), "long", phi=4)
    with pytest.raises(DataError, match="aligned"):
        ingest(long_csv(tmp_path / "al.csv", [("a", "2024-01-01T00:07:00", 1.0)]), "long", phi=4)
    (tmp_path / "col.csv").write_text("id,timestamp,kwh\n")
    with pytest.raises(DataError, match="consumer_id"):
        ingest(tmp_path / "col.csv", "long")
    with pytest.raises(ConfigError):
        ingest(f, "parquet")


def test_wide_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [ConsumerRecord(f"c{i}", rng.random((5, 6)), np.arange(100, 105) * (i + 1)) for i in range(3)]
    write_wide_csv(recs, tmp_path / "w.csv")
    back, _ = ingest(tmp_path / "w.csv", "wide", phi=6)
    for a, b in zip(recs, back):
        assert a.consumer_id == b.consumer_id
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.day_index, b.day_index)
    with pytest.raises(DataError):
        ingest(tmp_path / "w.csv", "wide", phi=7)


def test_dataset_store_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    recs = [ConsumerRecord("x", rng.random((3, 4)), [1, 5, 9]), ConsumerRecord("y", rng.random((2, 4)), [2, 3])]
    save_dataset(tmp_path / "ds", recs, {"consumers": 2})
    back = load_dataset(tmp_path / "ds")
    for a, b in zip(recs, back):
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.day_index, b.day_index)
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nothing")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_set_matrix_round_trip(n, seed):
    import tempfile
    from pathlib import Path
    D = np.random.default_rng(seed).random((n, n))
    with tempfile.TemporaryDirectory() as d:
        f = Path(d) / "m.bin"
        write_set_matrix(D, f)
        raw = f.read_bytes()
        assert raw[:8] == b"CROCSSM1" and len(raw) == 12 + 8 * n * n
        np.testing.assert_array_equal(read_set_matrix(f), D)


def test_set_matrix_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOTAMATRIX")
    with pytest.raises(DataError):
        read_set_matrix(tmp_path / "bad.bin")
    write_set_matrix(np.eye(3), tmp_path / "ok.bin")
    (tmp_path / "cut.bin").write_bytes((tmp_path / "ok.bin").read_bytes()[:-8])
    with pytest.raises(DataError):
        read_set_matrix(tmp_path / "cut.bin")


def test_rls_json_round_trip(tmp_path):
    rls = [RepresentativeLoadSet.ordered("a", [[0.1, 0.2], [0.3, 0.4]], [1, 2], [[7], [3, 9]]),
           RepresentativeLoadSet("b", [[1.0 / 3, 2.0]], [4])]
    write_rls_dir(rls, tmp_path / "rls")
    back = read_rls_dir(tmp_path / "rls")
    for a, b in zip(rls, back):
        assert str(a.consumer_id) == b.consumer_id
        np.testing.assert_array_equal(a.profiles, b.profiles)
        np.testing.assert_array_equal(a.counts, b.counts)
    assert [list(m) for m in back[0].member_days] == [[3, 9], [7]]
    with pytest.raises(DataError):
        rls_from_dict({"consumer_id": "a"})
    assert rls_to_dict(back[1])["total_days"] == 4


def test_partition_csv(tmp_path):
    write_partition_csv(["007", "b"], [1, 0], tmp_path / "p.csv")
    ids, lab = read_partition_csv(tmp_path / "p.csv")
    assert ids == ["007", "b"] and list(lab) == [1, 0]


def test_config_round_trip(tmp_path):
    cfg = CrocsConfig(k_stage1=7, K_consumers=3, distance="dtw-1", seed=5, pairings="all", threads=2)
    write_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


@pytest.mark.parametrize("bad, key", [
    ({"k_stage1": "ten"}, "k_stage1"),
    ({"colour": 1}, "colour"),
    ({"stage1": {"algorithm": "spectral"}}, "stage1"),
    ({"stage1": {"restarts": 2.5}}, "stage1.restarts"),
    ({"stage2": {"bogus": 1}}, "stage2.bogus"),
    ({"distance": "cosine"}, "distance"),
    ({"set_distance": "frechet"}, "set_distance"),
    ({"threads": 0}, "threads"),
    ({"max_missing_fraction": "lots"}, "max_missing_fraction"),
])
def test_config_errors_name_the_key(bad, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        config_from_dict(bad)


def test_config_file_errors(tmp_path):
    (tmp_path / "bad.yaml").write_text("k_stage1: [1,\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
