import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiscyclegen.errors import ContractError, ParameterError, SchemaError
from aiscyclegen.ingest import (
    AisRecord, AisSequence, attribute_rule, bbox_rule, build_sequences, export_geojson, meridian_rule,
    parse_ais_csv, partition_domains, write_rejection_log,
)

HEADER = "MMSI,BaseDateTime,LAT,LON,SOG,COG,Heading,Length,Width,Draft\n"


def row(mmsi=366000001, ts="2023-01-01T00:00:00", lat=27.0, lon=-90.0, sog=10.0, cog=45.0, heading=44,
        length=100, width=20, draft=5.0):
    return f"{mmsi},{ts},{lat},{lon},{sog},{cog},{heading},{length},{width},{draft}\n"


def test_one_valid_row():
    res = parse_ais_csv((HEADER + row()).encode())
    assert len(res.records) == 1 and res.rejections == []
    r = res.records[0]
    assert (r.mmsi, r.lat, r.lon, r.sog, r.heading, r.draught) == (366000001, 27.0, -90.0, 10.0, 44.0, 5.0)
    assert r.timestamp == 1672531200.0


def test_lat_out_of_range_rejected():
    res = parse_ais_csv((HEADER + row(lat=91.0)).encode())
    assert res.records == []
    assert [(r.row, r.reason) for r in res.rejections] == [(1, "lat out of range")]


def test_ten_row_fixture_with_two_corrupt_rows(tmp_path):
    rows = [row(ts=f"2023-01-01T00:{m:02d}:00") for m in range(10)]
    rows[3] = row(ts="2023-01-01T00:03:00", lon=-181.0)
    rows[7] = row(mmsi="12AB", ts="2023-01-01T00:07:00")
    res = parse_ais_csv((HEADER + "".join(rows)).encode())
    assert len(res.records) == 8
    assert [r.row for r in res.rejections] == [4, 8]
    log = tmp_path / "rej.log"
    write_rejection_log(res.rejections, log)
    assert log.read_text().splitlines() == ["4\tlon out of range", "8\tmmsi is not a 9-digit identifier"]


def test_missing_mandatory_column():
    with pytest.raises(SchemaError, match="LAT"):
        parse_ais_csv(b"MMSI,BaseDateTime,LON\n366000001,2023-01-01T00:00:00,-90\n")


def test_column_map_and_epoch_timestamps():
    text = "id,t,y,x,speed\n366000001,1672531200,27.5,-90.5,3.0\n"
    res = parse_ais_csv(text.encode(), {"mmsi": "id", "timestamp": "t", "lat": "y", "lon": "x", "sog": "speed"})
    r = res.records[0]
    assert (r.timestamp, r.lat, r.lon, r.sog, r.cog) == (1672531200.0, 27.5, -90.5, 3.0, None)


def test_sentinel_values_become_missing():
    res = parse_ais_csv((HEADER + row(heading=511, cog=360.0, length=0)).encode())
    r = res.records[0]
    assert r.heading is None and r.cog is None and r.length is None


def test_output_order_matches_input():
    rows = [row(mmsi=366000000 + i, ts=f"2023-01-01T00:{i:02d}:00") for i in (3, 1, 2)]
    res = parse_ais_csv((HEADER + "".join(rows)).encode())
    assert [r.mmsi for r in res.records] == [366000003, 366000001, 366000002]


def test_record_invariants():
    with pytest.raises(ValueError):
        AisRecord(366000001, 1.0, 95.0, 0.0)
    with pytest.raises(ValueError):
        AisRecord(366000001, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------- windowing


def track(mmsi, n, t0=1_000_000.0, dt=60.0, lon=-90.0):
    return [AisRecord(mmsi, t0 + dt * i, 27.0 + 0.01 * i, lon, sog=float(i)) for i in range(n)]


def test_exact_tiling():
    assert len(build_sequences(track(366000001, 10), T=5, stride=5, features=["sog"])) == 2


def test_remainder_dropped():
    seqs = build_sequences(track(366000001, 9), T=5, stride=5, features=["sog"])
    assert len(seqs) == 1
    assert np.array_equal(seqs[0].feature("sog"), np.arange(5.0))


def test_interleaved_vessels_match_hand_grouping():
    a, b = track(366000001, 6), track(366000002, 4, lon=-80.0)
    stream = [r for pair in zip(a, b) for r in pair] + a[4:]
    seqs = build_sequences(stream, T=3, stride=3, features=["sog", "lon"])
    got = [(s.mmsi, s.feature("sog").tolist()) for s in seqs]
    assert got == [(366000001, [0.0, 1.0, 2.0]), (366000001, [3.0, 4.0, 5.0]), (366000002, [0.0, 1.0, 2.0])]


def test_missing_values_masked():
    recs = track(366000001, 4)
    recs[2] = AisRecord(366000001, recs[2].timestamp, 27.0, -90.0, sog=None)
    s = build_sequences(recs, T=4, stride=4, features=["sog", "lat"])[0]
    assert np.isnan(s.values[2, 0]) and not s.mask[2, 0] and s.mask[2, 1]


def test_gap_splits_track():
    recs = track(366000001, 6) + track(366000001, 6, t0=2_000_000.0)
    assert len(build_sequences(recs, T=6, stride=6, features=["sog"], max_gap=3600)) == 2


def test_empty_records_give_empty_list():
    assert build_sequences([], T=4, stride=2) == []


def test_bad_window_and_feature():
    with pytest.raises(ParameterError):
        build_sequences(track(366000001, 4), T=1)
    with pytest.raises(ParameterError):
        build_sequences(track(366000001, 4), T=2, features=["rot"])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_shuffled_rows_give_identical_sequences(seed):
    recs = track(366000001, 12) + track(366000002, 9, lon=-80.0)
    shuffled = recs[:]
    random.Random(seed).shuffle(shuffled)
    a = build_sequences(recs, T=4, stride=3, features=["sog", "lat"])
    b = build_sequences(shuffled, T=4, stride=3, features=["sog", "lat"])
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.mmsi == y.mmsi and np.array_equal(x.values, y.values) and np.array_equal(x.times, y.times)


# ---------------------------------------------------------------- partitioning


def seq_at(lon, mmsi=366000001, length=None):
    rec = AisRecord(mmsi, 1_000_000.0, 27.0, lon, sog=1.0, length=length)
    return AisSequence(mmsi, rec.timestamp, np.zeros((2, 1)), ("sog",), np.ones((2, 1), bool),
                       np.array([1_000_000.0, 1_000_060.0]), rec)


def test_meridian_split_three_two():
    seqs = [seq_at(lon) for lon in (-95.0, -90.0, -86.0, -84.0, -80.0)]
    split = partition_domains(seqs, meridian_rule(-85.0))
    assert split.counts() == {"source": 3, "target": 2, "discarded": 0}


def test_rule_matching_nothing():
    split = partition_domains([seq_at(-90.0)], bbox_rule((0, 1, 0, 1), (2, 3, 2, 3)))
    assert split.source == [] and split.target == [] and len(split.discarded) == 1


def test_everything_source():
    split = partition_domains([seq_at(-90.0), seq_at(-80.0)], lambda s: "source")
    assert len(split.source) == 2 and split.target == []


def test_overlapping_boxes_violate_contract():
    with pytest.raises(ContractError):
        partition_domains([seq_at(-90.0)], bbox_rule((20, 30, -95, -85), (20, 30, -95, -85)))


def test_attribute_rule():
    seqs = [seq_at(-90.0, length=50.0), seq_at(-90.0, length=150.0), seq_at(-90.0)]
    split = partition_domains(seqs, attribute_rule("length", 100.0))
    assert split.counts() == {"source": 1, "target": 1, "discarded": 1}


@settings(max_examples=30, deadline=None)
@given(lons=st.lists(st.floats(-179, 179), max_size=20), cut=st.floats(-179, 179))
def test_partition_counts_sum(lons, cut):
    split = partition_domains([seq_at(x) for x in lons], meridian_rule(cut))
    assert sum(split.counts().values()) == len(lons)
    assert not {id(s) for s in split.source} & {id(s) for s in split.target}


# ---------------------------------------------------------------- GeoJSON


def latlon_seq(lat, lon):
    n = len(lat)
    vals = np.column_stack([lat, lon])
    return AisSequence(366000001, 1_000_000.0, vals, ("lat", "lon"), np.ones_like(vals, bool),
                       1_000_000.0 + 60.0 * np.arange(n))


def test_geojson_one_linestring(tmp_path):
    doc = export_geojson([latlon_seq([27.0, 27.1, 27.2], [-90.0, -90.1, -90.2])], tmp_path / "o.geojson")
    (feat,) = doc["features"]
    assert feat["geometry"]["type"] == "LineString"
    assert feat["geometry"]["coordinates"][0] == [-90.0, 27.0]
    assert feat["properties"] == {"mmsi": 366000001, "start_time": 1_000_000.0}


def test_geojson_empty(tmp_path):
    doc = export_geojson([], tmp_path / "o.geojson")
    assert doc == {"type": "FeatureCollection", "features": []}


def test_geojson_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    lat, lon = rng.uniform(-80, 80, 7), rng.uniform(-170, 170, 7)
    path = tmp_path / "o.geojson"
    export_geojson([latlon_seq(lat, lon)], path)
    coords = np.array(json.loads(path.read_text())["features"][0]["geometry"]["coordinates"])
    assert np.max(np.abs(coords[:, 0] - lon)) < 1e-6 and np.max(np.abs(coords[:, 1] - lat)) < 1e-6


def test_geojson_skips_sequences_without_position(tmp_path, caplog):
    seq = AisSequence(366000001, 1.0, np.zeros((2, 1)), ("sog",), np.ones((2, 1), bool), np.array([1.0, 2.0]))
    doc = export_geojson([seq], tmp_path / "o.geojson")
    assert doc["features"] == [] and "skipping" in caplog.text
