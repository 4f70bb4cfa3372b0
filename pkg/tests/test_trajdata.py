import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vnfmig import trajdata as td
from vnfmig.mdn import MixtureParams

HEADER = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n"
RECORD = "39.9,116.3,0,164,39744.12,2008-10-23,02:53:04"


def seg(positions, dt=60.0):
    return td.TrajectorySegment(np.asarray(positions, dtype=float), dt)


def test_header_only_file():
    out = td.parse_plt(HEADER)
    assert len(out) == 1 and len(out[0]) == 0


def test_single_record():
    (raw,) = td.parse_plt(HEADER + RECORD + "\n")
    assert raw.lat[0] == 39.9 and raw.lon[0] == 116.3 and raw.alt[0] == 164


def test_two_records_two_seconds_apart():
    text = HEADER + RECORD + "\n" + "39.9001,116.3,0,164,39744.12,2008-10-23,02:53:06\n"
    (raw,) = td.parse_plt(text)
    assert raw.t[1] - raw.t[0] == 2


def test_malformed_and_backwards_records():
    stats = {}
    text = (HEADER + RECORD + "\nnot,a,record\n"
            + "39.9001,116.3,0,164,39744.12,2008-10-23,02:53:10\n"
            + "39.9002,116.3,0,164,39744.12,2008-10-23,02:53:01\n")
    pieces = td.parse_plt(text, "f", stats)
    assert stats["records_skipped"] == 1 and stats["records_parsed"] == 3
    assert [len(p) for p in pieces] == [2, 1]


def test_plt_round_trip():
    rng = np.random.default_rng(0)
    raw = td.synthetic_raw(td.pedestrian_kernel(rng, interval_s=5), 20, rng)
    (back,) = td.parse_plt(td.to_plt_text(raw))
    np.testing.assert_allclose(back.lat, raw.lat, atol=1e-9)
    np.testing.assert_allclose(back.t, raw.t)


def test_projection_scale():
    xy = td.project([39.0, 40.0], [116.3, 116.3], 39.0, 116.3)
    assert xy[1, 1] - xy[0, 1] == pytest.approx(111194.9, abs=0.1)
    assert np.all(td.project(39.9, 116.3, 39.9, 116.3) == 0)
    # equirectangular agrees with great-circle distance at city scale
    lat2, lon2 = 39.91, 116.31
    d = np.linalg.norm(td.project(lat2, lon2, 39.9, 116.3))
    assert d == pytest.approx(td.haversine(39.9, 116.3, lat2, lon2), rel=1e-4)


def test_resampling_interpolates():
    lat0, lon0 = 39.9, 116.3
    lat, lon = td.unproject(np.array([[0, 0], [4, 0], [4, 8]], float), lat0, lon0)
    raw = td.RawTrajectory(lat, lon, np.zeros(3), np.array([0.0, 2.0, 4.0]))
    (s,) = td.project_and_resample(raw, 1.0)
    assert len(s) == 5
    np.testing.assert_allclose(s.positions, [[0, 0], [2, 0], [4, 0], [4, 4], [4, 8]], atol=1e-6)


def test_resampling_splits_on_gaps():
    t = np.array([0, 60, 120, 10_000, 10_060, 10_120], float)
    raw = td.RawTrajectory(np.full(6, 39.9), np.full(6, 116.3), np.zeros(6), t)
    assert [len(s) for s in td.project_and_resample(raw, 60.0, 5.0)] == [3, 3]


def test_speed_filter_examples():
    assert td.speed_filter(seg(np.zeros((50, 2))))
    fast = seg(np.c_[np.arange(50) * 600.0, np.zeros(50)])
    assert not td.speed_filter(fast)
    # 96 walking steps and 4 glitches, all at 1 s spacing
    steps = np.r_[np.ones(96), np.full(4, 30.0)]
    np.random.default_rng(0).shuffle(steps)
    glitchy = td.TrajectorySegment(np.c_[np.r_[0, np.cumsum(steps)], np.zeros(101)], 1.0)
    assert td.speed_filter(glitchy, 2.5, 95)


def test_white_noise_is_stationary():
    rng = np.random.default_rng(1)
    s = seg(np.cumsum(rng.normal(0, 20, (400, 2)), axis=0))
    assert td.is_stationary(s)
    assert len(td.segment_for_stationarity(s)) == 1


def test_mean_shift_gets_split():
    rng = np.random.default_rng(2)
    d = rng.normal(0, 5, (400, 2))
    d[200:, 0] += 60
    s = seg(np.vstack([[0, 0], np.cumsum(d, axis=0)]))
    assert not td.is_stationary(s)
    out = td.segment_for_stationarity(s)
    assert len(out) >= 2
    assert td.stationarity_pass_rate(out) >= 0.92


def test_short_failing_segment_dropped():
    d = np.zeros((100, 2))
    d[:50, 0] = np.random.default_rng(3).normal(0, 1, 50)
    d[50:, 0] = np.random.default_rng(4).normal(50, 30, 50)
    s = seg(np.vstack([[0, 0], np.cumsum(d, axis=0)]))
    cfg = td.PipelineConfig(stationarity_min_len=64)
    for part in td.segment_for_stationarity(s, cfg):
        assert td.is_stationary(part, cfg) or len(part) >= 64


@pytest.mark.parametrize("n,pairs", [(34, 1), (133, 100), (33, 0)])
def test_window_counts(n, pairs):
    w, t = td.make_windows(seg(np.random.default_rng(0).normal(size=(n, 2))))
    assert w.shape == (pairs, 64) and t.shape == (pairs, 2)


def test_constant_velocity_windows():
    s = seg(np.c_[np.arange(40) * 3.0, np.arange(40) * -1.0])
    w, t = td.make_windows(s)
    np.testing.assert_allclose(w, np.tile([3.0, -1.0], (len(w), 32)))
    np.testing.assert_allclose(t, np.tile([3.0, -1.0], (len(t), 1)))


def test_window_alignment():
    s = seg(np.cumsum(np.random.default_rng(5).normal(size=(40, 2)), axis=0))
    w, t = td.make_windows(s)
    d = s.deltas
    np.testing.assert_array_equal(w[2], d[2:34].ravel())
    np.testing.assert_array_equal(t[2], d[34])


def test_split_is_disjoint_and_seeded():
    segs = [seg(np.full((40, 2), i)) for i in range(20)]
    a = td.split_segments(segs, 0.9, seed=1)
    b = td.split_segments(segs, 0.9, seed=1)
    assert len(a.train) == 18 and len(a.validation) == 2
    ids = lambda ss: {int(s.positions[0, 0]) for s in ss}
    assert ids(a.train).isdisjoint(ids(a.validation))
    assert ids(a.train) == ids(b.train)


def test_synthesis_examples():
    rng = np.random.default_rng(6)
    still = MixtureParams.single((0, 0), (1e-9, 1e-9))
    s = td.synthesize_trajectory(still, 50, (10, 20), rng)
    np.testing.assert_allclose(s.positions[-1], [10, 20], atol=1e-6)

    drift = MixtureParams.single((1, 0), (0.5, 0.5))
    ends = np.array([td.synthesize_trajectory(drift, 100, rng=rng).positions[-1] for _ in range(200)])
    band = 3 * 0.5 * np.sqrt(100) / np.sqrt(200)
    assert np.all(np.abs(ends.mean(axis=0) - [100, 0]) < band)


def test_synthesis_seeds_differ_but_agree_in_moments():
    k = MixtureParams([0.7, 0.3], [[30, 10], [0, 0]], [[8, 8], [3, 3]], [0.2, 0])
    a = td.synthesize_trajectory(k, 10_000, rng=np.random.default_rng(1)).deltas
    b = td.synthesize_trajectory(k, 10_000, rng=np.random.default_rng(2)).deltas
    assert not np.array_equal(a, b)
    se = np.sqrt(a.var(axis=0) / 10_000 + b.var(axis=0) / 10_000)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 4 * se)


def test_dataset_file_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    segs = [td.TrajectorySegment(rng.normal(size=(n, 2)) * 1e3, 60.0, f"p{n}") for n in (34, 50)]
    path = tmp_path / "d.csv"
    td.write_dataset(segs, path)
    back = td.read_dataset(path)
    for a, b in zip(segs, back):
        np.testing.assert_array_equal(a.positions, b.positions)
        assert a.parent_id == b.parent_id


def test_pipeline_on_synthetic_corpus(tmp_path):
    td.write_synthetic_corpus(tmp_path, n_files=3, steps=3000, seed=0)
    cfg = td.PipelineConfig()
    res = td.preprocess_directory(tmp_path, cfg)
    m = res.manifest
    assert m["files"] == 3 and m["records_skipped"] == 0
    assert m["segments"] == len(res.segments) >= 1
    assert all(len(s) >= 34 for s in res.segments)
    assert m["stationarity_pass_rate"] >= 0.92
    assert m["windows"] == len(td.windows_from_segments(res.segments)[1])


@settings(max_examples=40, deadline=None)
@given(st.integers(34, 300))
def test_window_count_property(n):
    w, _ = td.make_windows(seg(np.zeros((n, 2))))
    assert len(w) == n - 33
