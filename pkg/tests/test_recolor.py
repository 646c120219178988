import numpy as np
import pytest
from helpers import exhaustive_nearest, random_cloud, surface_cloud
from hypothesis import given, settings
from hypothesis import strategies as st

from pcjag.errors import ConfigError, DegenerateError, EquivalenceError, FrameError
from pcjag.neighbors import NeighborIndex, brute_force_nearest
from pcjag.pcio import ColoredPointCloud
from pcjag.recolor import (distort_geometry, recolor, recolor_bench, recolor_conventional,
                           recolor_optimized)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.integers(1, 200),
       st.sampled_from([4, 16, 1024]))
def test_index_matches_exhaustive(seed, n, m, extent):
    rng = np.random.default_rng(seed)
    pts = np.unique(rng.integers(0, extent, size=(n, 3)), axis=0)
    q = rng.integers(0, extent, size=(m, 3))
    i, d = NeighborIndex(pts).query(q)
    ri, rd = exhaustive_nearest(pts, q)
    np.testing.assert_array_equal(d, rd)
    np.testing.assert_array_equal(i, ri)


def test_index_far_queries_and_shifts():
    rng = np.random.default_rng(3)
    pts = np.unique(rng.integers(0, 50, size=(500, 3)), axis=0)
    q = rng.integers(-500, 1500, size=(300, 3))
    ri, rd = exhaustive_nearest(pts, q)
    for shift in (0, 2, 5, None):
        i, d = NeighborIndex(pts, shift=shift).query(q)
        np.testing.assert_array_equal(i, ri)
        np.testing.assert_array_equal(d, rd)
    bi, bd = brute_force_nearest(pts, q)
    np.testing.assert_array_equal(bi, ri)


def test_index_threads_agree(monkeypatch):
    c = surface_cloud(20_000, seed=2)
    q = np.random.default_rng(0).integers(0, 1024, size=(5000, 3))
    monkeypatch.setenv("PCJAG_THREADS", "0")
    a = NeighborIndex(c.points).query(q)
    monkeypatch.setenv("PCJAG_THREADS", "4")
    b = NeighborIndex(c.points).query(q)
    np.testing.assert_array_equal(a[0], b[0])


def test_identity_geometry():
    c = random_cloud(2000, seed=1)
    for fn in (recolor_conventional, recolor_optimized):
        r = fn(c, c.points)
        np.testing.assert_array_equal(r.recolored.colors, c.colors)
    assert recolor_optimized(c, c.points).nna_count == 0


def test_nearer_color_wins():
    src = ColoredPointCloud([[0, 0, 0], [10, 0, 0]], [[255, 0, 0], [0, 0, 255]], 4)
    r = recolor_conventional(src, [[1, 0, 0]])
    np.testing.assert_array_equal(r.recolored.colors, [[255, 0, 0]])


def test_tie_goes_to_smallest_coordinate():
    src = ColoredPointCloud([[0, 0, 0], [2, 0, 0]], [[1, 1, 1], [2, 2, 2]], 4)
    for mode in ("conventional", "optimized"):
        r = recolor(src, [[1, 0, 0]], mode)
        np.testing.assert_array_equal(r.recolored.colors, [[1, 1, 1]])


def test_conventional_matches_exhaustive_scan():
    c = random_cloud(5000, seed=4)
    rec = distort_geometry(c, 0.1, 0.0, seed=5)
    r = recolor_conventional(c, rec)
    idx, _ = exhaustive_nearest(c.points, rec)
    np.testing.assert_array_equal(r.recolored.colors, c.colors[idx])


def test_disjoint_geometry():
    c = random_cloud(1000, seed=6, extent=512)
    rec = np.unique(np.random.default_rng(7).integers(512, 1024, size=(500, 3)), axis=0)
    o = recolor_optimized(c, rec)
    assert o.overlap_count == 0
    np.testing.assert_array_equal(o.recolored.colors, recolor_conventional(c, rec).recolored.colors)


def test_distortion_rules():
    c = random_cloud(1000, seed=8)
    np.testing.assert_array_equal(distort_geometry(c, 0, 0, 1), c.points)
    with pytest.raises(DegenerateError):
        distort_geometry(c, 0, 1.0, 1)
    np.testing.assert_array_equal(distort_geometry(c, 0.3, 0.1, 9), distort_geometry(c, 0.3, 0.1, 9))


def test_frame_checks():
    c = random_cloud(100, bit_depth=4, seed=0)
    with pytest.raises(FrameError):
        recolor_conventional(c, [[16, 0, 0]])
    other = ColoredPointCloud(c.points, c.colors, 5)
    with pytest.raises(FrameError):
        recolor_optimized(c, other)
    with pytest.raises(ConfigError):
        recolor(c, c.points, "fast")


def test_bench_report():
    c = surface_cloud(5000, seed=3)
    rep = recolor_bench(c, 0.0, 0.0, 1, seed=0)
    assert rep["equal"] and rep["per_trial"][0]["nna_count"] == 0
    for key in ("conventional_s", "optimized_s", "reduction_pct", "speedup"):
        assert key in rep


def test_bench_detects_mismatch(monkeypatch):
    import pcjag.recolor as rc
    c = random_cloud(500, seed=1)
    real = rc.recolor_optimized

    def broken(source, recon, index=None):
        r = real(source, recon, index)
        cols = r.recolored.colors.copy()
        cols[0] ^= 1
        return rc.RecolorResult(r.recolored.with_points(r.recolored.points, cols),
                                r.overlap_count, r.nna_count, 0.0, 0.0)

    monkeypatch.setattr(rc, "recolor_optimized", broken)
    with pytest.raises(EquivalenceError, match="seed 42"):
        rc.recolor_bench(c, 0.1, 0.0, 1, seed=42)
