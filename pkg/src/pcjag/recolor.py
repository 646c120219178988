"""Re-colorization: give a geometrically distorted reconstruction the colors
of the original cloud.

Two paths produce identical colors. The conventional one runs a nearest
neighbour search for every reconstructed point; the optimized one maps
points that coincide with a source voxel directly through the coordinate
index and searches only for the rest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateError, EquivalenceError, FrameError, PreconditionError
from .neighbors import NeighborIndex
from .pcio import ColoredPointCloud, pack_coords, sort_coords


@dataclass(frozen=True)
class RecolorResult:
    recolored: ColoredPointCloud
    overlap_count: int
    nna_count: int
    elapsed_overlap: float
    elapsed_nna: float

    @property
    def elapsed(self) -> float:
        return self.elapsed_overlap + self.elapsed_nna


def _recon_coords(source: ColoredPointCloud, recon_geom) -> np.ndarray:
    if len(source) == 0:
        raise PreconditionError("source cloud is empty")
    if isinstance(recon_geom, ColoredPointCloud):
        if not source.same_frame(recon_geom):
            raise FrameError("reconstructed geometry uses a different voxel frame")
        coords = recon_geom.points
    else:
        coords = np.asarray(recon_geom, dtype=np.int64).reshape(-1, 3)
    if len(coords) == 0:
        raise PreconditionError("reconstructed geometry is empty")
    if coords.min() < 0 or coords.max() > source.peak:
        raise FrameError(f"reconstructed coordinates fall outside [0, {source.peak}]")
    return coords


def recolor_conventional(source: ColoredPointCloud, recon_geom, index: NeighborIndex | None = None) -> RecolorResult:
    coords = _recon_coords(source, recon_geom)
    t0 = time.perf_counter()
    index = index or NeighborIndex(source.points)
    nearest, d2 = index.query(coords)
    colors = source.colors[nearest]
    elapsed = time.perf_counter() - t0
    overlap = int(np.count_nonzero(d2 == 0))
    return RecolorResult(source.with_points(coords, colors), overlap,
                         len(coords) - overlap, 0.0, elapsed)


def recolor_optimized(source: ColoredPointCloud, recon_geom, index: NeighborIndex | None = None) -> RecolorResult:
    coords = _recon_coords(source, recon_geom)
    t0 = time.perf_counter()
    src_keys = pack_coords(source.points)
    order = np.argsort(src_keys)
    sorted_keys = src_keys[order]
    q = pack_coords(coords)
    pos = np.minimum(np.searchsorted(sorted_keys, q), len(sorted_keys) - 1)
    hit = sorted_keys[pos] == q
    colors = np.empty((len(coords), 3), dtype=np.uint8)
    colors[hit] = source.colors[order[pos[hit]]]
    t1 = time.perf_counter()
    miss = np.flatnonzero(~hit)
    if len(miss):
        index = index or NeighborIndex(source.points)
        nearest, _ = index.query(coords[miss])
        colors[miss] = source.colors[nearest]
    t2 = time.perf_counter()
    return RecolorResult(source.with_points(coords, colors), int(hit.sum()), len(miss),
                         t1 - t0, t2 - t1)


def recolor(source, recon_geom, mode: str = "optimized") -> RecolorResult:
    if mode == "optimized":
        return recolor_optimized(source, recon_geom)
    if mode == "conventional":
        return recolor_conventional(source, recon_geom)
    raise ConfigError(f"unknown recolor mode {mode!r}")


def distort_geometry(source: ColoredPointCloud, displace_prob: float, drop_prob: float,
                     seed: int) -> np.ndarray:
    """Drop each point with ``drop_prob``; otherwise move it by a uniform
    offset in {-1, 0, 1}^3 with ``displace_prob``. Returns sorted unique
    coordinates clipped to the source frame."""
    for p in (displace_prob, drop_prob):
        if not 0.0 <= p <= 1.0:
            raise PreconditionError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    n = len(source)
    dropped = rng.random(n) < drop_prob
    displaced = rng.random(n) < displace_prob
    steps = rng.integers(-1, 2, size=(n, 3))
    pts = source.points + steps * displaced[:, None]
    pts = np.clip(pts[~dropped], 0, source.peak)
    if len(pts) == 0:
        raise DegenerateError("distortion dropped every point")
    return sort_coords(pts)


def recolor_bench(source: ColoredPointCloud, displace_prob: float, drop_prob: float,
                  trials: int, seed: int) -> dict:
    """Time both paths on ``trials`` distortions; fail loudly on any
    disagreement between them."""
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    rows = []
    for t in range(trials):
        trial_seed = seed + t
        recon = distort_geometry(source, displace_prob, drop_prob, trial_seed)
        conv = recolor_conventional(source, recon)
        opt = recolor_optimized(source, recon)
        if not np.array_equal(conv.recolored.colors, opt.recolored.colors):
            raise EquivalenceError(f"optimized and conventional recolor differ (trial seed {trial_seed})")
        rows.append({
            "seed": trial_seed,
            "points": len(recon),
            "overlap_count": opt.overlap_count,
            "nna_count": opt.nna_count,
            "conventional_s": conv.elapsed,
            "optimized_s": opt.elapsed,
        })
    conv_s = float(np.mean([r["conventional_s"] for r in rows]))
    opt_s = float(np.mean([r["optimized_s"] for r in rows]))
    return {
        "source_points": len(source),
        "trials": trials,
        "displace_prob": displace_prob,
        "drop_prob": drop_prob,
        "equal": True,
        "conventional_s": conv_s,
        "optimized_s": opt_s,
        "speedup": conv_s / opt_s if opt_s > 0 else float("inf"),
        "reduction_pct": 100.0 * (1.0 - opt_s / conv_s) if conv_s > 0 else 0.0,
        "per_trial": rows,
    }
