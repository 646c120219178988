"""Quality metrics: D1/D2/Y PSNR, BD-rate and the geometry-attribute
correlation study."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial import cKDTree

from .errors import MetricError
from .neighbors import NeighborIndex
from .pcio import ColoredPointCloud, pack_coords

log = logging.getLogger(__name__)

# BT.709 luma
LUMA = np.array([0.2126, 0.7152, 0.0722])
DEFAULT_PEAK = 1023.0
NORMAL_RADIUS = 30.0


class RateDistortionPoint(NamedTuple):
    bpp: float
    quality: float


def _coords(x) -> np.ndarray:
    pts = x.points if isinstance(x, ColoredPointCloud) else x
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 3)
    if len(pts) == 0:
        raise MetricError("empty point set")
    return pts


def _peak(peak, *clouds) -> float:
    if peak is not None:
        if not peak > 0:
            raise MetricError("peak must be positive")
        return float(peak)
    for c in clouds:
        if isinstance(c, ColoredPointCloud):
            return float(c.peak)
    return DEFAULT_PEAK


def _psnr(mse: float, peak_sq: float) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak_sq / mse)


def nearest(src, queries):
    """Nearest ``src`` row for each query (tie: smallest coordinate)."""
    return NeighborIndex(src).query(queries)


def d1_mse(a, b) -> float:
    """Mean squared distance from each point of ``a`` to its nearest in ``b``."""
    _, d2 = nearest(_coords(b), _coords(a))
    return float(np.mean(d2))


def d1_psnr(reference, test, peak=None) -> float:
    a, b = _coords(reference), _coords(test)
    mse = max(d1_mse(a, b), d1_mse(b, a))
    return _psnr(mse, 3.0 * _peak(peak, reference, test) ** 2)


def estimate_normals(cloud, radius: float = NORMAL_RADIUS, chunk: int = 4096) -> np.ndarray:
    """Per-point normal: eigenvector of the smallest eigenvalue of the
    covariance of all points within ``radius`` (the point included).

    Points with fewer than three such neighbours get (0, 0, 1). Signs are
    fixed so the largest-magnitude component is positive.
    """
    if not radius > 0:
        raise MetricError("radius must be positive")
    pts = _coords(cloud).astype(np.float64)
    n = len(pts)
    tree = cKDTree(pts)
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    for lo in range(0, n, chunk):
        block = pts[lo:lo + chunk]
        nbrs = tree.query_ball_point(block, radius)
        counts = np.array([len(x) for x in nbrs])
        idx = np.concatenate([np.asarray(x, dtype=np.int64) for x in nbrs])
        owner = np.repeat(np.arange(len(block)), counts)
        rel = pts[idx] - block[owner]       # centre on the query for conditioning
        s1 = np.stack([np.bincount(owner, rel[:, i], len(block)) for i in range(3)], 1)
        s2 = np.empty((len(block), 3, 3))
        for i in range(3):
            for j in range(i, 3):
                s2[:, i, j] = s2[:, j, i] = np.bincount(owner, rel[:, i] * rel[:, j], len(block))
        ok = counts >= 3
        cnt = counts[ok, None]
        mean = s1[ok] / cnt
        cov = s2[ok] / cnt[:, :, None] - mean[:, :, None] * mean[:, None, :]
        _, vecs = np.linalg.eigh(cov)
        nrm = vecs[:, :, 0]
        normals[lo:lo + len(block)][ok] = nrm
    big = np.argmax(np.abs(normals), axis=1)
    flip = normals[np.arange(n), big] < 0
    normals[flip] *= -1.0
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def d2_psnr(reference, test, ref_normals, peak=None) -> float:
    """Point-to-plane PSNR. Test-to-reference errors project onto the normal
    of the matched reference point; reference-to-test errors onto the normal
    of the reference point itself."""
    a, b = _coords(reference), _coords(test)
    nrm = np.asarray(ref_normals, dtype=np.float64).reshape(-1, 3)
    if len(nrm) != len(a):
        raise MetricError("need one normal per reference point")
    ib, _ = nearest(a, b)
    e_ba = np.einsum("ij,ij->i", (b - a[ib]).astype(np.float64), nrm[ib]) ** 2
    ia, _ = nearest(b, a)
    e_ab = np.einsum("ij,ij->i", (a - b[ia]).astype(np.float64), nrm) ** 2
    mse = max(float(np.mean(e_ab)), float(np.mean(e_ba)))
    return _psnr(mse, 3.0 * _peak(peak, reference, test) ** 2)


def luma(colors) -> np.ndarray:
    return np.asarray(colors, dtype=np.float64) @ LUMA


def _colored(c):
    if not isinstance(c, ColoredPointCloud) or c.colors is None or len(c.colors) != len(c.points):
        raise MetricError("Y-PSNR needs colored clouds")
    if len(c) == 0:
        raise MetricError("empty point set")
    return c


def y_psnr(reference, test) -> float:
    ref, tst = _colored(reference), _colored(test)
    ya, yb = luma(ref.colors), luma(tst.colors)
    ib, _ = nearest(ref.points, tst.points)
    ia, _ = nearest(tst.points, ref.points)
    mse = max(float(np.mean((yb - ya[ib]) ** 2)), float(np.mean((ya - yb[ia]) ** 2)))
    return _psnr(mse, 255.0 ** 2)


# --------------------------------------------------------------------------
# BD-rate

class BdResult(NamedTuple):
    percent: float
    interpolation: str   # "cubic" or "pchip"


def _curve(points) -> tuple:
    pts = [RateDistortionPoint(*p) for p in points]
    if len(pts) < 4:
        raise MetricError("BD-rate needs at least four points per curve")
    rate = np.array([p.bpp for p in pts], dtype=np.float64)
    qual = np.array([p.quality for p in pts], dtype=np.float64)
    if not (np.all(np.isfinite(rate)) and np.all(np.isfinite(qual))) or np.any(rate <= 0):
        raise MetricError("BD-rate needs positive rates and finite qualities")
    order = np.argsort(rate, kind="stable")
    rate, qual = rate[order], qual[order]
    if np.any(np.diff(qual) <= 0):
        raise MetricError("quality must increase strictly with rate")
    return np.log10(rate), qual


def _cubic_monotone(coef, lo, hi) -> bool:
    q = np.linspace(lo, hi, 201)
    return bool(np.all(np.polyval(np.polyder(coef), q) > 0))


def bdbr_detail(curve_a: Sequence, curve_b: Sequence) -> BdResult:
    la, qa = _curve(curve_a)
    lb, qb = _curve(curve_b)
    lo, hi = max(qa.min(), qb.min()), min(qa.max(), qb.max())
    if not hi > lo:
        raise MetricError("curves have no overlapping quality range")
    pa, pb = np.polyfit(qa, la, 3), np.polyfit(qb, lb, 3)
    if _cubic_monotone(pa, lo, hi) and _cubic_monotone(pb, lo, hi):
        ia, ib = np.polyint(pa), np.polyint(pb)
        int_a = np.polyval(ia, hi) - np.polyval(ia, lo)
        int_b = np.polyval(ib, hi) - np.polyval(ib, lo)
        kind = "cubic"
    else:
        int_a = PchipInterpolator(qa, la).integrate(lo, hi)
        int_b = PchipInterpolator(qb, lb).integrate(lo, hi)
        kind = "pchip"
    avg = (int_b - int_a) / (hi - lo)
    return BdResult(float((10.0 ** avg - 1.0) * 100.0), kind)


def bdbr(curve_a: Sequence, curve_b: Sequence) -> float:
    """Average rate difference of ``curve_b`` relative to ``curve_a`` in
    percent over the shared quality range; negative means ``b`` saves bits."""
    return bdbr_detail(curve_a, curve_b).percent


# --------------------------------------------------------------------------
# correlation study

DEFAULT_RADII = tuple(range(10, 201, 10))


@dataclass
class CorrelationReport:
    radii: list
    mean_attr_diff: list          # None where no anchor had neighbours
    slope: float
    intercept: float
    r_squared: float
    degenerate: bool = False
    omitted_radii: list = field(default_factory=list)
    anchors: int = 0
    k: int = 0
    selection: str = "random"

    def as_dict(self) -> dict:
        return asdict(self)


def correlation_analysis(cloud: ColoredPointCloud, anchors: int = 100,
                         radii: Sequence = DEFAULT_RADII, k: int = 20, seed: int = 0,
                         selection: str = "random") -> CorrelationReport:
    """Mean RGB distance between random anchors and up to ``k`` neighbours
    within each radius, plus a least-squares line over (radius, mean).

    ``selection="random"`` draws the ``k`` neighbours uniformly from all
    points inside the radius; ``"nearest"`` takes the ``k`` closest.
    """
    pts = _coords(cloud)
    n = len(pts)
    radii = [float(r) for r in radii]
    if anchors > n or anchors < 1:
        raise MetricError(f"anchors must be in [1, {n}]")
    if k < 1:
        raise MetricError("k must be >= 1")
    if any(b <= a for a, b in zip(radii, radii[1:])) or not radii:
        raise MetricError("radii must be strictly increasing")
    if selection not in ("random", "nearest"):
        raise MetricError(f"unknown selection {selection!r}")

    rng = np.random.default_rng(seed)
    anchor_idx = np.sort(rng.choice(n, size=anchors, replace=False))
    colors = cloud.colors.astype(np.float64)
    keys = pack_coords(pts)
    rmax_sq = radii[-1] ** 2
    sums = np.zeros(len(radii))
    hits = np.zeros(len(radii), dtype=np.int64)
    for ai in anchor_idx:
        d2 = ((pts - pts[ai]) ** 2).sum(axis=1)
        near = np.flatnonzero(d2 <= rmax_sq)
        near = near[near != ai]
        order = np.lexsort((keys[near], d2[near]))
        near = near[order]
        nd2 = d2[near]
        for j, r in enumerate(radii):
            m = int(np.searchsorted(nd2, r * r, side="right"))
            if m == 0:
                continue
            if selection == "nearest" or m <= k:
                sel = near[:min(k, m)]
            else:
                sel = near[np.sort(rng.choice(m, size=k, replace=False))]
            diff = np.linalg.norm(colors[sel] - colors[ai], axis=1)
            sums[j] += diff.mean()
            hits[j] += 1

    means = [float(s / h) if h else None for s, h in zip(sums, hits)]
    omitted = [r for r, m in zip(radii, means) if m is None]
    if omitted:
        log.warning("no neighbours within radii %s; omitted from the fit", omitted)
    x = np.array([r for r, m in zip(radii, means) if m is not None])
    y = np.array([m for m in means if m is not None])
    slope = intercept = r2 = 0.0
    degenerate = True
    if len(x) >= 2:
        slope, intercept = (float(v) for v in np.polyfit(x, y, 1))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot > 0:
            ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
            r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
            degenerate = False
        elif abs(slope) < 1e-12:
            slope = 0.0
    return CorrelationReport(radii, means, slope, intercept, r2, degenerate, omitted,
                             int(anchors), int(k), selection)
