"""Synthetic clouds and exhaustive oracles shared by the tests."""

import math

import numpy as np

from pcjag.pcio import ColoredPointCloud


def random_cloud(n, bit_depth=10, seed=0, extent=None):
    """Uniform random unique voxels with random colors."""
    rng = np.random.default_rng(seed)
    hi = (1 << bit_depth) if extent is None else extent
    pts = np.unique(rng.integers(0, hi, size=(n, 3)), axis=0)
    cols = rng.integers(0, 256, size=(len(pts), 3)).astype(np.uint8)
    return ColoredPointCloud(pts, cols, bit_depth)


def surface_cloud(n, bit_depth=10, seed=0):
    """Points on a smooth height field with position-dependent colors."""
    rng = np.random.default_rng(seed)
    side = 1 << bit_depth
    u = rng.integers(0, side, size=(n, 2))
    z = np.clip(side // 2 + (side / 5) * np.sin(u[:, 0] / (side / 7)) * np.cos(u[:, 1] / (side / 5)),
                0, side - 1).astype(np.int64)
    pts = np.unique(np.c_[u, z], axis=0)
    scale = 256.0 / side
    cols = np.c_[pts[:, 0] * scale, pts[:, 1] * scale, (pts[:, 2] * scale * 3) % 256]
    return ColoredPointCloud(pts, cols.astype(np.uint8), bit_depth)


def dense_surface(n, bit_depth=10, seed=0):
    """``n`` distinct columns of a smooth height field, colors following position."""
    side = 1 << bit_depth
    rng = np.random.default_rng(seed)
    cells = rng.choice(side * side, size=n, replace=False)
    x, y = cells // side, cells % side
    z = (side // 2 + (side / 6) * np.sin(x / 97.0) * np.cos(y / 131.0)).astype(np.int64)
    pts = np.c_[x, y, z]
    base = np.c_[x // 4, y // 4, z // 4] % 256
    cols = np.clip(base + rng.integers(-3, 4, size=base.shape), 0, 255).astype(np.uint8)
    return ColoredPointCloud(pts, cols, bit_depth)


def ramp_cloud(spacing=2, bit_depth=10):
    """Flat plane whose gray level is a linear ramp along x."""
    side = 1 << bit_depth
    g = np.arange(0, side, spacing)
    x, y = np.meshgrid(g, g, indexing="ij")
    x, y = x.ravel(), y.ravel()
    pts = np.c_[x, y, np.full_like(x, side // 2)]
    v = np.floor(x * 255.0 / (side - 1) + 0.5).astype(np.uint8)
    return ColoredPointCloud(pts, np.c_[v, v, v], bit_depth)


def exhaustive_nearest(src, queries):
    """O(N*M) nearest neighbour; ties go to the lexicographically smallest source point."""
    src = np.asarray(src, dtype=np.int64)
    order = np.lexsort((src[:, 2], src[:, 1], src[:, 0]))
    s = src[order]
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(np.asarray(queries, dtype=np.int64)):
        d2 = ((s - q) ** 2).sum(axis=1)
        j = int(np.argmin(d2))        # argmin returns the first, i.e. smallest coordinate
        idx[i], dist[i] = order[j], d2[j]
    return idx, dist


# scalar reference for the fusion step

def conv_point(fm, k, y):
    acc = [float(b) for b in k.bias]
    for i, off in enumerate(k.offsets):
        src = (y[0] + int(off[0]), y[1] + int(off[1]), y[2] + int(off[2]))
        if src in fm:
            f = fm[src]
            for o in range(k.c_out):
                acc[o] += sum(float(f[c]) * float(k.weights[i, c, o]) for c in range(k.c_in))
    return acc


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_scores(geom, cfg):
    fm = {c: list(f) for c, f in zip(map(tuple, geom.coords.tolist()), geom.features)}
    for layer, k in enumerate(cfg.sp_kernels):
        nxt = {}
        for y in fm:
            v = conv_point(fm, k, y)
            nxt[y] = [sig(x) for x in v] if layer == 3 else [max(x, 0.0) for x in v]
        fm = nxt
    return {y: v[0] for y, v in fm.items()}


def scalar_fuse(geom, prior, cfg, alpha):
    """Per-coordinate loop: where s >= alpha keep s*g, else take LP(prior); add g."""
    s = scalar_scores(geom, cfg)
    pm = {c: list(f) for c, f in zip(map(tuple, prior.coords.tolist()), prior.features)}
    out = {}
    for c, g in zip(map(tuple, geom.coords.tolist()), geom.features):
        lp = [sig(x) for x in conv_point(pm, cfg.lp_kernel, c)]
        if s[c] >= alpha:
            out[c] = [s[c] * g[i] + g[i] for i in range(len(g))]
        else:
            out[c] = [lp[i] + g[i] for i in range(len(g))]
    return out, s
