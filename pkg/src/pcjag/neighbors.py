"""Exact nearest-neighbour search over integer voxel coordinates.

Points are bucketed into cubic cells of side ``2**shift``; a query scans
shells of cells at growing Chebyshev radius until no unscanned cell can
hold a point at least as close as the best one found. Ties in squared
distance go to the lexicographically smallest point, so results are
fully determined by the point set.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ._parallel import ordered_map
from .errors import PreconditionError
from .pcio import pack_coords

_INF = np.iinfo(np.int64).max
_TARGET_FILL = 4       # mean points per occupied cell
_BATCH = 2048          # queries per batch
_BRUTE_CHUNK = 1 << 22  # distance-matrix entries per brute-force chunk


@lru_cache(maxsize=None)
def _shell(r: int) -> np.ndarray:
    """Cell offsets at Chebyshev distance exactly ``r`` (``<= 1`` for r=1)."""
    rng = np.arange(-r, r + 1)
    g = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    if r > 1:
        g = g[np.abs(g).max(axis=1) == r]
    g.flags.writeable = False
    return g


def _choose_shift(pts: np.ndarray) -> int:
    n = len(pts)
    for shift in range(0, 21):
        occupied = len(np.unique(pack_coords(pts >> shift)))
        if occupied == 1 or n / occupied >= _TARGET_FILL:
            return shift
    return 20


class NeighborIndex:
    """Immutable grid index; safe to query from several threads."""

    def __init__(self, points, shift: int | None = None):
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 3)
        if len(pts) == 0:
            raise PreconditionError("cannot index an empty point set")
        self.shift = _choose_shift(pts) if shift is None else int(shift)
        cells = pts >> self.shift
        ckeys = pack_coords(cells)
        pkeys = pack_coords(pts)
        order = np.lexsort((pkeys, ckeys))
        self.order = order                  # sorted slot -> input row
        self.points = pts[order]
        self.keys = pkeys[order]
        ck = ckeys[order]
        first = np.flatnonzero(np.r_[True, ck[1:] != ck[:-1]])
        self.cell_keys = ck[first]
        self.cell_start = first
        self.cell_count = np.diff(np.r_[first, len(ck)])
        self.cell_lo = cells.min(axis=0)
        self.cell_hi = cells.max(axis=0)
        self._brute_radius = 1
        while (2 * self._brute_radius + 3) ** 3 <= max(27, len(pts) // 8):
            self._brute_radius += 1

    def __len__(self):
        return len(self.points)

    def query(self, queries):
        """Nearest point for each query row.

        Returns ``(index, sqdist)``: row indices into the original ``points``
        array and integer squared distances.
        """
        q = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
        if len(q) == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        chunks = [q[i:i + _BATCH] for i in range(0, len(q), _BATCH)]
        parts = ordered_map(self._query_batch, chunks)
        slot = np.concatenate([p[0] for p in parts])
        d2 = np.concatenate([p[1] for p in parts])
        return self.order[slot], d2

    def _query_batch(self, qb):
        m = len(qb)
        best_d2 = np.full(m, _INF, dtype=np.int64)
        best_key = np.full(m, _INF, dtype=np.int64)
        best_slot = np.full(m, -1, dtype=np.int64)
        qc = qb >> self.shift
        # beyond this Chebyshev radius every occupied cell has been scanned
        rmax = np.maximum(np.abs(qc - self.cell_lo), np.abs(self.cell_hi - qc)).max(axis=1)
        active = np.arange(m)
        cell = 1 << self.shift
        r = 1
        while active.size:
            if r > self._brute_radius:
                self._brute(qb, active, best_d2, best_key, best_slot)
                break
            self._scan(qb, qc, active, _shell(r), best_d2, best_key, best_slot)
            reach = r * cell
            done = (best_d2[active] <= reach * reach) | (rmax[active] <= r)
            active = active[~done]
            r += 1
        return best_slot, best_d2

    def _scan(self, qb, qc, active, offsets, best_d2, best_key, best_slot):
        # query-major pairs keep each query's candidates contiguous
        step = max(1, (1 << 18) // len(offsets))
        for lo in range(0, len(active), step):
            act = active[lo:lo + step]
            nbr = (qc[act][:, None, :] + offsets[None, :, :]).reshape(-1, 3)
            ck = pack_coords(nbr)
            pos = np.searchsorted(self.cell_keys, ck)
            pos = np.minimum(pos, len(self.cell_keys) - 1)
            hit = self.cell_keys[pos] == ck
            if not hit.any():
                continue
            owner = np.repeat(act, len(offsets))[hit]
            start = self.cell_start[pos[hit]]
            count = self.cell_count[pos[hit]]
            total = int(count.sum())
            base = np.repeat(start - (np.cumsum(count) - count), count)
            slots = base + np.arange(total)
            qid = np.repeat(owner, count)
            diff = self.points[slots] - qb[qid]
            d2 = np.einsum("ij,ij->i", diff, diff)
            self._merge(qid, slots, d2, best_d2, best_key, best_slot)

    def _merge(self, qid, slots, d2, best_d2, best_key, best_slot):
        starts = np.flatnonzero(np.r_[True, qid[1:] != qid[:-1]])
        gmin = np.minimum.reduceat(d2, starts)
        sizes = np.diff(np.r_[starts, len(qid)])
        keys = self.keys[slots]
        masked = np.where(d2 == np.repeat(gmin, sizes), keys, _INF)
        kmin = np.minimum.reduceat(masked, starts)
        win = masked == np.repeat(kmin, sizes)
        wslot = slots[win]                 # exactly one winner per group
        q = qid[starts]
        better = (gmin < best_d2[q]) | ((gmin == best_d2[q]) & (kmin < best_key[q]))
        q = q[better]
        best_d2[q] = gmin[better]
        best_key[q] = kmin[better]
        best_slot[q] = wslot[better]

    def _brute(self, qb, active, best_d2, best_key, best_slot):
        step = max(1, _BRUTE_CHUNK // len(self.points))
        for lo in range(0, len(active), step):
            act = active[lo:lo + step]
            diff = self.points[None, :, :] - qb[act][:, None, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            gmin = d2.min(axis=1)
            masked = np.where(d2 == gmin[:, None], self.keys[None, :], _INF)
            win = masked.argmin(axis=1)
            best_d2[act] = gmin
            best_key[act] = self.keys[win]
            best_slot[act] = win


def brute_force_nearest(points, queries):
    """O(N*M) reference search with the same tie rule; for testing."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    keys = pack_coords(pts)
    out_i, out_d = [], []
    for q in np.asarray(queries, dtype=np.int64).reshape(-1, 3):
        d2 = ((pts - q) ** 2).sum(axis=1)
        m = d2.min()
        cand = np.flatnonzero(d2 == m)
        i = cand[np.argmin(keys[cand])]
        out_i.append(i)
        out_d.append(m)
    return np.array(out_i, dtype=np.int64), np.array(out_d, dtype=np.int64)
