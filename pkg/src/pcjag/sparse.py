"""Sparse voxel tensors: coordinate-indexed feature maps.

Coordinates are kept sorted lexicographically, which fixes the order of
every reduction and makes results reproducible bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, IoError, NumericsError, ShapeError
from .pcio import ColoredPointCloud, pack_coords, unpack_coords

WEIGHT_MAGIC = b"DJWT"


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseTensor:
    coords: np.ndarray      # (N, 3) int64, lexicographically sorted, unique
    features: np.ndarray    # (N, C) float64
    stride: int = 1

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(coords), -1) if len(coords) else feats.reshape(0, 1)
        if feats.ndim != 2 or len(feats) != len(coords):
            raise ShapeError("need exactly one feature vector per coordinate")
        if feats.shape[1] < 1:
            raise ShapeError("channels must be >= 1")
        stride = int(self.stride)
        if stride < 1 or stride & (stride - 1):
            raise ShapeError(f"stride {stride} is not a power of two")
        if not np.all(np.isfinite(feats)):
            raise NumericsError("features must be finite")
        if len(coords) and np.any(coords % stride):
            raise ShapeError(f"coordinates not divisible by stride {stride}")
        keys = pack_coords(coords)
        if len(keys) > 1 and not np.all(keys[1:] > keys[:-1]):
            order = np.argsort(keys, kind="stable")
            keys, coords, feats = keys[order], coords[order], feats[order]
            if np.any(keys[1:] == keys[:-1]):
                raise ShapeError("duplicate coordinates")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "_keys", _frozen(keys))

    @property
    def keys(self) -> np.ndarray:
        return self._keys

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return len(self.coords)

    @classmethod
    def empty(cls, channels=1, stride=1):
        return cls(np.zeros((0, 3), np.int64), np.zeros((0, channels)), stride)

    def lookup(self, coords) -> np.ndarray:
        """Row index of each coordinate, -1 where absent."""
        q = pack_coords(coords)
        if len(self._keys) == 0:
            return np.full(len(q), -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self._keys, q), len(self._keys) - 1)
        return np.where(self._keys[pos] == q, pos, -1)

    def feature_map(self) -> dict:
        return {tuple(c): f for c, f in zip(self.coords.tolist(), self.features)}


@dataclass(frozen=True, eq=False)
class ConvKernel:
    offsets: np.ndarray   # (K, 3) int
    weights: np.ndarray   # (K, C_in, C_out)
    bias: np.ndarray      # (C_out,)

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.int64).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 3 or w.shape[0] != len(off):
            raise ShapeError("weights must be (offsets, C_in, C_out)")
        if w.shape[2] != len(b):
            raise ShapeError("bias length must equal C_out")
        if len(np.unique(pack_coords(off))) != len(off):
            raise ShapeError("kernel offsets must be unique")
        object.__setattr__(self, "offsets", _frozen(off))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "bias", _frozen(b))

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def c_out(self):
        return self.weights.shape[2]

    @classmethod
    def cube(cls, size, c_in, c_out, rng=None, zero=False):
        """``size**3`` kernel, He-normal initialised from ``rng`` (or zeros)."""
        if size == 2:
            offs = list(product((0, 1), repeat=3))
        else:
            r = size // 2
            offs = list(product(range(-r, r + 1), repeat=3))
        k = len(offs)
        if zero:
            w = np.zeros((k, c_in, c_out))
        else:
            rng = np.random.default_rng(rng)
            w = rng.normal(0.0, np.sqrt(2.0 / (k * c_in)), size=(k, c_in, c_out))
        return cls(np.array(offs), w, np.zeros(c_out))

    @classmethod
    def identity(cls, channels):
        return cls(np.zeros((1, 3)), np.eye(channels)[None], np.zeros(channels))


def save_kernel(kernel: ConvKernel, path) -> None:
    """Little-endian layout: 16-byte header ``DJWT, C_in, C_out, K`` (uint32),
    then K*3 int32 offsets, K*C_in*C_out float32 weights, C_out float32 bias."""
    k = len(kernel.offsets)
    blob = [WEIGHT_MAGIC, struct.pack("<3I", kernel.c_in, kernel.c_out, k),
            kernel.offsets.astype("<i4").tobytes(),
            kernel.weights.astype("<f4").tobytes(),
            kernel.bias.astype("<f4").tobytes()]
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(blob))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_kernel(path) -> ConvKernel:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(data) < 16 or data[:4] != WEIGHT_MAGIC:
        raise ConfigError(f"{path}: not a DJWT weight file")
    c_in, c_out, k = struct.unpack_from("<3I", data, 4)
    sizes = (12 * k, 4 * k * c_in * c_out, 4 * c_out)
    if len(data) != 16 + sum(sizes):
        raise ConfigError(f"{path}: size does not match header")
    pos = 16
    off = np.frombuffer(data, "<i4", 3 * k, pos).reshape(k, 3)
    pos += sizes[0]
    w = np.frombuffer(data, "<f4", k * c_in * c_out, pos).reshape(k, c_in, c_out)
    pos += sizes[1]
    b = np.frombuffer(data, "<f4", c_out, pos)
    return ConvKernel(off, w.astype(np.float64), b.astype(np.float64))


def sparse_conv(inp: SparseTensor, kernel: ConvKernel, out_stride: int | None = None) -> SparseTensor:
    """Sparse convolution; ``out[y] = bias + sum_k W_k in[y + k*stride]``.

    With ``out_stride == 2*inp.stride`` the output sites are the input
    coordinates floored to the coarser grid.
    """
    s = inp.stride
    out_stride = s if out_stride is None else int(out_stride)
    if out_stride not in (s, 2 * s):
        raise ShapeError(f"out_stride must be {s} or {2 * s}, got {out_stride}")
    if kernel.c_in != inp.channels:
        raise ShapeError(f"kernel expects {kernel.c_in} channels, tensor has {inp.channels}")
    if out_stride == s:
        out_coords = inp.coords
    else:
        out_coords = unpack_coords(np.unique(pack_coords((inp.coords // out_stride) * out_stride)))
    out = np.broadcast_to(kernel.bias, (len(out_coords), kernel.c_out)).copy()
    if len(out_coords) == 0:
        return SparseTensor(out_coords, out.reshape(0, kernel.c_out), out_stride)
    for k, off in enumerate(kernel.offsets):
        idx = inp.lookup(out_coords + off * s)
        hit = idx >= 0
        if hit.any():
            out[hit] += inp.features[idx[hit]] @ kernel.weights[k]
    return SparseTensor(out_coords, out, out_stride)


def _mask_array(inp: SparseTensor, mask) -> np.ndarray:
    if isinstance(mask, SparseTensor):
        if mask.stride != inp.stride or not np.array_equal(mask.keys, inp.keys):
            raise DomainError("mask tensor is not defined on exactly the input coordinates")
        return mask.features[:, 0] != 0
    if isinstance(mask, dict):
        if len(mask) != len(inp) or any(tuple(c) not in mask for c in inp.coords.tolist()):
            raise DomainError("mask keys differ from the input coordinates")
        return np.array([bool(mask[tuple(c)]) for c in inp.coords.tolist()], dtype=bool)
    m = np.asarray(mask)
    if m.shape != (len(inp),):
        raise DomainError(f"mask has shape {m.shape}, tensor has {len(inp)} coordinates")
    return m.astype(bool)


def prune(inp: SparseTensor, mask) -> SparseTensor:
    """Keep the coordinates where ``mask`` is true.

    ``mask`` is a boolean array aligned with ``inp.coords``, a dict keyed by
    coordinate tuples, or a 1-channel tensor on the same coordinates.
    """
    m = _mask_array(inp, mask)
    return SparseTensor(inp.coords[m], inp.features[m], inp.stride)


def complement_prune(inp: SparseTensor, mask) -> SparseTensor:
    return prune(inp, ~_mask_array(inp, mask))


def union(a: SparseTensor, b: SparseTensor) -> SparseTensor:
    """Coordinate-set union; features at shared coordinates are added."""
    if a.channels != b.channels:
        raise ShapeError(f"channel mismatch {a.channels} vs {b.channels}")
    if a.stride != b.stride:
        raise ShapeError(f"stride mismatch {a.stride} vs {b.stride}")
    keys = np.concatenate([a.keys, b.keys])
    coords = np.concatenate([a.coords, b.coords])
    feats = np.concatenate([a.features, b.features])
    if len(keys) == 0:
        return SparseTensor(coords, feats, a.stride)
    order = np.argsort(keys, kind="stable")
    keys, coords, feats = keys[order], coords[order], feats[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return SparseTensor(coords[starts], np.add.reduceat(feats, starts, axis=0), a.stride)


def map_features(inp: SparseTensor, fn: Callable[[np.ndarray], np.ndarray]) -> SparseTensor:
    """Apply ``fn`` to the (N, C) feature matrix row-wise."""
    out = np.asarray(fn(inp.features), dtype=np.float64)
    if out.shape[0] != len(inp):
        raise ShapeError("fn must return one vector per coordinate")
    if not np.all(np.isfinite(out)):
        raise NumericsError("feature function produced non-finite values")
    if out.ndim == 1:
        out = out[:, None]
    return SparseTensor(inp.coords, out, inp.stride)


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def identity(x):
    return x


def from_cloud(cloud: ColoredPointCloud, mode: str = "occupancy") -> SparseTensor:
    if mode == "occupancy":
        return SparseTensor(cloud.points, np.ones((len(cloud), 1)))
    if mode == "color":
        return SparseTensor(cloud.points, cloud.colors.astype(np.float64) / 255.0)
    raise ConfigError(f"unknown mode {mode!r}")


def to_colors(t: SparseTensor) -> np.ndarray:
    """Inverse of the color mode of :func:`from_cloud`."""
    return np.clip(np.floor(t.features * 255.0 + 0.5), 0, 255).astype(np.uint8)
