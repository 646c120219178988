"""Baseline geometry codec: breadth-first octree occupancy bytes, each bit
range coded with one adaptive context per bit position.

Payload layout: range-coded bytes followed by a little-endian CRC32 of
those bytes.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..errors import ConfigError, DecodeError, PreconditionError
from ..pcio import ColoredPointCloud, sort_coords
from .morton import morton_decode, morton_encode
from .rangecoder import Contexts, RangeDecoder, RangeEncoder


def _check_q(q_geom, bit_depth):
    if not 0 <= q_geom <= bit_depth - 1:
        raise ConfigError(f"q_geom {q_geom} outside [0, {bit_depth - 1}]")


def quantize_geometry(points, q_geom: int) -> np.ndarray:
    """Right-shift by ``q_geom`` and deduplicate (sorted)."""
    return sort_coords(np.asarray(points, dtype=np.int64) >> q_geom)


def occupancy_bytes(coords, depth: int) -> np.ndarray:
    """Breadth-first occupancy of an octree of ``depth`` levels; bit ``i``
    of a node's byte marks child ``i``. Nodes within a level are visited
    in Morton order."""
    codes = np.unique(morton_encode(coords, depth))
    out = []
    for level in range(depth):
        shift = 3 * (depth - level - 1)
        node = codes >> (shift + 3)
        child = (codes >> shift) & 7
        starts = np.flatnonzero(np.r_[True, node[1:] != node[:-1]])
        out.append(np.bitwise_or.reduceat(np.left_shift(1, child), starts))
    return np.concatenate(out).astype(np.uint8)


def encode_geometry_octree(cloud: ColoredPointCloud, q_geom: int) -> bytes:
    if len(cloud) == 0:
        raise PreconditionError("cannot encode an empty cloud")
    _check_q(q_geom, cloud.bit_depth)
    depth = cloud.bit_depth - q_geom
    occ = occupancy_bytes(quantize_geometry(cloud.points, q_geom), depth)
    enc = RangeEncoder()
    ctx = Contexts(8)
    put = enc.encode
    for byte in occ.tolist():
        for b in range(7, -1, -1):
            put(ctx, b, (byte >> b) & 1)
    coded = enc.finish()
    return coded + struct.pack("<I", zlib.crc32(coded))


def _unwrap(payload: bytes, what: str) -> bytes:
    if len(payload) < 4:
        raise DecodeError(f"{what} payload too short")
    body, crc = payload[:-4], struct.unpack("<I", payload[-4:])[0]
    if zlib.crc32(body) != crc:
        raise DecodeError(f"{what} payload checksum mismatch")
    return body


def decode_geometry_octree(payload: bytes, bit_depth: int, q_geom: int) -> np.ndarray:
    """Coordinates (lexicographically sorted) at coarse-cell corners."""
    _check_q(q_geom, bit_depth)
    body = _unwrap(bytes(payload), "geometry")
    depth = bit_depth - q_geom
    dec = RangeDecoder(body)
    ctx = Contexts(8)
    get = dec.decode
    nodes = [0]
    for _ in range(depth):
        children = []
        for node in nodes:
            byte = 0
            for b in range(7, -1, -1):
                byte |= get(ctx, b) << b
            if byte == 0:
                raise DecodeError("geometry payload holds an empty octree node")
            base = node << 3
            for i in range(8):
                if byte >> i & 1:
                    children.append(base | i)
        nodes = children
    if dec.consumed != len(body):
        raise DecodeError("geometry payload length does not match its octree")
    coords = morton_decode(np.array(nodes, dtype=np.int64), depth) << q_geom
    return sort_coords(coords)


class OctreeGeometryCodec:
    name = "octree"

    def encode(self, cloud: ColoredPointCloud, q_geom: int) -> bytes:
        return encode_geometry_octree(cloud, q_geom)

    def decode(self, payload: bytes, bit_depth: int, q_geom: int) -> np.ndarray:
        return decode_geometry_octree(payload, bit_depth, q_geom)
