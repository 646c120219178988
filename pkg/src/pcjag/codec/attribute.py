"""Baseline attribute codec: DPCM along Morton order with a uniform
residual quantizer and adaptive binary range coding.

Payload layout: uint32 LE point count, range-coded residuals, CRC32 LE of
everything before it.

Per channel, a point is predicted from the previous point's reconstructed
value. The first point is predicted from 128 and coded at unit step so a
flat-colored cloud is reproduced exactly at every step size.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..errors import ConfigError, DecodeError, ShapeError
from ..pcio import ColoredPointCloud, sort_coords
from .morton import morton_order
from .rangecoder import Contexts, RangeDecoder, RangeEncoder

FIRST_PRED = 128
_ZERO, _SIGN, _PREFIX = 0, 1, 2
_NPREFIX = 10
_NCTX = _PREFIX + _NPREFIX


def _check_q(q_attr):
    if not 1 <= q_attr <= 255:
        raise ConfigError(f"q_attr {q_attr} outside [1, 255]")


def quantize_residual(r: int, q: int) -> int:
    """Round half away from zero, so ``|r - q*quantize(r)| <= q // 2``."""
    m = (abs(r) + q // 2) // q
    return -m if r < 0 else m


def _put_value(enc, ctx, v):
    enc.encode(ctx, _ZERO, v != 0)
    if v == 0:
        return
    enc.encode(ctx, _SIGN, v < 0)
    m = abs(v)                      # >= 1; exp-Golomb(0) of m - 1
    nbits = m.bit_length() - 1
    for i in range(nbits):
        enc.encode(ctx, _PREFIX + min(i, _NPREFIX - 1), 1)
    enc.encode(ctx, _PREFIX + min(nbits, _NPREFIX - 1), 0)
    if nbits:
        enc.encode_direct(m - (1 << nbits), nbits)


def _get_value(dec, ctx):
    if not dec.decode(ctx, _ZERO):
        return 0
    neg = dec.decode(ctx, _SIGN)
    nbits = 0
    while dec.decode(ctx, _PREFIX + min(nbits, _NPREFIX - 1)):
        nbits += 1
        if nbits > 16:
            raise DecodeError("attribute residual prefix too long")
    m = (1 << nbits) + (dec.decode_direct(nbits) if nbits else 0)
    return -m if neg else m


def encode_attribute_morton(recolored: ColoredPointCloud, q_attr: int) -> bytes:
    _check_q(q_attr)
    if len(recolored.points) != len(recolored.colors):
        raise ShapeError("coordinate and color counts differ")
    order = morton_order(recolored.points)
    colors = recolored.colors[order].astype(np.int64)
    enc = RangeEncoder()
    banks = [Contexts(_NCTX) for _ in range(3)]
    for ch in range(3):
        ctx = banks[ch]
        vals = colors[:, ch].tolist()
        if not vals:
            continue
        prev = FIRST_PRED
        r = vals[0] - prev
        _put_value(enc, ctx, r)
        prev = vals[0]
        for c in vals[1:]:
            qr = quantize_residual(c - prev, q_attr)
            _put_value(enc, ctx, qr)
            prev = min(max(prev + qr * q_attr, 0), 255)
    head = struct.pack("<I", len(colors))
    body = head + enc.finish()
    return body + struct.pack("<I", zlib.crc32(body))


def decode_attribute_morton(payload: bytes, geom, q_attr: int) -> np.ndarray:
    """Colors for ``geom`` in lexicographic coordinate order."""
    _check_q(q_attr)
    payload = bytes(payload)
    if len(payload) < 8:
        raise DecodeError("attribute payload too short")
    body, crc = payload[:-4], struct.unpack("<I", payload[-4:])[0]
    if zlib.crc32(body) != crc:
        raise DecodeError("attribute payload checksum mismatch")
    count = struct.unpack("<I", body[:4])[0]
    coords = sort_coords(geom)
    if count != len(coords):
        raise DecodeError(
            f"attribute payload codes {count} points, geometry has {len(coords)}")
    order = morton_order(coords)
    dec = RangeDecoder(body[4:])
    out = np.zeros((count, 3), dtype=np.int64)
    for ch in range(3):
        ctx = Contexts(_NCTX)
        if not count:
            continue
        vals = [0] * count
        prev = FIRST_PRED + _get_value(dec, ctx)
        if not 0 <= prev <= 255:
            raise DecodeError("attribute payload decodes to an out-of-range color")
        vals[0] = prev
        for i in range(1, count):
            prev = min(max(prev + _get_value(dec, ctx) * q_attr, 0), 255)
            vals[i] = prev
        out[:, ch] = vals
    if dec.consumed != len(body) - 4:
        raise DecodeError("attribute payload length does not match the geometry")
    colors = np.empty_like(out)
    colors[order] = out
    return colors.astype(np.uint8)


class MortonAttributeCodec:
    name = "morton-dpcm"

    def encode(self, recolored: ColoredPointCloud, q_attr: int) -> bytes:
        return encode_attribute_morton(recolored, q_attr)

    def decode(self, payload: bytes, geom, q_attr: int) -> np.ndarray:
        return decode_attribute_morton(payload, geom, q_attr)
