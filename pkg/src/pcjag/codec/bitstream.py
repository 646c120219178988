"""Two-substream container and the joint encode/decode pipeline.

Container layout (little-endian)::

    0   4s  magic "DJGC"
    4   B   version (1)
    5   B   bit_depth
    6   I   point_count (decoded geometry)
    10  B   q_geom
    11  B   q_attr
    12  d   source_scale
    20  3d  source_offset
    44  I   geom_len, then geom_len payload bytes
        I   attr_len, then attr_len payload bytes
        I   CRC32 of bytes [0, 44)

The trailing CRC makes every single-byte header corruption detectable;
payload corruption is caught by the substream checksums.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..errors import DecodeError, FormatError
from ..pcio import ColoredPointCloud
from ..recolor import recolor_optimized
from .attribute import MortonAttributeCodec
from .geometry import OctreeGeometryCodec

MAGIC = b"DJGC"
VERSION = 1
_HEAD = struct.Struct("<4sBBIBBd3d")


class GeometryCodec(Protocol):
    def encode(self, cloud: ColoredPointCloud, q_geom: int) -> bytes: ...
    def decode(self, payload: bytes, bit_depth: int, q_geom: int) -> np.ndarray: ...


class AttributeCodec(Protocol):
    def encode(self, recolored: ColoredPointCloud, q_attr: int) -> bytes: ...
    def decode(self, payload: bytes, geom, q_attr: int) -> np.ndarray: ...


@dataclass(frozen=True)
class Bitstream:
    bit_depth: int
    point_count: int
    q_geom: int
    q_attr: int
    source_scale: float
    source_offset: tuple
    geom_payload: bytes
    attr_payload: bytes
    version: int = VERSION
    # not serialized: number of points handed to the encoder
    input_points: int = 0

    @property
    def geom_len(self) -> int:
        return len(self.geom_payload)

    @property
    def attr_len(self) -> int:
        return len(self.attr_payload)

    def _header(self) -> bytes:
        return _HEAD.pack(MAGIC, self.version, self.bit_depth, self.point_count,
                          self.q_geom, self.q_attr, self.source_scale,
                          *self.source_offset)

    def to_bytes(self) -> bytes:
        head = self._header()
        return b"".join([
            head,
            struct.pack("<I", self.geom_len), self.geom_payload,
            struct.pack("<I", self.attr_len), self.attr_payload,
            struct.pack("<I", zlib.crc32(head)),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        data = bytes(data)
        if len(data) < _HEAD.size + 4:
            raise FormatError("stream shorter than its header")
        magic, version, bd, count, qg, qa, scale, ox, oy, oz = _HEAD.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        pos = _HEAD.size
        geom_len = struct.unpack_from("<I", data, pos)[0]
        pos += 4
        if pos + geom_len + 4 > len(data):
            raise DecodeError("geometry substream truncated")
        geom = data[pos:pos + geom_len]
        pos += geom_len
        attr_len = struct.unpack_from("<I", data, pos)[0]
        pos += 4
        if pos + attr_len > len(data):
            raise DecodeError("attribute substream truncated")
        attr = data[pos:pos + attr_len]
        pos += attr_len
        if pos + 4 != len(data):
            raise FormatError("stream length does not match the declared substream lengths")
        if zlib.crc32(data[:_HEAD.size]) != struct.unpack_from("<I", data, pos)[0]:
            raise FormatError("header checksum mismatch")
        if not 1 <= bd <= 16 or qg > bd - 1 or qa < 1 or not scale > 0:
            raise FormatError("header fields out of range")
        return cls(bd, count, qg, qa, scale, (ox, oy, oz), geom, attr, version)

    def bits(self) -> int:
        return 8 * len(self.to_bytes())

    def bpp(self, n_points: int | None = None) -> dict:
        n = n_points or self.input_points or self.point_count
        return {
            "bpp_geom": 8.0 * self.geom_len / n,
            "bpp_attr": 8.0 * self.attr_len / n,
            "bpp_total": self.bits() / n,
        }


def encode_joint(cloud: ColoredPointCloud, q_geom: int, q_attr: int,
                 geometry_codec: GeometryCodec | None = None,
                 attribute_codec: AttributeCodec | None = None) -> Bitstream:
    """Geometry encode, local geometry decode, recolor, attribute encode."""
    gc = geometry_codec or OctreeGeometryCodec()
    ac = attribute_codec or MortonAttributeCodec()
    y_geom = gc.encode(cloud, q_geom)
    recon = gc.decode(y_geom, cloud.bit_depth, q_geom)
    recolored = recolor_optimized(cloud, recon).recolored
    y_attr = ac.encode(recolored, q_attr)
    return Bitstream(cloud.bit_depth, len(recon), q_geom, q_attr, cloud.source_scale,
                     cloud.source_offset, y_geom, y_attr, input_points=len(cloud))


def decode_joint(stream, geometry_codec: GeometryCodec | None = None,
                 attribute_codec: AttributeCodec | None = None) -> ColoredPointCloud:
    if isinstance(stream, (bytes, bytearray)):
        stream = Bitstream.from_bytes(stream)
    if stream.version != VERSION:
        raise FormatError(f"unsupported version {stream.version}")
    gc = geometry_codec or OctreeGeometryCodec()
    ac = attribute_codec or MortonAttributeCodec()
    try:
        geom = gc.decode(stream.geom_payload, stream.bit_depth, stream.q_geom)
    except DecodeError as exc:
        raise DecodeError(f"geometry substream: {exc}") from exc
    if len(geom) != stream.point_count:
        raise DecodeError(
            f"geometry substream decodes {len(geom)} points, header says {stream.point_count}")
    try:
        colors = ac.decode(stream.attr_payload, geom, stream.q_attr)
    except DecodeError as exc:
        raise DecodeError(f"attribute substream: {exc}") from exc
    return ColoredPointCloud(geom, colors, stream.bit_depth, stream.source_scale,
                             stream.source_offset)


def write_bitstream(stream: Bitstream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(stream.to_bytes())


def read_bitstream(path) -> Bitstream:
    with open(path, "rb") as fh:
        return Bitstream.from_bytes(fh.read())
