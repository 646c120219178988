from .attribute import MortonAttributeCodec, decode_attribute_morton, encode_attribute_morton
from .bitstream import (
    AttributeCodec,
    Bitstream,
    GeometryCodec,
    decode_joint,
    encode_joint,
    read_bitstream,
    write_bitstream,
)
from .geometry import OctreeGeometryCodec, decode_geometry_octree, encode_geometry_octree
from .loss import OMEGA, LAMBDA_PAIRS, RdLossReport, rd_loss

__all__ = [
    "AttributeCodec", "Bitstream", "GeometryCodec", "MortonAttributeCodec",
    "OctreeGeometryCodec", "OMEGA", "LAMBDA_PAIRS", "RdLossReport",
    "decode_attribute_morton", "decode_geometry_octree", "decode_joint",
    "encode_attribute_morton", "encode_geometry_octree", "encode_joint",
    "rd_loss", "read_bitstream", "write_bitstream",
]
