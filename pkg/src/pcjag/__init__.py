"""pcjag: joint geometry/attribute point-cloud compression toolkit."""

__version__ = "0.1.0"

from .pcio import ColoredPointCloud, RawPointCloud, devoxelize, read_ply, voxelize, write_ply  # noqa: E402
from .sparse import ConvKernel, SparseTensor  # noqa: E402

__all__ = [
    "ColoredPointCloud", "ConvKernel", "RawPointCloud", "SparseTensor",
    "devoxelize", "read_ply", "voxelize", "write_ply",
]
