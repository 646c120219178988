"""Joint rate-distortion loss of a coded cloud:
``L = L_G + omega * L_A`` with ``L_X = R_X + lambda_X * D_X``, where the
geometry distortion is binary cross-entropy over occupancy and the
attribute distortion is the color MSE on a [0, 1] scale."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractError
from ..pcio import ColoredPointCloud, pack_coords
from ..recolor import recolor_optimized
from ..sparse import SparseTensor
from .bitstream import Bitstream, decode_joint

# (lambda_G, lambda_A) for the five rate points, highest rate first.
LAMBDA_PAIRS = ((3.0, 16000.0), (2.0, 8000.0), (1.0, 4000.0), (0.5, 1000.0), (0.25, 400.0))
OMEGA = 1.0
PROB_CLAMP = 1e-6


@dataclass(frozen=True)
class RdLossReport:
    l_total: float
    l_geom: float
    l_attr: float
    rate_geom_bits: float
    rate_attr_bits: float
    rate_geom_bpp: float
    rate_attr_bpp: float
    d_geom_bce: float
    d_attr_mse: float
    omega: float
    lambda_geom: float
    lambda_attr: float

    def as_dict(self) -> dict:
        return asdict(self)


def occupancy_bce(original_coords, probs: SparseTensor) -> float:
    """Mean BCE over the union of ``probs`` coordinates and the original
    coordinates; sites without a probability count as 0."""
    truth = np.unique(pack_coords(original_coords))
    site_keys = probs.keys
    support = np.union1d(truth, site_keys)
    p = np.zeros(len(support))
    p[np.searchsorted(support, site_keys)] = probs.features[:, 0]
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.isin(support, truth)
    return float(-np.mean(np.where(t, np.log(p), np.log1p(-p))))


def rd_loss(original: ColoredPointCloud, stream: Bitstream, decoded: ColoredPointCloud,
            occupancy_probs: SparseTensor | None = None,
            lambdas=LAMBDA_PAIRS[0], omega: float = OMEGA) -> RdLossReport:
    lambda_g, lambda_a = (float(v) for v in lambdas)
    expected = decode_joint(stream)
    got = decoded.sorted()
    if (len(expected) != len(got) or not np.array_equal(expected.points, got.points)
            or not np.array_equal(expected.colors, got.colors)):
        raise ContractError("decoded cloud is not the decoding of the stream")
    n = len(original)
    rg_bits = 8.0 * stream.geom_len
    ra_bits = 8.0 * stream.attr_len
    rg, ra = rg_bits / n, ra_bits / n

    if occupancy_probs is None:
        occupancy_probs = SparseTensor(decoded.points, np.ones((len(decoded), 1)))
    d_geom = occupancy_bce(original.points, occupancy_probs)

    target = recolor_optimized(original, decoded.points).recolored.colors
    diff = (decoded.colors.astype(np.float64) - target.astype(np.float64)) / 255.0
    d_attr = float(np.mean(diff * diff))

    l_geom = rg + lambda_g * d_geom
    l_attr = ra + lambda_a * d_attr
    return RdLossReport(l_geom + omega * l_attr, l_geom, l_attr, rg_bits, ra_bits, rg, ra,
                        d_geom, d_attr, omega, lambda_g, lambda_a)
