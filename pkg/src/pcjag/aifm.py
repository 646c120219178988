"""Attribute information fusion: score-gated exchange of geometry features
with projected attribute prior features."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import sparse
from .errors import ConfigError, DomainError, ShapeError
from .sparse import ConvKernel, SparseTensor, sparse_conv

ALPHA = 0.02
DEFAULT_CHANNELS = 32

ACTIVATIONS = {
    "relu": sparse.relu,
    "sigmoid": sparse.sigmoid,
    "identity": sparse.identity,
}


@dataclass(frozen=True, eq=False)
class AifmConfig:
    alpha: float
    lp_kernel: ConvKernel
    sp_kernels: tuple
    scales: int = 4
    prior_kernels: tuple = ()
    lp_activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "sp_kernels", tuple(self.sp_kernels))
        object.__setattr__(self, "prior_kernels", tuple(self.prior_kernels))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha {self.alpha} outside (0, 1)")
        if len(self.sp_kernels) != 4:
            raise ConfigError("score prediction needs exactly four kernels")
        for a, b in zip(self.sp_kernels, self.sp_kernels[1:]):
            if a.c_out != b.c_in:
                raise ConfigError("score-prediction channel chain is broken")
        if self.sp_kernels[-1].c_out != 1:
            raise ConfigError("score prediction must end in one channel")
        if self.lp_activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.lp_activation!r}")
        if self.lp_kernel.c_out != self.sp_kernels[0].c_in:
            raise ConfigError("projection output must match geometry channels")
        if self.scales < 1:
            raise ConfigError("scales must be >= 1")
        if self.prior_kernels and len(self.prior_kernels) != self.scales:
            raise ConfigError("need one prior kernel per scale")

    @property
    def geom_channels(self) -> int:
        return self.sp_kernels[0].c_in

    @property
    def prior_channels(self) -> int:
        return self.lp_kernel.c_in

    @classmethod
    def random(cls, seed: int, alpha: float = ALPHA, geom_channels: int = DEFAULT_CHANNELS,
               prior_channels: int = DEFAULT_CHANNELS, scales: int = 4,
               lp_size: int = 1, sp_size: int = 3) -> "AifmConfig":
        """He-initialised configuration; no trained weights exist."""
        rng = np.random.default_rng(seed)
        lp = ConvKernel.cube(lp_size, prior_channels, geom_channels, rng)
        widths = [geom_channels, max(geom_channels // 2, 1), max(geom_channels // 4, 1),
                  max(geom_channels // 8, 1), 1]
        sp = [ConvKernel.cube(sp_size, widths[i], widths[i + 1], rng) for i in range(4)]
        prior = [ConvKernel.cube(3, 3, prior_channels, rng)]
        prior += [ConvKernel.cube(2, prior_channels, prior_channels, rng)
                  for _ in range(scales - 1)]
        return cls(alpha, lp, sp, scales, prior)


def save_config(cfg: AifmConfig, directory) -> str:
    """Write weights as DJWT files plus ``aifm.json``; returns the json path."""
    os.makedirs(directory, exist_ok=True)
    doc = {
        "alpha": cfg.alpha,
        "scales": cfg.scales,
        "geom_channels": cfg.geom_channels,
        "prior_channels": cfg.prior_channels,
        "lp_activation": cfg.lp_activation,
        "lp": "lp.djwt",
        "sp": [f"sp{i}.djwt" for i in range(4)],
        "prior": [f"prior{i}.djwt" for i in range(len(cfg.prior_kernels))],
    }
    sparse.save_kernel(cfg.lp_kernel, os.path.join(directory, doc["lp"]))
    for k, name in zip(cfg.sp_kernels, doc["sp"]):
        sparse.save_kernel(k, os.path.join(directory, name))
    for k, name in zip(cfg.prior_kernels, doc["prior"]):
        sparse.save_kernel(k, os.path.join(directory, name))
    path = os.path.join(directory, "aifm.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return path


def load_config(path) -> AifmConfig:
    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def k(name):
        return sparse.load_kernel(os.path.join(base, name))

    try:
        return AifmConfig(
            alpha=float(doc["alpha"]),
            lp_kernel=k(doc["lp"]),
            sp_kernels=[k(n) for n in doc["sp"]],
            scales=int(doc.get("scales", 4)),
            prior_kernels=[k(n) for n in doc.get("prior", [])],
            lp_activation=doc.get("lp_activation", "sigmoid"),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc}") from None


def linear_project(prior: SparseTensor, cfg: AifmConfig, activation: str | None = None) -> SparseTensor:
    """Align prior features with the geometry channels (conv, then activation)."""
    if prior.channels != cfg.lp_kernel.c_in:
        raise ShapeError(f"projection expects {cfg.lp_kernel.c_in} channels, got {prior.channels}")
    act = ACTIVATIONS[activation or cfg.lp_activation]
    return sparse.map_features(sparse_conv(prior, cfg.lp_kernel), act)


def predict_scores(geom: SparseTensor, cfg: AifmConfig) -> SparseTensor:
    """Four conv layers, ReLU between them, sigmoid at the end; 1 channel."""
    if geom.channels != cfg.sp_kernels[0].c_in:
        raise ShapeError(f"score prediction expects {cfg.sp_kernels[0].c_in} channels, "
                         f"got {geom.channels}")
    h = geom
    for i, k in enumerate(cfg.sp_kernels):
        h = sparse_conv(h, k)
        h = sparse.map_features(h, sparse.sigmoid if i == 3 else sparse.relu)
    return h


class FuseResult(NamedTuple):
    fused: SparseTensor
    scores: np.ndarray       # (N,) aligned with fused.coords
    keep: np.ndarray         # (N,) bool, s >= alpha
    weighted_geom: SparseTensor
    projected_prior: SparseTensor

    @property
    def exchanged(self) -> int:
        return int((~self.keep).sum())


def fuse_detail(geom: SparseTensor, prior: SparseTensor, cfg: AifmConfig,
                alpha: float | None = None) -> FuseResult:
    alpha = cfg.alpha if alpha is None else alpha
    if geom.stride != prior.stride or not np.array_equal(geom.keys, prior.keys):
        raise DomainError("geometry and prior features live on different coordinates")
    projected = linear_project(prior, cfg)
    if projected.channels != geom.channels:
        raise ShapeError("projected prior channels differ from geometry channels")
    s = predict_scores(geom, cfg).features[:, 0]
    weighted = s[:, None] * geom.features
    keep = s >= alpha
    # exactly one branch per coordinate, so select instead of mask-multiply
    out = np.where(keep[:, None], weighted, projected.features) + geom.features
    return FuseResult(
        SparseTensor(geom.coords, out, geom.stride), s, keep,
        SparseTensor(geom.coords, weighted, geom.stride), projected)


def fuse(geom: SparseTensor, prior: SparseTensor, cfg: AifmConfig) -> SparseTensor:
    return fuse_detail(geom, prior, cfg).fused


def _pyramid(t: SparseTensor, kernels, scales: int) -> list:
    if scales < 1:
        raise ConfigError("scales must be >= 1")
    if len(kernels) < scales:
        raise ConfigError(f"need {scales} kernels, have {len(kernels)}")
    levels = []
    h = t
    for i in range(scales):
        h = sparse_conv(h, kernels[i], h.stride if i == 0 else 2 * h.stride)
        h = sparse.map_features(h, sparse.relu)
        levels.append(h)
    return levels


def extract_attribute_prior(attr: SparseTensor, cfg: AifmConfig, scales: int | None = None) -> list:
    """Prior features at strides 1, 2, 4, ... (one level per scale)."""
    scales = cfg.scales if scales is None else scales
    if scales < 1:
        raise ConfigError("scales must be >= 1")
    if attr.stride != 1 or attr.channels != 3:
        raise ShapeError("attribute prior input must be the 3-channel color tensor at stride 1")
    return _pyramid(attr, cfg.prior_kernels, scales)


def geometry_kernels(seed: int, channels: int = DEFAULT_CHANNELS, scales: int = 4) -> list:
    """Random stand-in for the geometry sub-encoder (weights unpublished)."""
    rng = np.random.default_rng(seed)
    ks = [ConvKernel.cube(3, 1, channels, rng)]
    ks += [ConvKernel.cube(2, channels, channels, rng) for _ in range(scales - 1)]
    return ks


def extract_geometry_features(occupancy: SparseTensor, kernels, scales: int = 4) -> list:
    return _pyramid(occupancy, kernels, scales)


def fuse_multiscale(cloud, cfg: AifmConfig, geom_seed: int) -> list:
    """Run the fusion at every scale of ``cloud``; returns one FuseResult per scale."""
    occ = sparse.from_cloud(cloud, "occupancy")
    col = sparse.from_cloud(cloud, "color")
    geom = extract_geometry_features(
        occ, geometry_kernels(geom_seed, cfg.geom_channels, cfg.scales), cfg.scales)
    prior = extract_attribute_prior(col, cfg)
    return [fuse_detail(g, p, cfg) for g, p in zip(geom, prior)]
