import numpy as np
import pytest
from helpers import scalar_fuse, scalar_scores

from pcjag import aifm
from pcjag.aifm import (AifmConfig, extract_attribute_prior, fuse, fuse_detail, linear_project,
                        load_config, predict_scores, save_config)
from pcjag.errors import ConfigError, DomainError, ShapeError
from pcjag.sparse import ConvKernel, SparseTensor


def tensor(rng, n, c, extent=10):
    pts = np.unique(rng.integers(0, extent, size=(n, 3)), axis=0)
    return SparseTensor(pts, rng.normal(size=(len(pts), c)))


def small_cfg(seed, alpha=0.02, c=8, pc=4):
    return AifmConfig.random(seed, alpha=alpha, geom_channels=c, prior_channels=pc)


def test_identity_projection():
    cfg = AifmConfig(0.02, ConvKernel.identity(3),
                     [ConvKernel.cube(1, 3, 1, 0), ConvKernel.identity(1),
                      ConvKernel.identity(1), ConvKernel.identity(1)])
    t = tensor(np.random.default_rng(0), 30, 3)
    out = linear_project(t, cfg, "identity")
    np.testing.assert_array_equal(out.features, t.features)


def test_zero_projection_relu():
    cfg = small_cfg(0)
    cfg = AifmConfig(0.02, ConvKernel.cube(1, 4, 8, zero=True), cfg.sp_kernels)
    t = tensor(np.random.default_rng(1), 30, 4)
    out = linear_project(t, cfg, "relu")
    assert np.all(out.features == 0) and np.array_equal(out.coords, t.coords)


def test_projection_dense_oracle():
    rng = np.random.default_rng(2)
    cfg = small_cfg(3)
    t = tensor(rng, 100, 4)
    out = linear_project(t, cfg, "identity")
    W, b = cfg.lp_kernel.weights[0], cfg.lp_kernel.bias
    np.testing.assert_allclose(out.features, t.features @ W + b, atol=1e-12)


def test_zero_scores_are_half():
    z = [ConvKernel.cube(3, a, b, zero=True) for a, b in ((8, 4), (4, 2), (2, 1), (1, 1))]
    cfg = AifmConfig(0.02, ConvKernel.cube(1, 4, 8, 0), z)
    g = tensor(np.random.default_rng(4), 40, 8)
    s = predict_scores(g, cfg).features[:, 0]
    assert np.all(s == 0.5)
    fused = fuse(g, tensor_on(g, 4, 5), cfg)
    np.testing.assert_allclose(fused.features, 1.5 * g.features, rtol=0, atol=1e-15)


def tensor_on(t, c, seed):
    return SparseTensor(t.coords, np.random.default_rng(seed).normal(size=(len(t), c)), t.stride)


def test_scores_in_open_interval():
    cfg = small_cfg(5)
    g = tensor(np.random.default_rng(5), 200, 8)
    s = predict_scores(g, cfg).features
    assert np.all((s > 0) & (s < 1))


def test_scores_chain_oracle():
    cfg = small_cfg(6)
    g = tensor(np.random.default_rng(6), 50, 8, extent=5)
    s = predict_scores(g, cfg).features[:, 0]
    ref = scalar_scores(g, cfg)
    np.testing.assert_allclose(s, [ref[c] for c in map(tuple, g.coords.tolist())], atol=1e-12)


def test_alpha_zero_never_exchanges():
    cfg = small_cfg(7)
    g = tensor(np.random.default_rng(7), 100, 8)
    r = fuse_detail(g, tensor_on(g, 4, 8), cfg, alpha=0.0)
    assert r.exchanged == 0
    np.testing.assert_allclose(r.fused.features, r.scores[:, None] * g.features + g.features)


@pytest.mark.parametrize("seed", range(5))
def test_fuse_scalar_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    cfg = small_cfg(seed)
    g = tensor(rng, 200, 8, extent=7)
    p = tensor_on(g, 4, seed)
    # threshold between two neighbouring scores so both branches are exercised
    # and no score sits on the boundary
    srt = np.sort(predict_scores(g, cfg).features[:, 0])
    alpha = float(srt[len(srt) // 2 - 1] + srt[len(srt) // 2]) / 2
    r = fuse_detail(g, p, cfg, alpha=alpha)
    ref, _ = scalar_fuse(g, p, cfg, alpha)
    assert 0 < r.exchanged < len(g)
    for c, f in zip(map(tuple, g.coords.tolist()), r.fused.features):
        np.testing.assert_allclose(f, ref[c], atol=1e-9, rtol=0)
    # the two branches partition the coordinates
    assert np.array_equal(r.keep, r.scores >= alpha)


def test_fuse_domain_mismatch():
    cfg = small_cfg(0)
    g = tensor(np.random.default_rng(0), 20, 8)
    p = SparseTensor(g.coords[:-1], np.zeros((len(g) - 1, 4)))
    with pytest.raises(DomainError):
        fuse(g, p, cfg)


def test_shape_errors():
    cfg = small_cfg(0)
    g = tensor(np.random.default_rng(0), 20, 5)
    with pytest.raises(ShapeError):
        predict_scores(g, cfg)
    with pytest.raises(ShapeError):
        linear_project(g, cfg)


def test_config_validation():
    cfg = small_cfg(0)
    with pytest.raises(ConfigError):
        AifmConfig(0.0, cfg.lp_kernel, cfg.sp_kernels)
    with pytest.raises(ConfigError):
        AifmConfig(0.02, cfg.lp_kernel, cfg.sp_kernels[:3])
    with pytest.raises(ConfigError):
        AifmConfig(0.02, ConvKernel.cube(1, 4, 6, 0), cfg.sp_kernels)


def test_default_alpha():
    assert aifm.ALPHA == 0.02
    assert AifmConfig.random(0, geom_channels=8, prior_channels=8).alpha == 0.02


def test_prior_pyramid_block():
    cfg = small_cfg(9)
    pts = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)])
    col = SparseTensor(pts, np.full((8, 3), 0.5))
    levels = extract_attribute_prior(col, cfg)
    assert [lv.stride for lv in levels] == [1, 2, 4, 8]
    assert [len(lv) for lv in levels] == [8, 1, 1, 1]
    one = extract_attribute_prior(col, cfg, scales=1)
    assert len(one) == 1 and one[0].stride == 1
    with pytest.raises(ConfigError):
        extract_attribute_prior(col, cfg, scales=0)
    empty = extract_attribute_prior(SparseTensor.empty(3), cfg)
    assert all(len(lv) == 0 for lv in empty)


def test_config_round_trip(tmp_path):
    cfg = small_cfg(11)
    path = save_config(cfg, tmp_path)
    back = load_config(path)
    g = tensor(np.random.default_rng(1), 60, 8)
    p = tensor_on(g, 4, 2)
    a, b = fuse_detail(g, p, cfg), fuse_detail(g, p, back)
    # weights are stored as float32
    np.testing.assert_allclose(a.fused.features, b.fused.features, atol=1e-5)
    assert back.alpha == cfg.alpha
