import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcjag.errors import DomainError, NumericsError, ShapeError
from pcjag.pcio import ColoredPointCloud
from pcjag.sparse import (ConvKernel, SparseTensor, complement_prune, from_cloud, load_kernel,
                          map_features, prune, relu, save_kernel, sigmoid, sparse_conv,
                          to_colors, union)


def rand_tensor(rng, n, c=2, extent=12, stride=1):
    pts = np.unique(rng.integers(0, extent, size=(n, 3)), axis=0) * stride
    return SparseTensor(pts, rng.normal(size=(len(pts), c)), stride)


def coord_set(t):
    return set(map(tuple, t.coords.tolist()))


def dense_conv_oracle(t, k, out_stride):
    """Per-output-point summation over a dict of input features."""
    fm = t.feature_map()
    outs = sorted({tuple((np.array(c) // out_stride) * out_stride) for c in fm})
    res = {}
    for y in outs:
        acc = k.bias.copy()
        for i, off in enumerate(k.offsets):
            src = tuple(int(v) for v in np.array(y) + off * t.stride)
            if src in fm:
                acc = acc + fm[src] @ k.weights[i]
        res[y] = acc
    return res


def test_identity_kernel():
    t = SparseTensor([[1, 2, 3]], [[0.5, -1.0]])
    out = sparse_conv(t, ConvKernel.identity(2))
    np.testing.assert_array_equal(out.features, t.features)


def test_averaging_kernel_hand_sum():
    t = SparseTensor([[0, 0, 0], [1, 0, 0]], [[2.0], [4.0]])
    k = ConvKernel.cube(3, 1, 1, zero=True)
    k = ConvKernel(k.offsets, np.ones_like(k.weights), k.bias)
    out = sparse_conv(t, k)
    np.testing.assert_allclose(out.features[:, 0], [6.0, 6.0])


def test_conv_empty():
    out = sparse_conv(SparseTensor.empty(3), ConvKernel.cube(3, 3, 4, 0))
    assert len(out) == 0 and out.channels == 4


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        sparse_conv(SparseTensor([[0, 0, 0]], [[1.0]]), ConvKernel.identity(2))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("down", [False, True])
def test_conv_matches_dense(seed, down):
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, 80, c=3, extent=8, stride=2 if seed % 2 else 1)
    k = ConvKernel.cube(2 if down else 3, 3, 2, rng)
    k = ConvKernel(k.offsets, k.weights, rng.normal(size=2))
    os_ = 2 * t.stride if down else t.stride
    out = sparse_conv(t, k, os_)
    ref = dense_conv_oracle(t, k, os_)
    assert coord_set(out) == set(ref)
    for c, f in zip(out.coords.tolist(), out.features):
        np.testing.assert_allclose(f, ref[tuple(c)], atol=1e-12)


def test_prune_cases():
    rng = np.random.default_rng(0)
    t = rand_tensor(rng, 1000, extent=20)
    assert coord_set(prune(t, np.ones(len(t), bool))) == coord_set(t)
    assert len(prune(t, np.zeros(len(t), bool))) == 0
    assert len(complement_prune(t, np.ones(len(t), bool))) == 0
    m = rng.random(len(t)) < 0.3
    expect = {c for c, keep in zip(map(tuple, t.coords.tolist()), m) if keep}
    assert coord_set(prune(t, m)) == expect
    assert coord_set(complement_prune(t, m)) == coord_set(t) - expect


def test_prune_mask_forms():
    t = SparseTensor([[0, 0, 0], [1, 0, 0]], [[1.0], [2.0]])
    d = {(0, 0, 0): True, (1, 0, 0): False}
    assert coord_set(prune(t, d)) == {(0, 0, 0)}
    mt = SparseTensor(t.coords, [[0.0], [1.0]])
    assert coord_set(prune(t, mt)) == {(1, 0, 0)}
    with pytest.raises(DomainError):
        prune(t, {(0, 0, 0): True})
    with pytest.raises(DomainError):
        prune(t, np.ones(3, bool))


def test_union_rules():
    a = SparseTensor([[0, 0, 0]], [[1.0, 2.0]])
    b = SparseTensor([[0, 0, 0]], [[3.0, 4.0]])
    np.testing.assert_array_equal(union(a, b).features, [[4.0, 6.0]])
    e = SparseTensor.empty(2)
    u = union(a, e)
    np.testing.assert_array_equal(u.coords, a.coords)
    np.testing.assert_array_equal(u.features, a.features)
    c = SparseTensor([[5, 5, 5]], [[9.0, 9.0]])
    assert coord_set(union(a, c)) == {(0, 0, 0), (5, 5, 5)}
    with pytest.raises(ShapeError):
        union(a, SparseTensor([[0, 0, 0]], [[1.0]]))
    with pytest.raises(ShapeError):
        union(a, SparseTensor([[0, 0, 0]], [[1.0, 1.0]], stride=2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partition_and_union_property(seed):
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, int(rng.integers(0, 60)), c=2, extent=6)
    m = rng.random(len(t)) < 0.5
    u = union(prune(t, m), complement_prune(t, m))
    np.testing.assert_array_equal(u.coords, t.coords)
    np.testing.assert_array_equal(u.features, t.features)


def test_map_features():
    t = SparseTensor([[0, 0, 0]], [[-1.0, 2.0]])
    np.testing.assert_array_equal(map_features(t, relu).features, [[0.0, 2.0]])
    np.testing.assert_array_equal(map_features(SparseTensor([[0, 0, 0]], [[0.0, 0.0]]), sigmoid).features,
                                  [[0.5, 0.5]])
    np.testing.assert_array_equal(map_features(t, lambda x: x).features, t.features)
    with pytest.raises(NumericsError), np.errstate(invalid="ignore"):
        map_features(t, np.log)


def test_sigmoid_is_stable():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(s))
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


def test_tensor_invariants():
    with pytest.raises(ShapeError):
        SparseTensor([[0, 0, 0], [0, 0, 0]], [[1.0], [2.0]])
    with pytest.raises(ShapeError):
        SparseTensor([[1, 0, 0]], [[1.0]], stride=2)
    with pytest.raises(ShapeError):
        SparseTensor([[0, 0, 0]], [[1.0]], stride=3)
    with pytest.raises(NumericsError):
        SparseTensor([[0, 0, 0]], [[np.nan]])
    t = SparseTensor([[2, 0, 0], [1, 0, 0]], [[2.0], [1.0]])
    np.testing.assert_array_equal(t.lookup([[1, 0, 0], [2, 0, 0], [3, 0, 0]]), [0, 1, -1])


def test_from_cloud_modes():
    c = ColoredPointCloud([[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                          [[255, 0, 0], [10, 20, 30], [0, 0, 0]], 3)
    occ = from_cloud(c, "occupancy")
    np.testing.assert_array_equal(occ.features, np.ones((3, 1)))
    col = from_cloud(c, "color")
    i = col.lookup([[0, 0, 0]])[0]
    np.testing.assert_array_equal(col.features[i], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(to_colors(col), c.sorted().colors)


def test_kernel_file_round_trip(tmp_path):
    k = ConvKernel.cube(3, 4, 5, 3)
    save_kernel(k, tmp_path / "k.djwt")
    back = load_kernel(tmp_path / "k.djwt")
    np.testing.assert_array_equal(back.offsets, k.offsets)
    np.testing.assert_allclose(back.weights, k.weights.astype(np.float32))
    assert (tmp_path / "k.djwt").read_bytes()[:4] == b"DJWT"
