import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorlab.box_geometry import Box2D
from anchorlab.net_geometry import (
    LayerSpec,
    NetSpec,
    builtin_net,
    estimate_activation_memory,
    feature_stride,
    layer_dims,
    resize_for_input,
    roi_pool,
    roi_pool_window,
)

VGG = builtin_net("vgg16")
ALEX = builtin_net("alexnet")


def test_vgg16_layout():
    kinds = [layer.kind for layer in VGG.layers]
    assert kinds.count("conv") == 13 and kinds.count("pool") == 5
    assert all(layer.stride == 1 for layer in VGG.layers if layer.kind == "conv")
    assert all(layer.stride == 2 for layer in VGG.layers if layer.kind == "pool")
    assert VGG.layers[-1].name == "pool5"


def test_alexnet_layout():
    kinds = [layer.kind for layer in ALEX.layers]
    assert kinds.count("conv") == 5 and kinds.count("pool") == 3


def test_unknown_net():
    with pytest.raises(ValueError):
        builtin_net("resnet50")


def test_vgg_224_chain():
    r = layer_dims(VGG, (224, 224))
    assert r.dims("conv1_1") == (224, 224)
    assert r.dims("conv5_3") == (14, 14)
    assert r.dims("pool5") == (7, 7)


def test_alexnet_chain():
    r = layer_dims(ALEX)
    assert r.dims("conv1") == (55, 55)
    assert r.dims("pool5") == (6, 6)


def test_vgg_upsampled_kitti():
    assert layer_dims(VGG, (2000, 604)).dims("conv5_3") == (125, 38)


def test_collapse_names_layer():
    with pytest.raises(ValueError, match="pool1"):
        layer_dims(ALEX, (11, 11))


def test_cumulative_stride_column():
    r = layer_dims(VGG, (224, 224))
    assert [row.stride for row in r.rows if row.kind == "pool"] == [2, 4, 8, 16, 32]


@pytest.mark.parametrize("net, layer, stride", [(VGG, "conv5_3", 16), (VGG, "conv4_3", 8), (ALEX, "conv5", 16), (VGG, "conv1_1", 1)])
def test_feature_stride(net, layer, stride):
    assert feature_stride(net, layer) == stride


def test_feature_stride_unknown_layer():
    with pytest.raises(KeyError):
        feature_stride(VGG, "conv6")


@pytest.mark.parametrize("net, layer, window", [(VGG, "conv5_3", (7, 7)), (VGG, "conv4_3", (13, 13)), (ALEX, "conv5", (6, 6))])
def test_roi_windows(net, layer, window):
    assert roi_pool_window(net, layer) == window


def test_roi_window_unsupported():
    with pytest.raises(ValueError):
        roi_pool_window(VGG, "conv3_3")


def test_alexnet_window_matches_pool5():
    assert roi_pool_window(ALEX, "conv5") == layer_dims(ALEX).dims("pool5")


class TestResize:
    def test_default_policy(self):
        assert resize_for_input((1242, 375), long_side=1000)[0] == (1000, 302)

    def test_double(self):
        assert resize_for_input((1242, 375), long_side=2000)[0] == (2000, 604)

    def test_scale_policy(self):
        dims, s = resize_for_input((1242, 375), scale=2000 / 1242)
        assert dims == (2000, 604) and s == 2000 / 1242

    def test_identity(self):
        assert resize_for_input((1242, 375), long_side=1242) == ((1242, 375), 1.0)

    def test_portrait(self):
        assert resize_for_input((375, 1242), long_side=1000)[0] == (302, 1000)

    def test_needs_one_policy(self):
        with pytest.raises(ValueError):
            resize_for_input((10, 10))
        with pytest.raises(ValueError):
            resize_for_input((10, 10), long_side=5, scale=2)


class TestMemory:
    # Values from an independent per-layer script (pooling outputs included):
    #   5000x1510 -> 17_643_520_000 B, 2000x604 -> 2_823_680_000 B
    def test_oom_boundary(self):
        big = estimate_activation_memory(VGG, "conv4_3", (5000, 1510), 4, 2)
        small = estimate_activation_memory(VGG, "conv4_3", (2000, 604), 4, 2)
        assert big == 17_643_520_000
        assert small == 2_823_680_000
        assert small < 12e9 < big

    def test_zero_multiplier(self):
        assert estimate_activation_memory(ALEX, "pool5", (227, 227), 4, 0) == 0

    def test_monotone_in_depth(self):
        names = [layer.name for layer in VGG.layers]
        vals = [estimate_activation_memory(VGG, n, (600, 200)) for n in names]
        assert vals == sorted(vals)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(64, 1500), st.integers(64, 600), st.integers(0, 200), st.integers(0, 200))
    def test_monotone_in_area(self, w, h, dw, dh):
        a = estimate_activation_memory(VGG, "conv4_3", (w, h))
        b = estimate_activation_memory(VGG, "conv4_3", (w + dw, h + dh))
        assert b >= a


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["vgg16", "alexnet"]), st.integers(67, 3000), st.integers(67, 1000))
def test_doubling_input_doubles_dims(name, w, h):
    # AlexNet conv1 (k11, s4, no pad): floor((2n-11)/4) - 2*floor((n-11)/4) - 1 reaches 3.
    bound = {"vgg16": 2, "alexnet": 3}[name]
    net = builtin_net(name)
    one = layer_dims(net, (w, h))
    two = layer_dims(net, (2 * w, 2 * h))
    for a, b in zip(one.rows, two.rows):
        assert abs(b.width - 2 * a.width) <= bound
        assert abs(b.height - 2 * a.height) <= bound


@settings(max_examples=50, deadline=None)
@given(st.integers(67, 3000), st.integers(67, 1000))
def test_stride_independent_of_input(w, h):
    a = layer_dims(VGG, (w, h))
    assert [r.stride for r in a.rows] == [r.stride for r in layer_dims(VGG, (224, 224)).rows]


def test_netspec_validation():
    with pytest.raises(ValueError):
        NetSpec("x", ())
    with pytest.raises(ValueError):
        NetSpec("x", (LayerSpec("a", "conv", 3), LayerSpec("a", "pool", 2, 2)))
    with pytest.raises(ValueError):
        LayerSpec("a", "conv", 0)


class TestRoiPool:
    def test_identity(self, backend):
        grid = np.random.default_rng(0).normal(size=(7, 7, 3))
        out = roi_pool(grid, Box2D(0, 0, 7 * 16, 7 * 16), 16, (7, 7))
        np.testing.assert_array_equal(out, grid)

    def test_constant(self, backend):
        grid = np.full((10, 12, 2), 3.5)
        out = roi_pool(grid, Box2D(13, 7, 101, 77), 8, (4, 3))
        np.testing.assert_array_equal(out, np.full((3, 4, 2), 3.5))

    def test_quadrants(self, backend):
        grid = np.arange(16, dtype=float).reshape(4, 4, 1)
        out = roi_pool(grid, Box2D(0, 0, 4, 4), 1, (2, 2))
        expected = np.array([[grid[:2, :2].max(), grid[:2, 2:].max()], [grid[2:, :2].max(), grid[2:, 2:].max()]])
        np.testing.assert_array_equal(out[..., 0], expected)

    def test_off_grid_bins_are_zero(self, backend):
        grid = np.ones((4, 4, 1))
        out = roi_pool(grid, Box2D(2, 2, 10, 10), 1, (2, 2))
        assert out[0, 0, 0] == 1.0 and out[1, 1, 0] == 0.0

    def test_errors(self):
        grid = np.ones((4, 4, 1))
        with pytest.raises(ValueError):
            roi_pool(grid, Box2D(10, 10, 20, 20), 1, (2, 2))
        with pytest.raises(ValueError):
            roi_pool(grid, Box2D(1, 1, 1, 3), 1, (2, 2))
        with pytest.raises(ValueError):
            roi_pool(grid, Box2D(0, 0, 4, 4), 1, (0, 2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5))
    def test_channel_equivariance_and_monotone(self, seed, ow, oh):
        rng = np.random.default_rng(seed)
        grid = rng.normal(size=(9, 11, 4))
        x1, y1 = rng.uniform(0, 8, 2)
        roi = Box2D(x1 * 4, y1 * 4, (x1 + rng.uniform(0.5, 6)) * 4, (y1 + rng.uniform(0.5, 6)) * 4)
        out = roi_pool(grid, roi, 4, (ow, oh))
        perm = rng.permutation(4)
        np.testing.assert_array_equal(roi_pool(grid[..., perm], roi, 4, (ow, oh)), out[..., perm])
        bumped = grid + np.abs(rng.normal(size=grid.shape)) * (rng.random(grid.shape) < 0.3)
        assert np.all(roi_pool(bumped, roi, 4, (ow, oh)) >= out)


def test_roi_pool_brute_force(backend):
    rng = np.random.default_rng(1)
    grid = rng.normal(size=(6, 8, 2))
    roi = Box2D(1.5 * 8, 0.25 * 8, 7.0 * 8, 5.5 * 8)
    out = roi_pool(grid, roi, 8, (3, 2))
    x1, y1, x2, y2 = 1.5, 0.25, 7.0, 5.5
    for py in range(2):
        for px in range(3):
            xs = int(np.floor(x1 + px * (x2 - x1) / 3))
            xe = int(np.ceil(x1 + (px + 1) * (x2 - x1) / 3))
            ys = int(np.floor(y1 + py * (y2 - y1) / 2))
            ye = int(np.ceil(y1 + (py + 1) * (y2 - y1) / 2))
            cells = [grid[y, x] for y in range(ys, ye) for x in range(xs, xe)]
            np.testing.assert_array_equal(out[py, px], np.max(cells, axis=0))
