"""Layer-by-layer shape arithmetic for VGG16 and AlexNet feature extractors.

Convolutions use floor-mode output sizes, pooling uses ceil-mode (the Caffe
convention), which is what makes odd input sizes such as 604 survive five
pooling stages without collapsing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from anchorlab import kernels
from anchorlab.box_geometry import Box2D

CONV = "conv"
POOL = "pool"


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    kernel: int
    stride: int = 1
    padding: int = 0
    output_channels: int = 0

    def __post_init__(self):
        if self.kind not in (CONV, POOL):
            raise ValueError(f"layer {self.name}: unknown kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ValueError(f"layer {self.name}: need kernel >= 1, stride >= 1, padding >= 0")

    def output_size(self, n: int) -> int:
        span = n + 2 * self.padding - self.kernel
        if self.kind == POOL:
            return -(-span // self.stride) + 1
        return span // self.stride + 1


@dataclass(frozen=True)
class NetSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    default_input: tuple[int, int] = (224, 224)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names in {self.name}")

    def index(self, layer_name: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.name == layer_name:
                return i
        raise KeyError(f"{self.name} has no layer {layer_name!r}")

    def truncated(self, layer_name: str) -> "NetSpec":
        return NetSpec(self.name, self.layers[: self.index(layer_name) + 1], self.default_input)


@dataclass(frozen=True)
class LayerRow:
    name: str
    kind: str
    width: int
    height: int
    channels: int
    stride: int
    elements: int
    bytes: int


@dataclass(frozen=True)
class LayerReport:
    net: str
    input_dims: tuple[int, int]
    rows: tuple[LayerRow, ...]

    def __getitem__(self, name: str) -> LayerRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def dims(self, name: str) -> tuple[int, int]:
        row = self[name]
        return (row.width, row.height)

    @property
    def total_bytes(self) -> int:
        return sum(r.bytes for r in self.rows)


def _conv(name, channels, kernel=3, stride=1, padding=1):
    return LayerSpec(name, CONV, kernel, stride, padding, channels)


def _pool(name, channels, kernel=2, stride=2):
    return LayerSpec(name, POOL, kernel, stride, 0, channels)


def _vgg16() -> NetSpec:
    layers = []
    for block, (n_conv, ch) in enumerate([(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)], start=1):
        layers += [_conv(f"conv{block}_{i}", ch) for i in range(1, n_conv + 1)]
        layers.append(_pool(f"pool{block}", ch))
    return NetSpec("vgg16", tuple(layers), (224, 224))


def _alexnet() -> NetSpec:
    layers = (
        _conv("conv1", 96, kernel=11, stride=4, padding=0),
        _pool("pool1", 96, kernel=3, stride=2),
        _conv("conv2", 256, kernel=5, padding=2),
        _pool("pool2", 256, kernel=3, stride=2),
        _conv("conv3", 384),
        _conv("conv4", 384),
        _conv("conv5", 256),
        _pool("pool5", 256, kernel=3, stride=2),
    )
    return NetSpec("alexnet", layers, (227, 227))


_BUILTINS = {"vgg16": _vgg16, "alexnet": _alexnet}

# Fixed ROI pooling grids for the feature layers the detector is run on.
ROI_WINDOWS = {
    ("vgg16", "conv5_3"): (7, 7),
    ("vgg16", "conv4_3"): (13, 13),
    ("alexnet", "conv5"): (6, 6),
}


def builtin_net(name: str) -> NetSpec:
    try:
        return _BUILTINS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown network {name!r}; choose from {sorted(_BUILTINS)}") from None


def layer_dims(net: NetSpec, input_dims: tuple[int, int] | None = None, bytes_per_element: int = 4) -> LayerReport:
    """Output size, cumulative stride and activation size of every layer.

    Raises ``ValueError`` naming the first layer whose output would be empty.
    """
    w, h = input_dims if input_dims is not None else net.default_input
    if w < 1 or h < 1:
        raise ValueError(f"input dims must be >= 1, got {w}x{h}")
    input_dims = (w, h)
    rows = []
    stride = 1
    for layer in net.layers:
        w, h = layer.output_size(w), layer.output_size(h)
        if w < 1 or h < 1:
            raise ValueError(f"layer {layer.name} of {net.name} produces {w}x{h} from input {input_dims[0]}x{input_dims[1]}")
        stride *= layer.stride
        elements = w * h * layer.output_channels
        rows.append(LayerRow(layer.name, layer.kind, w, h, layer.output_channels, stride, elements, elements * bytes_per_element))
    return LayerReport(net.name, input_dims, tuple(rows))


def feature_stride(net: NetSpec, layer_name: str) -> int:
    return math.prod(layer.stride for layer in net.layers[: net.index(layer_name) + 1])


def roi_pool_window(net: NetSpec, layer_name: str) -> tuple[int, int]:
    try:
        return ROI_WINDOWS[(net.name, layer_name)]
    except KeyError:
        supported = ", ".join(f"{n}/{l}" for n, l in ROI_WINDOWS)
        raise ValueError(f"no ROI pooling window for {net.name}/{layer_name}; supported: {supported}") from None


def roi_pool(feature_grid, roi: Box2D, stride: float, output: tuple[int, int]) -> np.ndarray:
    """Max-pool the part of ``feature_grid`` under ``roi`` into a fixed grid.

    ``feature_grid`` is indexed ``[y, x, channel]``; cell ``(x, y)`` covers
    ``[x, x + 1) x [y, y + 1)`` in feature coordinates. The ROI is projected by
    dividing by ``stride`` and split into ``output = (w, h)`` even bins whose
    edges are rounded outward. Returns an ``(h, w, channels)`` array; bins that
    fall off the grid are 0.
    """
    grid = np.asarray(feature_grid, dtype=np.float64)
    if grid.ndim != 3:
        raise ValueError(f"feature grid must be 3-D (h, w, c), got shape {grid.shape}")
    out_w, out_h = output
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output dims must be >= 1, got {output}")
    x1, y1, x2, y2 = (v / stride for v in roi.as_tuple())
    if not (x2 > x1 and y2 > y1):
        raise ValueError(f"roi {roi.as_tuple()} has no area")
    height, width = grid.shape[:2]
    if x2 <= 0 or y2 <= 0 or x1 >= width or y1 >= height:
        raise ValueError(f"roi {roi.as_tuple()} lies outside the {width}x{height} feature grid")
    return kernels.roi_max_pool(grid, x1, y1, x2, y2, int(out_w), int(out_h))


def resize_for_input(image_dims: tuple[int, int], long_side: float | None = None, scale: float | None = None):
    """Aspect-preserving resize. Returns ``((new_w, new_h), scale)``.

    Exactly one of ``long_side`` or ``scale`` must be given. The long side is
    hit exactly; the other side is rounded half up.
    """
    w, h = image_dims
    if w <= 0 or h <= 0:
        raise ValueError(f"image dims must be positive, got {image_dims}")
    if (long_side is None) == (scale is None):
        raise ValueError("give exactly one of long_side or scale")
    if long_side is not None:
        scale = long_side / max(w, h)
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")

    def rnd(v):
        return max(1, int(math.floor(v + 0.5)))

    if long_side is not None:
        new = (int(long_side), rnd(h * scale)) if w >= h else (rnd(w * scale), int(long_side))
    else:
        new = (rnd(w * scale), rnd(h * scale))
    return new, scale


def estimate_activation_memory(
    net: NetSpec,
    up_to_layer: str,
    input_dims: tuple[int, int],
    bytes_per_element: int = 4,
    training_multiplier: float = 2,
) -> float:
    """Bytes held by activations of every layer up to ``up_to_layer``.

    Activations only (no weights or workspace); the multiplier models the
    gradient buffers kept during training.
    """
    report = layer_dims(net.truncated(up_to_layer), input_dims, bytes_per_element)
    return report.total_bytes * training_multiplier


def builtin_names() -> Sequence[str]:
    return sorted(_BUILTINS)
