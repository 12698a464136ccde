"""Road-object detector toolkit: KITTI labels, anchor shapes, CNN stride
arithmetic and KITTI-style average precision."""

__version__ = "0.1.0"

from anchorlab.box_geometry import Box2D, BoxDelta, apply_delta, compute_delta, context_window, iou, nms  # noqa: E402
from anchorlab.kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "Box2D", "BoxDelta", "apply_delta", "compute_delta", "context_window", "iou", "nms"]
