"""Axis-aligned box arithmetic.

Boxes use continuous pixel coordinates ``(left, top, right, bottom)`` with
``area = (right - left) * (bottom - top)``; no +1 pixel convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TypeVar

import numpy as np

from anchorlab import kernels


@dataclass(frozen=True)
class Box2D:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if not (self.left <= self.right and self.top <= self.bottom):
            raise ValueError(f"invalid box {self.as_tuple()}: need left <= right and top <= bottom")

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    def scaled(self, s: float) -> "Box2D":
        return Box2D(self.left * s, self.top * s, self.right * s, self.bottom * s)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box2D":
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


@dataclass(frozen=True)
class BoxDelta:
    """Regression target relative to an anchor.

    ``tx``/``ty`` are center offsets in units of anchor width/height,
    ``tw``/``th`` are log-scale factors.
    """

    tx: float
    ty: float
    tw: float
    th: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.tx, self.ty, self.tw, self.th)):
            raise ValueError(f"non-finite delta {self}")


def iou(a: Box2D, b: Box2D) -> float:
    """Intersection over union; 0 for disjoint or degenerate boxes."""
    area_a = (a.right - a.left) * (a.bottom - a.top)
    area_b = (b.right - b.left) * (b.bottom - b.top)
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0 or area_a <= 0 or area_b <= 0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def boxes_to_array(boxes: Sequence[Box2D]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between two box collections (Box2D lists or ``(n, 4)`` arrays)."""
    if not isinstance(a, np.ndarray):
        a = boxes_to_array(list(a))
    if not isinstance(b, np.ndarray):
        b = boxes_to_array(list(b))
    return kernels.iou_matrix(a, b)


def apply_delta(anchor: Box2D, d: BoxDelta) -> Box2D:
    w_a, h_a = anchor.width, anchor.height
    if not (w_a > 0 and h_a > 0):
        raise ValueError(f"anchor must have positive size, got {anchor}")
    cx, cy = anchor.center
    cx += d.tx * w_a
    cy += d.ty * h_a
    try:
        w = w_a * math.exp(d.tw)
        h = h_a * math.exp(d.th)
    except OverflowError:
        w = h = math.inf
    if not all(math.isfinite(v) for v in (cx, cy, w, h)):
        raise ValueError(f"delta {d} produces a non-finite box from {anchor}")
    return Box2D.from_center(cx, cy, w, h)


def compute_delta(anchor: Box2D, target: Box2D) -> BoxDelta:
    w_a, h_a = anchor.width, anchor.height
    if not (w_a > 0 and h_a > 0):
        raise ValueError(f"anchor must have positive size, got {anchor}")
    if not (target.width > 0 and target.height > 0):
        raise ValueError(f"target must have positive size, got {target}")
    (ax, ay), (gx, gy) = anchor.center, target.center
    return BoxDelta(
        tx=(gx - ax) / w_a,
        ty=(gy - ay) / h_a,
        tw=math.log(target.width / w_a),
        th=math.log(target.height / h_a),
    )


def clip_box(b: Box2D, image: tuple[float, float]) -> Box2D:
    """Intersect with ``[0, width] x [0, height]``.

    Boxes lying entirely outside collapse to a zero-area box on the nearest edge.
    """
    width, height = image

    def clamp(v, hi):
        return min(max(v, 0.0), hi)

    return Box2D(clamp(b.left, width), clamp(b.top, height), clamp(b.right, width), clamp(b.bottom, height))


def context_window(b: Box2D, factor: float, image: tuple[float, float]) -> Box2D:
    """Scale each side about the box center by ``factor``, then clip to the image."""
    if not factor > 0:
        raise ValueError(f"factor must be positive, got {factor}")
    cx, cy = b.center
    return clip_box(Box2D.from_center(cx, cy, b.width * factor, b.height * factor), image)


T = TypeVar("T")


def nms(dets: Sequence[T], iou_threshold: float) -> list[T]:
    """Greedy non-maximum suppression.

    ``dets`` are objects with ``bbox`` and ``score`` attributes. Survivors come
    back in descending score order; equal scores keep input order.
    """
    if not dets:
        return []
    scores = np.array([d.score for d in dets], dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("nms requires finite scores")
    order = np.argsort(-scores, kind="stable")
    boxes = boxes_to_array([d.bbox for d in dets])
    keep = kernels.nms_keep(boxes, order, float(iou_threshold))
    return [dets[i] for i in keep]
