"""Anchor shapes: the default scale/ratio scheme, K-Means-selected shapes,
their placement on a feature grid, and how densely they cover ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from anchorlab import kernels
from anchorlab.box_geometry import Box2D, boxes_to_array

DEFAULT_BASE = 16
DEFAULT_SCALES = (8, 16, 32)
DEFAULT_RATIOS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class AnchorShape:
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"anchor shape must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class AnchorGrid:
    feature_dims: tuple[int, int]  # (cols, rows)
    stride: float
    shapes: tuple[AnchorShape, ...]

    @property
    def count(self) -> int:
        cols, rows = self.feature_dims
        return cols * rows * len(self.shapes)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return ((i + 0.5) * self.stride, (j + 0.5) * self.stride)

    def centers(self) -> np.ndarray:
        """Cell centers as a ``(rows * cols, 2)`` array, row-major."""
        cols, rows = self.feature_dims
        xs = (np.arange(cols) + 0.5) * self.stride
        ys = (np.arange(rows) + 0.5) * self.stride
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def boxes(self) -> np.ndarray:
        """All anchors as ``(count, 4)`` boxes: cells row-major, shapes innermost."""
        c = self.centers()
        wh = np.array([(s.width, s.height) for s in self.shapes], dtype=np.float64)
        cx = c[:, None, 0]
        cy = c[:, None, 1]
        half_w = wh[None, :, 0] / 2.0
        half_h = wh[None, :, 1] / 2.0
        out = np.stack([cx - half_w, cy - half_h, cx + half_w, cy + half_h], axis=-1)
        return out.reshape(-1, 4)


@dataclass
class KMeansResult:
    shapes: list[AnchorShape]
    objective: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)
    labels: np.ndarray | None = None

    def euclidean_objective(self, observations) -> float:
        """Sum of plain (unsquared) distances to the nearest shape."""
        pts = np.asarray(observations, dtype=np.float64)
        _, d2 = kernels.nearest_centroids(pts, _shapes_array(self.shapes))
        return float(np.sqrt(d2).sum())


def _shapes_array(shapes: Sequence[AnchorShape]) -> np.ndarray:
    return np.array([(s.width, s.height) for s in shapes], dtype=np.float64)


def default_anchor_shapes(base: float = DEFAULT_BASE, scales=DEFAULT_SCALES, ratios=DEFAULT_RATIOS) -> list[AnchorShape]:
    """Area-preserving reshapes of a ``base`` square.

    Ratio is height / width, so ratio 2 gives a tall box. Ordered by scale,
    then ratio.
    """
    if not base > 0:
        raise ValueError(f"base must be positive, got {base}")
    if not scales or not ratios or any(not s > 0 for s in scales) or any(not r > 0 for r in ratios):
        raise ValueError("scales and ratios must be non-empty and positive")
    out = []
    for s in scales:
        side = base * s
        for r in ratios:
            out.append(AnchorShape(side * math.sqrt(1.0 / r), side * math.sqrt(r)))
    return out


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, 2), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    _, d2 = kernels.nearest_centroids(points, centers[:1])
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[c] = points[idx]
        _, d2 = kernels.nearest_centroids(points, centers[: c + 1])
    return centers


def _lloyd(points, centers, max_iterations, tolerance):
    k = len(centers)
    history = []
    converged = False
    iterations = 0
    labels = None
    for iterations in range(1, max_iterations + 1):
        labels, d2 = kernels.nearest_centroids(points, centers)
        objective = float(d2.sum())
        if history and objective > history[-1] * (1 + 1e-12) + 1e-12:
            raise RuntimeError(f"k-means objective increased: {history[-1]!r} -> {objective!r}")
        history.append(objective)

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, 2), dtype=np.float64)
        np.add.at(sums, labels, points)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            # Refill each empty cluster with the worst-fit observation.
            residual = d2.copy()
            for c in np.flatnonzero(~filled):
                far = int(np.argmax(residual))
                new[c] = points[far]
                residual[far] = -1.0
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tolerance:
            converged = True
            break
    return centers, labels, history, iterations, converged


def _hartigan(points, centers, history):
    """Single-point moves that lower the objective, applied after Lloyd stalls.

    Moving ``x`` from cluster ``a`` to ``b`` changes the objective by
    ``n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2``; take the best move while
    it is negative. Escapes Lloyd fixed points that are not local optima
    under reassignment.
    """
    k = len(centers)
    labels, _ = kernels.nearest_centroids(points, centers)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    for c in np.flatnonzero(counts):
        centers[c] = points[labels == c].mean(axis=0)
    moved = True
    while moved:
        moved = False
        for i in range(len(points)):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d = ((centers - points[i]) ** 2).sum(axis=1)
            leave = counts[a] / (counts[a] - 1) * d[a]
            join = counts / (counts + 1) * d
            join[a] = np.inf
            b = int(np.argmin(join))
            if join[b] < leave * (1 - 1e-12):
                centers[a] = (centers[a] * counts[a] - points[i]) / (counts[a] - 1)
                centers[b] = (centers[b] * counts[b] + points[i]) / (counts[b] + 1)
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = True
    # recompute exactly to drop drift from the running updates
    for c in np.flatnonzero(counts):
        centers[c] = points[labels == c].mean(axis=0)
    objective = float(((points - centers[labels]) ** 2).sum())
    if objective > history[-1] * (1 + 1e-12) + 1e-12:
        raise RuntimeError(f"k-means objective increased: {history[-1]!r} -> {objective!r}")
    if objective < history[-1]:
        history.append(objective)
    return centers


def kmeans_anchor_shapes(
    observations,
    k: int,
    seed: int = 0,
    max_iterations: int = 300,
    tolerance: float = 1e-6,
    n_init: int = 1,
    refine: bool = True,
) -> KMeansResult:
    """Lloyd's algorithm on raw ``(width, height)`` pairs, k-means++ seeded.

    With ``n_init > 1`` the run with the lowest objective wins (first one on
    ties). ``refine`` follows each run with Hartigan single-point moves.
    Deterministic for a given ``seed``.
    """
    points = np.asarray(observations, dtype=np.float64)
    if points.size == 0:
        raise ValueError("no observations")
    points = points.reshape(-1, 2)
    if not np.all(points > 0):
        raise ValueError("observations must be positive (width, height) pairs")
    if not 1 <= k <= len(points):
        raise ValueError(f"k={k} must be between 1 and the number of observations ({len(points)})")
    if n_init < 1 or max_iterations < 1:
        raise ValueError("n_init and max_iterations must be >= 1")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = _kmeans_pp(points, k, rng)
        centers, _, history, iterations, converged = _lloyd(points, centers, max_iterations, tolerance)
        if refine:
            centers = _hartigan(points, centers, history)
        labels, d2 = kernels.nearest_centroids(points, centers)
        objective = float(d2.sum())
        if best is None or objective < best.objective:
            best = KMeansResult(
                shapes=[AnchorShape(float(w), float(h)) for w, h in centers],
                objective=objective,
                iterations=iterations,
                converged=converged,
                history=history,
                labels=labels,
            )
    return best


def place_anchors(image_dims: tuple[int, int], stride: int, shapes: Sequence[AnchorShape]) -> AnchorGrid:
    width, height = image_dims
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride > width or stride > height:
        raise ValueError(f"stride {stride} exceeds image {width}x{height}")
    return AnchorGrid((int(width // stride), int(height // stride)), stride, tuple(shapes))


def worst_case_center_distance(stride: float) -> float:
    """Largest possible distance from a point to the nearest cell center."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return stride * math.sqrt(2.0) / 2.0


@dataclass
class CoverageStats:
    best_iou: np.ndarray
    center_distance: np.ndarray  # original-image pixels
    histogram: np.ndarray
    bin_edges: np.ndarray

    @property
    def count(self) -> int:
        return len(self.best_iou)

    @property
    def mean_best_iou(self) -> float:
        return float(self.best_iou.mean()) if self.count else float("nan")

    @property
    def mean_distance(self) -> float:
        return float(self.center_distance.mean()) if self.count else float("nan")

    @property
    def max_distance(self) -> float:
        return float(self.center_distance.max()) if self.count else float("nan")


def coverage_report(gt_boxes: Sequence[Box2D], grid: AnchorGrid, upsample: float = 1.0, bins: int = 10) -> CoverageStats:
    """How well a grid of anchors covers a set of ground-truth boxes.

    ``gt_boxes`` are in the grid's (network input) coordinates; distances are
    divided by ``upsample`` to report them in original-image pixels.
    """
    if grid.count == 0:
        raise ValueError("anchor grid is empty")
    if not upsample > 0:
        raise ValueError(f"upsample must be positive, got {upsample}")
    edges = np.linspace(0.0, worst_case_center_distance(grid.stride) / upsample, bins + 1)
    if not gt_boxes:
        empty = np.zeros(0)
        return CoverageStats(empty, empty, np.zeros(bins, dtype=np.int64), edges)

    gt = boxes_to_array(list(gt_boxes))
    best_iou = kernels.iou_matrix(gt, grid.boxes()).max(axis=1)

    cols, rows = grid.feature_dims
    s = grid.stride
    cx = (gt[:, 0] + gt[:, 2]) / 2.0
    cy = (gt[:, 1] + gt[:, 3]) / 2.0
    i = np.clip(np.floor(cx / s), 0, cols - 1)
    j = np.clip(np.floor(cy / s), 0, rows - 1)
    dist = np.hypot(cx - (i + 0.5) * s, cy - (j + 0.5) * s) / upsample

    hist, _ = np.histogram(np.minimum(dist, edges[-1]), bins=edges)
    return CoverageStats(best_iou, dist, hist, edges)
