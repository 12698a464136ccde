"""Pure numpy implementations of the hot loops.

Used when the compiled ``_ckernels`` extension is unavailable. Every function
here must agree with its compiled twin bit for bit.
"""
import math

import numpy as np


def iou_matrix(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = area_a[:, None] + area_b[None, :] - inter
    valid = (area_a[:, None] > 0) & (area_b[None, :] > 0) & (inter > 0)
    out = np.zeros(inter.shape, dtype=np.float64)
    np.divide(inter, union, out=out, where=valid)
    return out


def nms_keep(boxes, order, threshold):
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = np.asarray(order, dtype=np.int64)
    iou = iou_matrix(boxes, boxes)
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep = []
    for idx in order:
        if suppressed[idx]:
            continue
        keep.append(int(idx))
        suppressed |= iou[idx] > threshold
    return np.asarray(keep, dtype=np.int64)


def nearest_centroids(points, centroids):
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    dx = points[:, None, 0] - centroids[None, :, 0]
    dy = points[:, None, 1] - centroids[None, :, 1]
    d2 = dx * dx + dy * dy
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(len(points)), labels]


def roi_max_pool(features, x1, y1, x2, y2, out_w, out_h):
    features = np.asarray(features, dtype=np.float64)
    height, width, channels = features.shape
    bin_w = (x2 - x1) / out_w
    bin_h = (y2 - y1) / out_h
    out = np.zeros((out_h, out_w, channels), dtype=np.float64)
    for py in range(out_h):
        ys = min(max(math.floor(y1 + py * bin_h), 0), height)
        ye = min(max(math.ceil(y1 + (py + 1) * bin_h), 0), height)
        for px in range(out_w):
            xs = min(max(math.floor(x1 + px * bin_w), 0), width)
            xe = min(max(math.ceil(x1 + (px + 1) * bin_w), 0), width)
            if ye > ys and xe > xs:
                out[py, px] = features[ys:ye, xs:xe].max(axis=(0, 1))
    return out
