# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil

cnp.import_array()


cdef inline double _iou(double ax1, double ay1, double ax2, double ay2,
                        double bx1, double by1, double bx2, double by2) nogil:
    cdef double area_a = (ax2 - ax1) * (ay2 - ay1)
    cdef double area_b = (bx2 - bx1) * (by2 - by1)
    cdef double iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
    cdef double ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
    cdef double inter
    if iw <= 0 or ih <= 0 or area_a <= 0 or area_b <= 0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def iou_matrix(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(n):
            for j in range(m):
                ov[i, j] = _iou(av[i, 0], av[i, 1], av[i, 2], av[i, 3],
                                bv[j, 0], bv[j, 1], bv[j, 2], bv[j, 3])
    return out


def nms_keep(boxes, order, double threshold):
    cdef double[:, ::1] bv = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef long long[::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = ov.shape[0], i, j, a, b, count = 0
    keep = np.empty(n, dtype=np.int64)
    cdef long long[::1] kv = keep
    suppressed = np.zeros(bv.shape[0], dtype=np.uint8)
    cdef unsigned char[::1] sv = suppressed
    with nogil:
        for i in range(n):
            a = ov[i]
            if sv[a]:
                continue
            kv[count] = a
            count += 1
            for j in range(i + 1, n):
                b = ov[j]
                if not sv[b] and _iou(bv[a, 0], bv[a, 1], bv[a, 2], bv[a, 3],
                                      bv[b, 0], bv[b, 1], bv[b, 2], bv[b, 3]) > threshold:
                    sv[b] = 1
    return keep[:count].copy()


def nearest_centroids(points, centroids):
    cdef double[:, ::1] pv = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], k = cv.shape[0], i, j, best
    cdef double dx, dy, d, best_d
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    cdef long long[::1] lv = labels
    cdef double[::1] dv = dist
    with nogil:
        for i in range(n):
            best = 0
            dx = pv[i, 0] - cv[0, 0]
            dy = pv[i, 1] - cv[0, 1]
            best_d = dx * dx + dy * dy
            for j in range(1, k):
                dx = pv[i, 0] - cv[j, 0]
                dy = pv[i, 1] - cv[j, 1]
                d = dx * dx + dy * dy
                if d < best_d:
                    best_d = d
                    best = j
            lv[i] = best
            dv[i] = best_d
    return labels, dist


cdef inline Py_ssize_t _clamp(double v, Py_ssize_t hi) nogil:
    if v < 0:
        return 0
    if v > hi:
        return hi
    return <Py_ssize_t>v


def roi_max_pool(features, double x1, double y1, double x2, double y2,
                 Py_ssize_t out_w, Py_ssize_t out_h):
    cdef double[:, :, ::1] fv = np.ascontiguousarray(features, dtype=np.float64)
    cdef Py_ssize_t height = fv.shape[0], width = fv.shape[1], channels = fv.shape[2]
    cdef double bin_w = (x2 - x1) / out_w
    cdef double bin_h = (y2 - y1) / out_h
    out = np.zeros((out_h, out_w, channels), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t py, px, ys, ye, xs, xe, y, x, c
    cdef double v
    with nogil:
        for py in range(out_h):
            ys = _clamp(floor(y1 + py * bin_h), height)
            ye = _clamp(ceil(y1 + (py + 1) * bin_h), height)
            for px in range(out_w):
                xs = _clamp(floor(x1 + px * bin_w), width)
                xe = _clamp(ceil(x1 + (px + 1) * bin_w), width)
                if ye <= ys or xe <= xs:
                    continue
                for c in range(channels):
                    v = fv[ys, xs, c]
                    for y in range(ys, ye):
                        for x in range(xs, xe):
                            if fv[y, x, c] > v:
                                v = fv[y, x, c]
                    ov[py, px, c] = v
    return out
