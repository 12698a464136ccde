"""Backend selection for the hot loops.

The compiled extension is preferred. Set ``ANCHORLAB_PURE_PYTHON=1`` to force
the numpy fallback (useful for debugging and for the equivalence tests).
"""
import os

from anchorlab import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ANCHORLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from anchorlab import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

iou_matrix = _impl.iou_matrix
nms_keep = _impl.nms_keep
nearest_centroids = _impl.nearest_centroids
roi_max_pool = _impl.roi_max_pool

__all__ = ["BACKEND", "iou_matrix", "nms_keep", "nearest_centroids", "roi_max_pool"]
