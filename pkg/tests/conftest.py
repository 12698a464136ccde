import pytest

from anchorlab import _pykernels, kernels

from helpers import FIXTURE_DET, FIXTURE_GT, write_frames

BACKENDS = [_pykernels]
try:
    from anchorlab import _ckernels

    BACKENDS.append(_ckernels)
except ImportError:
    pass


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request, monkeypatch):
    """Route the public kernel entry points through each available backend."""
    for name in ("iou_matrix", "nms_keep", "nearest_centroids", "roi_max_pool"):
        monkeypatch.setattr(kernels, name, getattr(request.param, name))
    return request.param


@pytest.fixture
def eval_fixture(tmp_path):
    gt_dir = write_frames(tmp_path / "gt", FIXTURE_GT)
    det_dir = write_frames(tmp_path / "det", FIXTURE_DET)
    return gt_dir, det_dir


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
