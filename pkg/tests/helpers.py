"""Shared builders for test fixtures."""
from pathlib import Path

from anchorlab.box_geometry import Box2D
from anchorlab.kitti_io import Detection, GroundTruthObject, serialize


def gt(box, occlusion=0, truncation=0.0, cls="Car"):
    return GroundTruthObject(cls, truncation, occlusion, 0.0, Box2D(*box), (1.5, 1.6, 3.9), (1.0, 1.7, 20.0), 0.0)


def det(box, score, cls="Car"):
    return Detection(cls, 0.0, 0, 0.0, Box2D(*box), (1.5, 1.6, 3.9), (1.0, 1.7, 20.0), 0.0, score=score)


def dontcare(box):
    return GroundTruthObject("DontCare", -1.0, -1, -10.0, Box2D(*box), (-1.0, -1.0, -1.0), (-1000.0, -1000.0, -1000.0), -10.0)


# Five frames with a planted TP / FP / ignored pattern. Expected AP (R11) was
# enumerated by hand from the sweep tables:
#   Easy      positives A D E        -> 7/11
#   Moderate  positives A B D E G    -> 6.2/11
#   Hard      positives A B C D E G  -> 6/11
A = (100.0, 100.0, 200.0, 150.0)   # easy (h 50)
B = (300.0, 200.0, 360.0, 230.0)   # moderate (h 30, occ 1)
C = (500.0, 200.0, 560.0, 230.0)   # hard (h 30, occ 2, trunc .4)
D = (700.0, 100.0, 800.0, 160.0)   # easy
E = (100.0, 250.0, 180.0, 300.0)   # easy, never detected
F = (300.0, 100.0, 400.0, 200.0)   # DontCare region
G = (600.0, 150.0, 700.0, 180.0)   # moderate (occ 1)
H = (900.0, 200.0, 960.0, 220.0)   # too small (h 20): ignored in every bin

FIXTURE_GT = {
    "000000": [gt(A), gt(B, occlusion=1, truncation=0.2)],
    "000001": [gt(C, occlusion=2, truncation=0.4), gt(D)],
    "000002": [gt(E), dontcare(F)],
    "000003": [gt(G, occlusion=1, truncation=0.1), gt(H)],
    "000004": [],
}

FIXTURE_DET = {
    "000000": [
        det(A, 0.95),
        det(B, 0.60),
        det((1000.0, 300.0, 1100.0, 350.0), 0.80),
        det(A, 0.99, cls="Pedestrian"),
    ],
    "000001": [det(D, 0.90), det(C, 0.50), det(D, 0.40)],
    "000002": [det(F, 0.85)],
    "000003": [det(H, 0.70), det((625.0, 150.0, 725.0, 180.0), 0.75)],  # IoU with G = 0.6
    "000004": [det((50.0, 50.0, 90.0, 90.0), 0.30)],
}

FIXTURE_AP_R11 = {"Easy": 7 / 11, "Moderate": 6.2 / 11, "Hard": 6 / 11}


def write_frames(directory, frames):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for fid, objs in frames.items():
        (directory / f"{fid}.txt").write_text(serialize(objs))
    return directory


def brute_force_nms(dets, threshold):
    """O(n^2) reference: walk in score order, keep a box unless a kept box overlaps it."""
    from anchorlab.box_geometry import iou

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    for i in order:
        if all(iou(dets[i].bbox, dets[k].bbox) <= threshold for k in kept):
            kept.append(i)
    return [dets[i] for i in kept]


def brute_force_two_means(points):
    """Lowest within-cluster SSE over every split of ``points`` into two non-empty groups."""
    import itertools

    import numpy as np

    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = float("inf")
    for mask in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + mask)
        if labels.sum() == 0:
            continue
        sse = 0.0
        for c in (0, 1):
            grp = pts[labels == c]
            sse += float(((grp - grp.mean(axis=0)) ** 2).sum())
        best = min(best, sse)
    return best
