"""KITTI-style 2D detection evaluation.

Per image, detections of the evaluated class are matched greedily in
descending score order. Evaluating difficulty ``D`` counts ground truth of
bin ``D`` or easier as positives. Same-class objects of a harder bin, and
DontCare regions, are ignored: a detection landing on them is neither a true
nor a false positive.
"""
from __future__ import annotations

import enum
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from anchorlab import kitti_io
from anchorlab.box_geometry import iou_matrix
from anchorlab.kitti_io import Detection, DifficultyBin, GroundTruthObject, classify_difficulty

log = logging.getLogger(__name__)

EVAL_BINS = (DifficultyBin.EASY, DifficultyBin.MODERATE, DifficultyBin.HARD)


class Interpolation(str, enum.Enum):
    R11 = "r11"
    R40 = "r40"

    @property
    def samples(self) -> int:
        return 11 if self is Interpolation.R11 else 40


class Match(enum.IntEnum):
    FP = 0
    TP = 1
    IGNORED = 2


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.7
    class_name: str = "Car"
    difficulty: DifficultyBin = DifficultyBin.MODERATE
    interpolation: Interpolation = Interpolation.R11

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.difficulty not in EVAL_BINS:
            raise ValueError(f"cannot evaluate difficulty {self.difficulty!r}")


@dataclass(frozen=True)
class ImageMatch:
    scores: np.ndarray  # one per evaluated detection, descending
    flags: np.ndarray  # Match values aligned with scores
    gt_matched: np.ndarray  # per positive ground truth
    positives: int

    @property
    def tp(self) -> int:
        return int((self.flags == Match.TP).sum())

    @property
    def fp(self) -> int:
        return int((self.flags == Match.FP).sum())

    @property
    def ignored(self) -> int:
        return int((self.flags == Match.IGNORED).sum())


def match_image(dets: Sequence[Detection], gts: Sequence[GroundTruthObject], config: MatchConfig) -> ImageMatch:
    """Greedy score-ordered matching of one image's detections to its ground truth.

    Each detection takes the unmatched positive with the highest IoU at or
    above the threshold (TP). Failing that it may absorb an unmatched harder
    same-class object, or fall inside any DontCare region (ignored). Otherwise
    it is a false positive.
    """
    cls = config.class_name
    positives, harder, dontcare = [], [], []
    for g in gts:
        if g.is_dontcare:
            dontcare.append(g.bbox)
        elif g.class_name == cls:
            (positives if classify_difficulty(g) <= config.difficulty else harder).append(g.bbox)

    mine = [d for d in dets if d.class_name == cls]
    order = np.argsort(-np.array([d.score for d in mine], dtype=np.float64), kind="stable")
    mine = [mine[i] for i in order]
    scores = np.array([d.score for d in mine], dtype=np.float64)
    flags = np.zeros(len(mine), dtype=np.int8)
    gt_matched = np.zeros(len(positives), dtype=bool)
    if not mine:
        return ImageMatch(scores, flags, gt_matched, len(positives))

    det_boxes = [d.bbox for d in mine]
    thr = config.iou_threshold
    iou_pos = iou_matrix(det_boxes, positives)
    iou_hard = iou_matrix(det_boxes, harder)
    iou_dc = iou_matrix(det_boxes, dontcare)
    hard_taken = np.zeros(len(harder), dtype=bool)

    for i in range(len(mine)):
        if len(positives):
            cand = np.where(gt_matched, -1.0, iou_pos[i])
            j = int(np.argmax(cand))
            if cand[j] >= thr:
                gt_matched[j] = True
                flags[i] = Match.TP
                continue
        if len(harder):
            cand = np.where(hard_taken, -1.0, iou_hard[i])
            j = int(np.argmax(cand))
            if cand[j] >= thr:
                hard_taken[j] = True
                flags[i] = Match.IGNORED
                continue
        if len(dontcare) and iou_dc[i].max() >= thr:
            flags[i] = Match.IGNORED
            continue
        flags[i] = Match.FP
    return ImageMatch(scores, flags, gt_matched, len(positives))


@dataclass(frozen=True)
class PRCurve:
    """Curve points from sweeping the score threshold over distinct scores.

    ``tp``/``fp`` are cumulative counts at each threshold; recall and precision
    are derived from them so that recall sampling can be done exactly.
    """

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    positives: int

    @property
    def recall(self) -> np.ndarray:
        if self.positives == 0:
            return np.zeros(len(self.tp))
        return self.tp / self.positives

    @property
    def precision(self) -> np.ndarray:
        denom = self.tp + self.fp
        return np.divide(self.tp, denom, out=np.zeros(len(self.tp)), where=denom > 0)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))

    def __len__(self):
        return len(self.thresholds)


def pr_curve(scores, is_tp, positives: int) -> PRCurve:
    """Build the precision/recall sweep from scored TP/FP decisions.

    Ignored detections must be dropped by the caller. Detections sharing a
    score enter the curve together.
    """
    if positives < 0:
        raise ValueError("positives must be >= 0")
    scores = np.asarray(scores, dtype=np.float64)
    is_tp = np.asarray(is_tp, dtype=bool)
    if len(scores) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return PRCurve(np.zeros(0), empty, empty, positives)
    order = np.argsort(-scores, kind="stable")
    scores, is_tp = scores[order], is_tp[order]
    ctp = np.cumsum(is_tp, dtype=np.int64)
    cfp = np.cumsum(~is_tp, dtype=np.int64)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    return PRCurve(scores[ends], ctp[ends], cfp[ends], positives)


def average_precision(curve: PRCurve, interpolation: Interpolation | str = Interpolation.R11) -> float:
    """Mean interpolated precision at fixed recall samples.

    R11 samples recall 0, 0.1, ..., 1; R40 samples 1/40, ..., 1. Interpolated
    precision at ``r`` is the best precision at any recall >= ``r``.
    """
    interpolation = Interpolation(interpolation)
    if len(curve) == 0 or curve.positives == 0:
        return 0.0
    n = interpolation.samples
    precision = curve.precision
    # running max from the high-recall end
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interpolation is Interpolation.R11:
        steps = np.arange(0, 11)  # recall i/10
        denom = 10
    else:
        steps = np.arange(1, 41)  # recall i/40
        denom = 40
    total = 0.0
    for i in steps:
        # recall >= i/denom  <=>  tp * denom >= i * positives, in exact integers
        reached = np.flatnonzero(curve.tp * denom >= i * curve.positives)
        if len(reached):
            total += envelope[reached[0]]
    return float(total / n)


@dataclass
class BinResult:
    difficulty: DifficultyBin
    ap: float
    curve: PRCurve
    positives: int
    tp: int
    fp: int
    ignored: int


@dataclass
class APReport:
    class_name: str
    iou_threshold: float
    interpolation: Interpolation
    bins: dict[DifficultyBin, BinResult] = field(default_factory=dict)
    frames: int = 0

    def ap(self, difficulty: DifficultyBin) -> float:
        return self.bins[difficulty].ap

    def as_dict(self) -> dict:
        return {
            "class": self.class_name,
            "iou_threshold": self.iou_threshold,
            "interpolation": self.interpolation.value,
            "frames": self.frames,
            "bins": {
                b.label: {
                    "ap": r.ap,
                    "gt": r.positives,
                    "tp": r.tp,
                    "fp": r.fp,
                    "ignored": r.ignored,
                }
                for b, r in self.bins.items()
            },
        }


def evaluate_frames(
    detections: dict[str, Sequence[Detection]],
    ground_truth: dict[str, Sequence[GroundTruthObject]],
    class_name: str = "Car",
    iou_threshold: float = 0.7,
    interpolation: Interpolation | str = Interpolation.R11,
    threads: int = 1,
) -> APReport:
    """Evaluate in-memory frames. Frames without detections count as empty."""
    interpolation = Interpolation(interpolation)
    frame_ids = sorted(ground_truth)
    report = APReport(class_name, iou_threshold, interpolation, frames=len(frame_ids))
    for difficulty in EVAL_BINS:
        config = MatchConfig(iou_threshold, class_name, difficulty, interpolation)

        def run(fid, config=config):
            return match_image(detections.get(fid, ()), ground_truth[fid], config)

        if threads > 1 and len(frame_ids) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                matches = list(pool.map(run, frame_ids))
        else:
            matches = [run(fid) for fid in frame_ids]

        if matches:
            scores = np.concatenate([m.scores for m in matches])
            flags = np.concatenate([m.flags for m in matches])
        else:
            scores, flags = np.zeros(0), np.zeros(0, dtype=np.int8)
        positives = sum(m.positives for m in matches)
        keep = flags != Match.IGNORED
        curve = pr_curve(scores[keep], flags[keep] == Match.TP, positives)
        report.bins[difficulty] = BinResult(
            difficulty,
            average_precision(curve, interpolation),
            curve,
            positives,
            int((flags == Match.TP).sum()),
            int((flags == Match.FP).sum()),
            int((flags == Match.IGNORED).sum()),
        )
    return report


def evaluate_dataset(
    det_dir: str | os.PathLike,
    gt_dir: str | os.PathLike,
    class_name: str = "Car",
    iou_threshold: float = 0.7,
    interpolation: Interpolation | str = Interpolation.R11,
    threads: int = 1,
) -> APReport:
    """Evaluate a directory of result files against a directory of labels.

    Frames are the label files in ``gt_dir``. A frame with no result file is
    evaluated as having no detections (logged as a warning); result files
    without a matching label file are skipped.
    """
    gts = kitti_io.load_dir(gt_dir, results=False, threads=threads)
    dets = kitti_io.load_dir(det_dir, results=True, threads=threads)
    missing = [fid for fid in gts if fid not in dets]
    if missing:
        log.warning("%d frame(s) have no detection file, treated as empty (first: %s)", len(missing), missing[0])
    extra = [fid for fid in dets if fid not in gts]
    if extra:
        log.warning("%d detection file(s) have no ground truth and are skipped (first: %s)", len(extra), extra[0])
    return evaluate_frames(dets, gts, class_name, iou_threshold, interpolation, threads)
