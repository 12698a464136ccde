"""Synthetic detections made by perturbing ground truth.

Randomness comes from numpy's PCG64 bit generator, one stream per frame,
seeded with ``SeedSequence([seed, crc32(frame_id)])``. Only raw uniform
doubles are drawn from it; normals use Box-Muller and Poisson counts use
inversion, both written out here, so output does not depend on numpy's
distribution code. Per object the draws are, in order: keep/drop, four
normals (center x, center y, log width, log height), score.
"""
from __future__ import annotations

import enum
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from anchorlab import kitti_io
from anchorlab.box_geometry import Box2D, BoxDelta, apply_delta, clip_box, iou
from anchorlab.kitti_io import Detection, GroundTruthObject

KITTI_IMAGE = (1242, 375)


class ScoreModel(str, enum.Enum):
    IOU_BASED = "iou_based"
    RANDOM = "random"


@dataclass(frozen=True)
class PerturbConfig:
    center_noise_sigma: float = 0.0  # pixels
    scale_noise_sigma: float = 0.0  # log scale
    drop_rate: float = 0.0
    false_positive_rate: float = 0.0  # expected spurious boxes per image
    score_model: ScoreModel = ScoreModel.IOU_BASED
    seed: int = 0

    def __post_init__(self):
        if self.center_noise_sigma < 0 or self.scale_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0 <= self.drop_rate <= 1:
            raise ValueError("drop_rate must be in [0, 1]")
        if self.false_positive_rate < 0:
            raise ValueError("false_positive_rate must be >= 0")
        object.__setattr__(self, "score_model", ScoreModel(self.score_model))


class _Stream:
    def __init__(self, seed: int, frame_id: str):
        ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(frame_id.encode("utf-8"))])
        self._bits = np.random.PCG64(ss)

    def uniform(self) -> float:
        return float(self._bits.random_raw() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def poisson(self, lam: float) -> int:
        if lam <= 0:
            return 0
        u = self.uniform()
        k, p = 0, math.exp(-lam)
        cdf = p
        while u > cdf and k < 10_000:
            k += 1
            p *= lam / k
            cdf += p
        return k


def _as_detection(obj: GroundTruthObject, bbox: Box2D, score: float) -> Detection:
    return Detection(
        class_name=obj.class_name,
        truncation=obj.truncation,
        occlusion=obj.occlusion,
        alpha=obj.alpha,
        bbox=bbox,
        dims3d=obj.dims3d,
        location3d=obj.location3d,
        rotation_y=obj.rotation_y,
        score=score,
    )


def perturb_frame(
    frame_id: str,
    gts: list[GroundTruthObject],
    config: PerturbConfig,
    shape_pool: list[GroundTruthObject],
    image: tuple[float, float] = KITTI_IMAGE,
) -> list[Detection]:
    """Detections for one frame; ``shape_pool`` supplies false-positive shapes."""
    rng = _Stream(config.seed, frame_id)
    out = []
    objects = [g for g in gts if not g.is_dontcare]
    for g in objects:
        u_drop = rng.uniform()
        nx, ny, nw, nh = rng.normal(), rng.normal(), rng.normal(), rng.normal()
        u_score = rng.uniform()
        if u_drop < config.drop_rate:
            continue
        w, h = g.bbox.width, g.bbox.height
        delta = BoxDelta(
            tx=nx * config.center_noise_sigma / w,
            ty=ny * config.center_noise_sigma / h,
            tw=nw * config.scale_noise_sigma,
            th=nh * config.scale_noise_sigma,
        )
        box = clip_box(apply_delta(g.bbox, delta), image)
        box = _round_box(box)
        if box.width <= 0 or box.height <= 0:
            continue
        score = iou(box, g.bbox) if config.score_model is ScoreModel.IOU_BASED else u_score
        out.append(_as_detection(g, box, score))

    n_fp = rng.poisson(config.false_positive_rate) if shape_pool else 0
    for _ in range(n_fp):
        src = shape_pool[min(int(rng.uniform() * len(shape_pool)), len(shape_pool) - 1)]
        u_x, u_y, u_score = rng.uniform(), rng.uniform(), rng.uniform()
        w = min(src.bbox.width, image[0])
        h = min(src.bbox.height, image[1])
        left = u_x * (image[0] - w)
        top = u_y * (image[1] - h)
        box = _round_box(Box2D(left, top, left + w, top + h))
        if box.width <= 0 or box.height <= 0:
            continue
        if config.score_model is ScoreModel.IOU_BASED:
            score = max((iou(box, g.bbox) for g in objects), default=0.0)
        else:
            score = u_score
        out.append(_as_detection(src, box, score))
    return out


def _round_box(b: Box2D) -> Box2D:
    # Match what the result file will hold so scores agree with re-parsed boxes.
    return Box2D(*(float(f"{v:.2f}") for v in b.as_tuple()))


def perturb(
    gt_dir: str | os.PathLike,
    config: PerturbConfig,
    out_dir: str | os.PathLike,
    image: tuple[float, float] = KITTI_IMAGE,
    threads: int = 1,
) -> dict[str, int]:
    """Write one result file per label file in ``gt_dir`` into ``out_dir``.

    Returns the number of detections written per frame.
    """
    gts = kitti_io.load_dir(gt_dir, threads=threads)
    pool = [g for fid in sorted(gts) for g in gts[fid] if not g.is_dontcare]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(fid):
        dets = perturb_frame(fid, gts[fid], config, pool, image)
        (out_dir / f"{fid}.txt").write_text(kitti_io.serialize(dets), encoding="utf-8")
        return len(dets)

    ids = sorted(gts)
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            counts = list(ex.map(work, ids))
    else:
        counts = [work(fid) for fid in ids]
    return dict(zip(ids, counts))


def make_ground_truth(
    out_dir: str | os.PathLike,
    n_frames: int = 20,
    objects_per_frame: int = 5,
    seed: int = 0,
    image: tuple[float, float] = KITTI_IMAGE,
) -> int:
    """Write a synthetic KITTI label directory of non-overlapping cars.

    Heights, occlusion and truncation are spread so every difficulty bin is
    populated. Objects in a frame sit in disjoint horizontal slots. Returns
    the number of objects written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    slot = image[0] / objects_per_frame
    total = 0
    for f in range(n_frames):
        fid = f"{f:06d}"
        rng = _Stream(seed, "gt:" + fid)
        objs = []
        for k in range(objects_per_frame):
            h = 20.0 + rng.uniform() * 130.0
            w = min(h * (1.0 + rng.uniform() * 1.5), slot * 0.9)
            left = k * slot + rng.uniform() * (slot - w)
            top = rng.uniform() * (image[1] - h)
            occlusion = min(int(rng.uniform() * 3.3), 3)
            truncation = round(rng.uniform() * 0.5, 2)
            box = _round_box(Box2D(left, top, left + w, top + h))
            objs.append(GroundTruthObject("Car", truncation, occlusion, -1.0, box, (1.5, 1.6, 3.9), (0.0, 1.7, 20.0), 0.0))
        (out_dir / f"{fid}.txt").write_text(kitti_io.serialize(objs), encoding="utf-8")
        total += len(objs)
    return total
