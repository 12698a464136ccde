"""KITTI object label / result files.

One object per line, whitespace separated::

    type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]

Ground-truth files have 15 fields, result files 16 (trailing score).
"""
from __future__ import annotations

import enum
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from anchorlab.box_geometry import Box2D

LABEL_FIELDS = 15
RESULT_FIELDS = 16
DONTCARE = "DontCare"


class KittiParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class DifficultyBin(enum.IntEnum):
    """Evaluation regimes ordered from easiest to hardest."""

    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()


# (min bbox height px, max occlusion level, max truncation) per bin, from the KITTI devkit
DIFFICULTY_THRESHOLDS = {
    DifficultyBin.EASY: (40.0, 0, 0.15),
    DifficultyBin.MODERATE: (25.0, 1, 0.30),
    DifficultyBin.HARD: (25.0, 2, 0.50),
}


@dataclass(frozen=True)
class GroundTruthObject:
    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: Box2D
    dims3d: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    location3d: tuple[float, float, float] = (-1000.0, -1000.0, -1000.0)
    rotation_y: float = -10.0

    def __post_init__(self):
        # DontCare rows carry -1 placeholders and occasionally degenerate boxes.
        if self.class_name == DONTCARE:
            return
        if not self.bbox.left < self.bbox.right or not self.bbox.top < self.bbox.bottom:
            raise ValueError(f"bbox must have positive extent, got {self.bbox.as_tuple()}")
        if not 0.0 <= self.truncation <= 1.0:
            raise ValueError(f"truncation {self.truncation} outside [0, 1]")
        if self.occlusion not in (0, 1, 2, 3):
            raise ValueError(f"occlusion {self.occlusion} not in {{0, 1, 2, 3}}")

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == DONTCARE

    @property
    def height(self) -> float:
        return self.bbox.height


@dataclass(frozen=True)
class Detection(GroundTruthObject):
    score: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


def _parse_float(token: str, name: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise KittiParseError(f"field {name!r}: {token!r} is not a number", lineno) from None
    if not math.isfinite(value):
        raise KittiParseError(f"field {name!r}: {token!r} is not finite", lineno)
    return value


def _parse_int(token: str, name: str, lineno: int) -> int:
    value = _parse_float(token, name, lineno)
    if value != int(value):
        raise KittiParseError(f"field {name!r}: {token!r} is not an integer", lineno)
    return int(value)


def _parse_line(fields: list[str], lineno: int, with_score: bool):
    f = lambda i, name: _parse_float(fields[i], name, lineno)  # noqa: E731
    try:
        kwargs = dict(
            class_name=fields[0],
            truncation=f(1, "truncated"),
            occlusion=_parse_int(fields[2], "occluded", lineno),
            alpha=f(3, "alpha"),
            bbox=Box2D(f(4, "left"), f(5, "top"), f(6, "right"), f(7, "bottom")),
            dims3d=(f(8, "height"), f(9, "width"), f(10, "length")),
            location3d=(f(11, "x"), f(12, "y"), f(13, "z")),
            rotation_y=f(14, "rotation_y"),
        )
        if with_score:
            return Detection(**kwargs, score=f(15, "score"))
        return GroundTruthObject(**kwargs)
    except KittiParseError:
        raise
    except ValueError as exc:
        raise KittiParseError(str(exc), lineno) from None


def _parse(stream: TextIO | str | Iterable[str], n_fields: int):
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out = []
    for lineno, raw in enumerate(stream, start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != n_fields:
            raise KittiParseError(f"expected {n_fields} fields, found {len(fields)}", lineno)
        out.append(_parse_line(fields, lineno, with_score=n_fields == RESULT_FIELDS))
    return out


def parse_label_file(stream) -> list[GroundTruthObject]:
    """Parse ground-truth rows from a text stream, a string, or an iterable of lines."""
    return _parse(stream, LABEL_FIELDS)


def parse_result_file(stream) -> list[Detection]:
    """Parse detection rows (label fields plus a trailing score)."""
    return _parse(stream, RESULT_FIELDS)


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def format_object(obj: GroundTruthObject) -> str:
    b = obj.bbox
    parts = [obj.class_name, _fmt(obj.truncation), str(obj.occlusion), _fmt(obj.alpha)]
    parts += [_fmt(v) for v in (b.left, b.top, b.right, b.bottom)]
    parts += [_fmt(v) for v in obj.dims3d]
    parts += [_fmt(v) for v in obj.location3d]
    parts.append(_fmt(obj.rotation_y))
    if isinstance(obj, Detection):
        # Scores keep more digits than geometry so rankings survive a round trip.
        s = f"{obj.score:.6f}"
        parts.append("0.000000" if s == "-0.000000" else s)
    return " ".join(parts)


def serialize(objects: Iterable[GroundTruthObject]) -> str:
    return "".join(format_object(o) + "\n" for o in objects)


def classify_difficulty(obj: GroundTruthObject) -> DifficultyBin:
    """Easiest bin whose height/occlusion/truncation limits the object meets."""
    height = obj.bbox.bottom - obj.bbox.top
    for level, (min_height, max_occ, max_trunc) in DIFFICULTY_THRESHOLDS.items():
        if height >= min_height and 0 <= obj.occlusion <= max_occ and obj.truncation <= max_trunc:
            return level
    return DifficultyBin.IGNORED


def list_frames(directory: str | os.PathLike) -> dict[str, Path]:
    """Map frame id to file path for every ``*.txt`` in ``directory``."""
    directory = Path(directory)
    return {p.stem: p for p in sorted(directory.glob("*.txt"))}


def read_file(path: str | os.PathLike, results: bool = False):
    parser = parse_result_file if results else parse_label_file
    with open(path, encoding="utf-8") as fh:
        try:
            return parser(fh)
        except KittiParseError as exc:
            raise KittiParseError(exc.message, exc.line, str(path)) from None


def load_dir(directory, results: bool = False, threads: int = 1) -> dict[str, list]:
    """Parse every frame file in a directory, keyed by frame id (sorted)."""
    frames = list_frames(directory)
    ids = list(frames)
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parsed = list(pool.map(lambda fid: read_file(frames[fid], results), ids))
    else:
        parsed = [read_file(frames[fid], results) for fid in ids]
    return dict(zip(ids, parsed))
