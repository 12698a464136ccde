import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorlab.box_geometry import Box2D
from anchorlab.kitti_io import (
    Detection,
    DifficultyBin,
    GroundTruthObject,
    KittiParseError,
    classify_difficulty,
    load_dir,
    parse_label_file,
    parse_result_file,
    serialize,
)

from helpers import gt

LINE = "Car 0.00 0 -1.58 587.0 173.3 614.1 200.1 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"


def test_parse_single_line():
    [obj] = parse_label_file(io.StringIO(LINE + "\n"))
    assert obj.class_name == "Car"
    assert obj.bbox == Box2D(587.0, 173.3, 614.1, 200.1)
    assert obj.truncation == 0.0 and obj.occlusion == 0
    assert obj.alpha == -1.58
    assert obj.dims3d == (1.65, 1.67, 3.64)
    assert obj.location3d == (-0.65, 1.71, 46.70)
    assert obj.rotation_y == -1.59


def test_empty_file():
    assert parse_label_file(io.StringIO("")) == []
    assert parse_label_file("\n\n  \n") == []


def test_wrong_field_count_reports_line():
    text = LINE + "\n" + " ".join(LINE.split()[:14]) + "\n"
    with pytest.raises(KittiParseError) as exc:
        parse_label_file(text)
    assert exc.value.line == 2


def test_non_numeric_field():
    bad = LINE.replace("587.0", "abc")
    with pytest.raises(KittiParseError, match="not a number"):
        parse_label_file(bad)


def test_integer_notation_accepted():
    [obj] = parse_label_file("Car 0 0 -1 587 173 614 200 1 1 3 0 1 46 -1")
    assert obj.bbox == Box2D(587.0, 173.0, 614.0, 200.0)


def test_result_line_score():
    [d] = parse_result_file(LINE + " 0.97")
    assert isinstance(d, Detection)
    assert d.score == 0.97
    assert d.bbox == Box2D(587.0, 173.3, 614.1, 200.1)


@pytest.mark.parametrize("score", ["inf", "-inf", "nan"])
def test_result_non_finite_score(score):
    with pytest.raises(KittiParseError):
        parse_result_file(LINE + " " + score)


def test_result_needs_16_fields():
    with pytest.raises(KittiParseError, match="expected 16"):
        parse_result_file(LINE)


def test_invalid_box_rejected():
    bad = LINE.replace("614.1", "500.0")
    with pytest.raises(KittiParseError):
        parse_label_file(bad)


def test_dontcare_kept_with_flag():
    [obj] = parse_label_file("DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10")
    assert obj.is_dontcare
    assert classify_difficulty(obj) is DifficultyBin.IGNORED


def test_class_names_case_sensitive():
    [obj] = parse_label_file(LINE.replace("Car", "car"))
    assert obj.class_name == "car"


def test_serialize_empty():
    assert serialize([]) == ""


def test_round_trip_fixed_point():
    text = LINE + "\n" + LINE.replace("Car", "Van") + "\n"
    once = serialize(parse_label_file(text))
    assert serialize(parse_label_file(once)) == once
    assert parse_label_file(once) == parse_label_file(text)
    assert once.splitlines()[0] == "Car 0.00 0 -1.58 587.00 173.30 614.10 200.10 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"


def _q(lo, hi):
    return st.floats(lo, hi, allow_nan=False).map(lambda v: round(v, 2))


@st.composite
def objects(draw, with_score=False):
    left = draw(_q(-50, 1200))
    top = draw(_q(-50, 350))
    w = draw(_q(0.01, 400))
    h = draw(_q(0.01, 300))
    right, bottom = round(left + w, 2), round(top + h, 2)
    if right <= left or bottom <= top:
        right, bottom = left + 1.0, top + 1.0
    kwargs = dict(
        class_name=draw(st.sampled_from(["Car", "Van", "Pedestrian", "Cyclist", "Truck"])),
        truncation=draw(_q(0, 1)),
        occlusion=draw(st.integers(0, 3)),
        alpha=draw(_q(-3.14, 3.14)),
        bbox=Box2D(left, top, right, bottom),
        dims3d=(draw(_q(0, 5)), draw(_q(0, 5)), draw(_q(0, 20))),
        location3d=(draw(_q(-50, 50)), draw(_q(-5, 5)), draw(_q(0, 100))),
        rotation_y=draw(_q(-3.14, 3.14)),
    )
    if with_score:
        return Detection(**kwargs, score=draw(st.floats(-100, 100).map(lambda v: round(v, 6))))
    return GroundTruthObject(**kwargs)


@settings(max_examples=60, deadline=None)
@given(st.lists(objects(), max_size=8))
def test_round_trip_labels(objs):
    assert parse_label_file(serialize(objs)) == objs


@settings(max_examples=60, deadline=None)
@given(st.lists(objects(with_score=True), max_size=8))
def test_round_trip_results(objs):
    assert parse_result_file(serialize(objs)) == objs


@pytest.mark.parametrize(
    "height, occlusion, truncation, expected",
    [
        (50, 0, 0.0, DifficultyBin.EASY),
        (30, 1, 0.2, DifficultyBin.MODERATE),
        (20, 0, 0.0, DifficultyBin.IGNORED),
        (40, 0, 0.15, DifficultyBin.EASY),
        (39.9, 0, 0.0, DifficultyBin.MODERATE),
        (50, 0, 0.16, DifficultyBin.MODERATE),
        (25, 2, 0.5, DifficultyBin.HARD),
        (25, 2, 0.51, DifficultyBin.IGNORED),
        (100, 3, 0.0, DifficultyBin.IGNORED),
    ],
)
def test_classify_difficulty_table(height, occlusion, truncation, expected):
    obj = gt((0.0, 0.0, 10.0, height), occlusion=occlusion, truncation=truncation)
    assert classify_difficulty(obj) is expected


@settings(max_examples=300, deadline=None)
@given(
    st.floats(1, 200), st.integers(0, 3), st.floats(0, 1),
    st.floats(0, 50), st.integers(0, 3), st.floats(0, 1),
)
def test_classify_difficulty_monotone(h, occ, trunc, dh, docc, dtrunc):
    base = gt((0.0, 0.0, 10.0, h), occlusion=occ, truncation=trunc)
    easier = gt((0.0, 0.0, 10.0, h + dh), occlusion=max(0, occ - docc), truncation=max(0.0, trunc - dtrunc))
    assert classify_difficulty(easier) <= classify_difficulty(base)


def test_classify_ignores_other_fields():
    a = gt((0.0, 0.0, 10.0, 50.0))
    b = GroundTruthObject("Van", 0.0, 0, 2.0, Box2D(300.0, 20.0, 400.0, 70.0), (9.0, 9.0, 9.0), (5.0, 5.0, 5.0), 1.0)
    assert classify_difficulty(a) == classify_difficulty(b)


def test_load_dir_sorted_and_error_has_path(tmp_path):
    (tmp_path / "000002.txt").write_text(LINE + "\n")
    (tmp_path / "000001.txt").write_text("")
    frames = load_dir(tmp_path, threads=4)
    assert list(frames) == ["000001", "000002"]
    (tmp_path / "000003.txt").write_text("Car 1 2\n")
    with pytest.raises(KittiParseError) as exc:
        load_dir(tmp_path)
    assert exc.value.path.endswith("000003.txt") and exc.value.line == 1
