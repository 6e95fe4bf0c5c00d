import numpy as np
import pytest

from regionfuse.corpus import CANONICAL_FACE
from regionfuse.errors import (
    DegenerateRegionError,
    MissingFileError,
    OutOfBoundsError,
    ParseError,
    WrongPointCountError,
)
from regionfuse.regions import (
    N_LANDMARKS,
    N_REGIONS,
    PAD_FRACTION,
    RegionId,
    crop,
    extract_region_boxes,
    grid_bounds,
    grid_cells,
    load_landmarks,
    region_box,
)

SIZE = 200
LANDMARKS = CANONICAL_FACE * SIZE
IMAGE = np.zeros((SIZE, SIZE), dtype=np.uint8)


# -- landmark files -----------------------------------------------------------

def test_load_landmarks_round_trip(tmp_path):
    path = tmp_path / "pts.txt"
    with open(path, "w") as fh:
        for x, y in LANDMARKS:
            fh.write(f"{x:.6f} {y:.6f}\n")
    pts = load_landmarks(path)
    assert pts.shape == (49, 2)
    assert np.allclose(pts, LANDMARKS, atol=1e-6)


def test_load_landmarks_skips_blank_lines(tmp_path):
    path = tmp_path / "pts.txt"
    body = "\n".join(f"{x:.3f} {y:.3f}" for x, y in LANDMARKS)
    path.write_text("\n" + body + "\n\n")
    assert load_landmarks(path).shape == (49, 2)


@pytest.mark.parametrize("mutate", [
    lambda lines: lines[:-1],                      # 48 points
    lambda lines: lines + ["5.0 5.0"],             # 50 points
])
def test_load_landmarks_wrong_count(tmp_path, mutate):
    lines = [f"{x:.3f} {y:.3f}" for x, y in LANDMARKS]
    path = tmp_path / "pts.txt"
    path.write_text("\n".join(mutate(lines)) + "\n")
    with pytest.raises(WrongPointCountError):
        load_landmarks(path)


@pytest.mark.parametrize("bad", ["1.0", "1.0 2.0 3.0", "a b", "1.0 nan",
                                 "inf 2.0"])
def test_load_landmarks_bad_lines(tmp_path, bad):
    lines = [f"{x:.3f} {y:.3f}" for x, y in LANDMARKS]
    lines[10] = bad
    path = tmp_path / "pts.txt"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError):
        load_landmarks(path)


def test_load_landmarks_missing():
    with pytest.raises(MissingFileError):
        load_landmarks("/nonexistent/pts.txt")


# -- region boxes -------------------------------------------------------------

def test_ten_regions_in_declared_order():
    assert N_REGIONS == 10
    assert [r.label for r in RegionId] == [
        "left_eye", "right_eye", "complete_eye", "nose", "upper_nose",
        "lower_nose", "lip", "forehead", "left_face", "right_face",
    ]
    boxes = extract_region_boxes(LANDMARKS, IMAGE)
    assert [b.region for b in boxes] == list(RegionId)


def test_boxes_are_padded_hulls():
    # left eye: hull of eye outline + brow, 10% pad per side
    pts = LANDMARKS[np.r_[19:25, 0:5]]
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    box = region_box(LANDMARKS, IMAGE, RegionId.LEFT_EYE)
    assert box.x0 == int(np.floor(xmin - PAD_FRACTION * (xmax - xmin)))
    assert box.x1 == int(np.ceil(xmax + PAD_FRACTION * (xmax - xmin)))
    assert box.y0 == int(np.floor(ymin - PAD_FRACTION * (ymax - ymin)))
    assert box.y1 == int(np.ceil(ymax + PAD_FRACTION * (ymax - ymin)))


def test_boxes_nest_sensibly():
    boxes = {b.region: b for b in extract_region_boxes(LANDMARKS, IMAGE)}
    left = boxes[RegionId.LEFT_EYE]
    right = boxes[RegionId.RIGHT_EYE]
    both = boxes[RegionId.COMPLETE_EYE]
    assert both.x0 <= left.x0 and both.x1 >= right.x1
    assert both.y0 <= min(left.y0, right.y0)
    assert left.x1 <= right.x0 + 1  # eyes don't overlap materially
    nose = boxes[RegionId.NOSE]
    upper = boxes[RegionId.UPPER_NOSE]
    lower = boxes[RegionId.LOWER_NOSE]
    assert upper.y0 >= nose.y0 - 1 and lower.y1 <= nose.y1 + 1
    assert upper.y0 < lower.y0  # bridge sits above the base
    forehead = boxes[RegionId.FOREHEAD]
    # forehead band ends at the brow line, plus its own 10% pad
    brow_line = LANDMARKS[0:10, 1].min()
    assert forehead.y0 < both.y0
    assert forehead.y1 <= np.ceil(brow_line + PAD_FRACTION * forehead.height) + 1
    face_l = boxes[RegionId.LEFT_FACE]
    face_r = boxes[RegionId.RIGHT_FACE]
    assert face_l.x0 < nose.x0 and face_r.x1 > nose.x1


def test_translation_equivariance():
    # keep both variants away from the borders so nothing clips
    base = LANDMARKS + np.array([20.0, 20.0])
    shifted = base + np.array([13.0, 7.0])
    big = np.zeros((SIZE + 80, SIZE + 80), dtype=np.uint8)
    for region in RegionId:
        a = region_box(base, big, region)
        b = region_box(shifted, big, region)
        assert (b.x0 - a.x0, b.y0 - a.y0) == (13, 7)
        assert (b.x1 - a.x1, b.y1 - a.y1) == (13, 7)


def test_mirror_symmetry_swaps_eye_boxes():
    # integer landmarks keep floor/ceil mirror-exact: floor(W-b) == W-ceil(b)
    lm = np.round(LANDMARKS)
    mirrored = lm.copy()
    mirrored[:, 0] = SIZE - lm[:, 0]
    # swap left/right point groups so group semantics still hold
    swap = np.arange(49)
    swap[0:5], swap[5:10] = np.arange(5, 10), np.arange(0, 5)
    swap[19:25], swap[25:31] = np.arange(25, 31), np.arange(19, 25)
    mirrored = mirrored[swap]
    a = region_box(lm, IMAGE, RegionId.LEFT_EYE)
    b = region_box(mirrored, IMAGE, RegionId.RIGHT_EYE)
    assert (b.x0, b.x1) == (SIZE - a.x1, SIZE - a.x0)
    assert (b.y0, b.y1) == (a.y0, a.y1)


def test_boxes_clip_to_image():
    tiny = np.zeros((70, 70), dtype=np.uint8)
    lm = CANONICAL_FACE * 95  # hull spills over the right/bottom edges
    for box in extract_region_boxes(lm, tiny):
        assert 0 <= box.x0 < box.x1 <= 70
        assert 0 <= box.y0 < box.y1 <= 70


def test_degenerate_region_raises():
    lm = LANDMARKS.copy()
    lm[10:14] = [50.0, 50.0]  # bridge collapses to one integer point
    with pytest.raises(DegenerateRegionError):
        region_box(lm, IMAGE, RegionId.UPPER_NOSE)
    off = LANDMARKS + 1000.0  # fully outside the image
    with pytest.raises(DegenerateRegionError):
        region_box(off, IMAGE, RegionId.LIP)


# -- cropping and grids -------------------------------------------------------

def test_crop_is_a_copy():
    rng = np.random.default_rng(8)
    img = rng.integers(0, 256, size=(30, 30), dtype=np.uint8)
    box = region_box(CANONICAL_FACE * 30, img, RegionId.LIP)
    patch = crop(img, box)
    assert patch.shape == (box.height, box.width)
    assert np.array_equal(patch, img[box.y0:box.y1, box.x0:box.x1])
    patch[:] = 0
    assert img.any()


def test_crop_bounds_checked():
    img = np.zeros((10, 10), dtype=np.uint8)
    box = region_box(LANDMARKS, IMAGE, RegionId.LIP)  # sized for 200px image
    with pytest.raises(OutOfBoundsError):
        crop(img, box)


def test_grid_bounds_nine_by_nine():
    cells = grid_bounds(9, 9, 2)
    # remainder goes left/top: widths 5,4 and heights 5,4
    assert cells == [(0, 0, 5, 5), (5, 0, 9, 5), (0, 5, 5, 9), (5, 5, 9, 9)]


def test_grid_bounds_partition_exactly():
    rng = np.random.default_rng(2)
    for _ in range(50):
        w = int(rng.integers(4, 40))
        h = int(rng.integers(4, 40))
        n = int(rng.integers(1, min(w, h) + 1))
        cells = grid_bounds(w, h, n)
        assert len(cells) == n * n
        cover = np.zeros((h, w), dtype=int)
        for x0, y0, x1, y1 in cells:
            assert x1 > x0 and y1 > y0
            cover[y0:y1, x0:x1] += 1
        assert (cover == 1).all()
        widths = {x1 - x0 for x0, _, x1, _ in cells}
        assert len(widths) <= 2 and max(widths) - min(widths) <= 1


def test_grid_cells_row_major():
    img = np.arange(36).reshape(6, 6)
    cells = grid_cells(img, 2)
    assert len(cells) == 4
    assert np.array_equal(cells[0], img[:3, :3])
    assert np.array_equal(cells[1], img[:3, 3:])
    assert np.array_equal(cells[2], img[3:, :3])
    assert np.array_equal(cells[3], img[3:, 3:])


def test_grid_bounds_rejects_oversplit():
    with pytest.raises(ValueError):
        grid_bounds(3, 10, 4)
    with pytest.raises(ValueError):
        grid_bounds(10, 10, 0)


def test_landmark_count_constant():
    assert N_LANDMARKS == 49
    assert CANONICAL_FACE.shape == (49, 2)
