"""Facial region geometry from 49-point landmark annotations.

Landmark files hold one ``x y`` pair per line, 49 lines, pixel units,
origin at the top-left corner.  The point ordering this package assumes:

    0-4    left eyebrow          5-9    right eyebrow
    10-13  nose bridge           14-18  nose base
    19-24  left eye outline      25-30  right eye outline
    31-48  mouth outline (12 outer, 6 inner)

Ten analysis regions are derived from those groups.  Each region is the
axis-aligned hull of its points, padded by 10% of the hull size on every
side and clipped to the image.  The whole convention lives in this module;
nothing else in the package touches landmark indices.
"""

import enum
import math
import os

import numpy as np

from .errors import (
    DegenerateRegionError,
    MissingFileError,
    OutOfBoundsError,
    ParseError,
    WrongPointCountError,
)

N_LANDMARKS = 49
PAD_FRACTION = 0.10


class RegionId(enum.IntEnum):
    LEFT_EYE = 0
    RIGHT_EYE = 1
    COMPLETE_EYE = 2
    NOSE = 3
    UPPER_NOSE = 4
    LOWER_NOSE = 5
    LIP = 6
    FOREHEAD = 7
    LEFT_FACE = 8
    RIGHT_FACE = 9

    @property
    def label(self):
        return self.name.lower()


N_REGIONS = len(RegionId)

_BROW_L = np.arange(0, 5)
_BROW_R = np.arange(5, 10)
_NOSE_BRIDGE = np.arange(10, 14)
_NOSE_BASE = np.arange(14, 19)
_NOSE = np.arange(10, 19)
_EYE_L = np.arange(19, 25)
_EYE_R = np.arange(25, 31)
_MOUTH = np.arange(31, 49)


class RegionBox:
    """Integer pixel box, half-open: columns [x0, x1), rows [y0, y1)."""

    __slots__ = ("region", "x0", "y0", "x1", "y1")

    def __init__(self, region, x0, y0, x1, y1):
        self.region = region
        self.x0 = x0
        self.y0 = y0
        self.x1 = x1
        self.y1 = y1

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    def __eq__(self, other):
        return (isinstance(other, RegionBox)
                and (self.region, self.x0, self.y0, self.x1, self.y1)
                == (other.region, other.x0, other.y0, other.x1, other.y1))

    def __repr__(self):
        return (f"RegionBox({self.region!r}, x0={self.x0}, y0={self.y0}, "
                f"x1={self.x1}, y1={self.y1})")


def load_landmarks(path):
    """Read a 49-point landmark file into a float64 (49, 2) array."""
    if not os.path.isfile(path):
        raise MissingFileError(path)
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ParseError(path, lineno,
                                 f"expected 'x y', got {len(tokens)} tokens")
            try:
                x, y = float(tokens[0]), float(tokens[1])
            except ValueError:
                raise ParseError(path, lineno, f"not numeric: {line!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(path, lineno, "non-finite coordinate")
            pts.append((x, y))
    if len(pts) != N_LANDMARKS:
        raise WrongPointCountError(path, len(pts), N_LANDMARKS)
    return np.array(pts, dtype=np.float64)


def _hull_points(landmarks, region):
    """Points whose hull defines `region`. Returns a (m, 2) array."""
    lm = landmarks
    if region is RegionId.LEFT_EYE:
        return lm[np.concatenate([_EYE_L, _BROW_L])]
    if region is RegionId.RIGHT_EYE:
        return lm[np.concatenate([_EYE_R, _BROW_R])]
    if region is RegionId.COMPLETE_EYE:
        return lm[np.concatenate([_EYE_L, _EYE_R, _BROW_L, _BROW_R])]
    if region is RegionId.NOSE:
        return lm[_NOSE]
    if region is RegionId.UPPER_NOSE:
        return lm[_NOSE_BRIDGE]
    if region is RegionId.LOWER_NOSE:
        return lm[_NOSE_BASE]
    if region is RegionId.LIP:
        return lm[_MOUTH]
    if region is RegionId.FOREHEAD:
        # Band above the brows, one 60%-of-interocular-distance tall strip.
        brows = lm[np.concatenate([_BROW_L, _BROW_R])]
        eye_l = lm[_EYE_L].mean(axis=0)
        eye_r = lm[_EYE_R].mean(axis=0)
        iod = float(np.hypot(*(eye_r - eye_l)))
        top = brows[:, 1].min() - 0.60 * iod
        return np.array([
            [brows[:, 0].min(), top],
            [brows[:, 0].max(), brows[:, 1].min()],
        ])
    if region is RegionId.LEFT_FACE:
        nose_cx = lm[_NOSE][:, 0].mean()
        mouth_cx = lm[_MOUTH][:, 0].mean()
        parts = [lm[_BROW_L], lm[_EYE_L],
                 lm[_NOSE][lm[_NOSE][:, 0] <= nose_cx],
                 lm[_MOUTH][lm[_MOUTH][:, 0] <= mouth_cx]]
        return np.concatenate(parts)
    if region is RegionId.RIGHT_FACE:
        nose_cx = lm[_NOSE][:, 0].mean()
        mouth_cx = lm[_MOUTH][:, 0].mean()
        parts = [lm[_BROW_R], lm[_EYE_R],
                 lm[_NOSE][lm[_NOSE][:, 0] >= nose_cx],
                 lm[_MOUTH][lm[_MOUTH][:, 0] >= mouth_cx]]
        return np.concatenate(parts)
    raise ValueError(f"unknown region {region!r}")


def region_box(landmarks, image, region):
    """Padded, clipped integer box for one region.

    Raises `DegenerateRegionError` when the clipped box is empty, e.g. when
    all defining points fall outside the image or collapse to a point.
    """
    h, w = image.shape[:2]
    pts = _hull_points(landmarks, region)
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    pad_x = PAD_FRACTION * (xmax - xmin)
    pad_y = PAD_FRACTION * (ymax - ymin)
    x0 = max(int(math.floor(xmin - pad_x)), 0)
    y0 = max(int(math.floor(ymin - pad_y)), 0)
    x1 = min(int(math.ceil(xmax + pad_x)), w)
    y1 = min(int(math.ceil(ymax + pad_y)), h)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateRegionError(region.label)
    return RegionBox(region, x0, y0, x1, y1)


def extract_region_boxes(landmarks, image):
    """All ten region boxes, in `RegionId` order."""
    return [region_box(landmarks, image, region) for region in RegionId]


def crop(image, box):
    """Copy the pixels of `box` out of `image`."""
    h, w = image.shape[:2]
    if box.x0 < 0 or box.y0 < 0 or box.x1 > w or box.y1 > h:
        raise OutOfBoundsError(
            f"box ({box.x0},{box.y0})-({box.x1},{box.y1}) vs image {w}x{h}")
    if box.x1 <= box.x0 or box.y1 <= box.y0:
        raise OutOfBoundsError("empty box")
    return image[box.y0:box.y1, box.x0:box.x1].copy()


def grid_bounds(width, height, n):
    """Split a width x height box into an n x n grid, row-major.

    Cell sizes are floor(dim / n) or one more; the remainder pixels go to
    the leftmost columns and topmost rows.  Every pixel lands in exactly
    one cell.
    """
    if n < 1:
        raise ValueError("grid size must be positive")
    if width < n or height < n:
        raise ValueError(f"cannot split {width}x{height} into {n}x{n} cells")

    def edges(total):
        q, r = divmod(total, n)
        sizes = [q + 1] * r + [q] * (n - r)
        out = np.concatenate([[0], np.cumsum(sizes)])
        return out

    xs = edges(width)
    ys = edges(height)
    cells = []
    for row in range(n):
        for col in range(n):
            cells.append((int(xs[col]), int(ys[row]),
                          int(xs[col + 1]), int(ys[row + 1])))
    return cells


def grid_cells(image, n):
    """Cut an image into n*n cell copies, row-major."""
    h, w = image.shape[:2]
    return [image[y0:y1, x0:x1].copy()
            for x0, y0, x1, y1 in grid_bounds(w, h, n)]
