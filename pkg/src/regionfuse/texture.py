"""Compass-direction local binary pattern descriptors.

The descriptor for a region crop is built in three steps:

1. Correlate the crop with the eight 3x3 Kirsch compass masks (replicate
   border, signed arithmetic), giving one edge-response image per compass
   direction.
2. Rescale each response to [0, 255] by its own min/max and split the
   region into a uniform n x n grid of cells.
3. Inside every cell compute 8-neighbor local binary patterns and collect
   a histogram over the 59 uniform-pattern bins (or all 256 codes when
   ``uniform=False``), L1-normalized per (cell, direction).

Histograms are concatenated cell-major, direction-minor: all eight
directions of cell 0 first, then cell 1, and so on.  The result has
``n*n * 8 * 59`` entries in uniform mode.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmallError, RegionTooSmallError
from .regions import grid_bounds

UNIFORM_BINS = 59
FULL_BINS = 256
N_DIRECTIONS = 8

# 8-neighborhood, clockwise from the top-left corner; bit p gets weight 2**p.
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1), (0, 1),
    (1, 1), (1, 0), (1, -1), (0, -1),
)


def lbp_code(window):
    """LBP code of one 3x3 window (center compared against its ring).

    A neighbor counts as 1 when it is greater than or equal to the center;
    neighbors are read clockwise from the top-left and weighted 2**p in
    that order.
    """
    win = np.asarray(window)
    if win.shape != (3, 3):
        raise ValueError(f"expected a 3x3 window, got {win.shape}")
    center = int(win[1, 1])
    code = 0
    for p, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        if int(win[1 + dy, 1 + dx]) >= center:
            code |= 1 << p
    return code


def lbp_image(image):
    """LBP codes for every interior pixel; output is (h-2, w-2) uint8.

    Border pixels have no full neighborhood and are dropped rather than
    padded, so the coding never mixes in synthetic pixels.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("lbp_image expects a 2-D array")
    h, w = img.shape
    if h < 3 or w < 3:
        raise ImageTooSmallError(img.shape, (3, 3))
    img = img.astype(np.int32, copy=False)
    center = img[1:-1, 1:-1]
    codes = np.zeros((h - 2, w - 2), dtype=np.uint8)
    for p, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        neighbor = img[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        codes |= (neighbor >= center).astype(np.uint8) << p
    return codes


def transitions(code):
    """Number of 0/1 changes when reading the 8 bits circularly."""
    bits = [(code >> p) & 1 for p in range(8)]
    return sum(bits[p] != bits[(p + 1) % 8] for p in range(8))


def _build_uniform_table():
    # Uniform codes (at most 2 circular transitions) get bins 0..57 in
    # ascending numeric order; everything else shares the catch-all bin 58.
    table = np.full(256, UNIFORM_BINS - 1, dtype=np.uint8)
    uniform_codes = [c for c in range(256) if transitions(c) <= 2]
    for bin_idx, code in enumerate(uniform_codes):
        table[code] = bin_idx
    assert len(uniform_codes) == UNIFORM_BINS - 1
    return table


_UNIFORM_TABLE = _build_uniform_table()


def uniform_map():
    """Copy of the 256-entry code -> histogram-bin table."""
    return _UNIFORM_TABLE.copy()


def lbp_histogram(codes, uniform=True):
    """L1-normalized histogram of LBP codes (59 uniform bins or 256 raw)."""
    codes = np.asarray(codes, dtype=np.uint8).ravel()
    if codes.size == 0:
        raise ValueError("no codes to histogram")
    if uniform:
        hist = np.bincount(_UNIFORM_TABLE[codes], minlength=UNIFORM_BINS)
    else:
        hist = np.bincount(codes, minlength=FULL_BINS)
    return hist / codes.size


@dataclass(frozen=True)
class KirschMask:
    direction: str
    coefficients: np.ndarray  # (3, 3) int32


# Outer-ring positions read clockwise from the top-left corner.
_RING = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0))
_NORTH_RING = (5, 5, 5, -3, -3, -3, -3, -3)
DIRECTIONS = ("north", "northeast", "east", "southeast",
              "south", "southwest", "west", "northwest")


def kirsch_masks():
    """The eight Kirsch compass masks, north first, clockwise.

    Each mask is the north mask with its outer ring rotated; coefficients
    sum to zero so flat patches give zero response.
    """
    masks = []
    for k, direction in enumerate(DIRECTIONS):
        coef = np.zeros((3, 3), dtype=np.int32)
        for i, (r, c) in enumerate(_RING):
            coef[r, c] = _NORTH_RING[(i + k) % 8]
        masks.append(KirschMask(direction, coef))
    return masks


_MASK_STACK = np.stack([m.coefficients for m in kirsch_masks()])


def convolve_edge_response(image, mask):
    """Correlate an image with one 3x3 mask; replicate-padded, signed int32.

    Correlation, not convolution: the mask is applied as written, without
    flipping.  Output has the same shape as the input.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ImageTooSmallError(img.shape, (3, 3))
    coef = np.asarray(mask.coefficients if isinstance(mask, KirschMask) else mask,
                      dtype=np.int32)
    if coef.shape != (3, 3):
        raise ValueError("mask must be 3x3")
    padded = np.pad(img.astype(np.int64, copy=False), 1, mode="edge")
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.int64)
    for u in range(3):
        for v in range(3):
            if coef[u, v]:
                out += coef[u, v] * padded[u:u + h, v:v + w]
    return out.astype(np.int32)


def rescale_to_uint8(response):
    """Map a response image to [0, 255] by its own min/max.

    Constant responses (flat patches) map to all zeros.  Rounding is half
    away from zero, matching the grayscale loader.
    """
    resp = np.asarray(response, dtype=np.float64)
    lo = resp.min()
    hi = resp.max()
    if hi == lo:
        return np.zeros(resp.shape, dtype=np.uint8)
    scaled = (resp - lo) * (255.0 / (hi - lo))
    return np.floor(scaled + 0.5).clip(0, 255).astype(np.uint8)


def descriptor_length(grid_n, uniform=True):
    """Length of a region descriptor for an n x n grid."""
    bins = UNIFORM_BINS if uniform else FULL_BINS
    return grid_n * grid_n * N_DIRECTIONS * bins


def colbp_descriptor(region_image, grid_n, uniform=True):
    """Compass-LBP descriptor of one region crop.

    Requires every grid cell to be at least 3x3, i.e. the crop must be at
    least ``3 * grid_n`` pixels on each side.
    """
    img = np.asarray(region_image)
    if img.ndim != 2:
        raise ValueError("expected a 2-D region crop")
    h, w = img.shape
    if h // grid_n < 3 or w // grid_n < 3:
        raise RegionTooSmallError(img.shape, grid_n)

    rescaled = [rescale_to_uint8(convolve_edge_response(img, coef))
                for coef in _MASK_STACK]

    bins = UNIFORM_BINS if uniform else FULL_BINS
    cells = grid_bounds(w, h, grid_n)
    out = np.empty(len(cells) * N_DIRECTIONS * bins, dtype=np.float64)
    pos = 0
    for x0, y0, x1, y1 in cells:
        for resp in rescaled:
            codes = lbp_image(resp[y0:y1, x0:x1])
            out[pos:pos + bins] = lbp_histogram(codes, uniform=uniform)
            pos += bins
    return out
