import numpy as np
import pytest

from regionfuse.errors import ImageTooSmallError, RegionTooSmallError
from regionfuse.texture import (
    DIRECTIONS,
    FULL_BINS,
    NEIGHBOR_OFFSETS,
    UNIFORM_BINS,
    colbp_descriptor,
    convolve_edge_response,
    descriptor_length,
    kirsch_masks,
    lbp_code,
    lbp_histogram,
    lbp_image,
    rescale_to_uint8,
    transitions,
    uniform_map,
)


def naive_lbp(img):
    """Per-pixel reference: loops, no vectorization."""
    img = np.asarray(img, dtype=int)
    h, w = img.shape
    out = np.zeros((h - 2, w - 2), dtype=np.uint8)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            c = img[y, x]
            code = 0
            for p, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
                if img[y + dy, x + dx] >= c:
                    code |= 1 << p
            out[y - 1, x - 1] = code
    return out


def naive_correlate(img, coef):
    """Triple-loop reference with replicate borders."""
    img = np.asarray(img, dtype=int)
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            acc = 0
            for u in (-1, 0, 1):
                for v in (-1, 0, 1):
                    yy = min(max(y + u, 0), h - 1)
                    xx = min(max(x + v, 0), w - 1)
                    acc += coef[u + 1, v + 1] * img[yy, xx]
            out[y, x] = acc
    return out


# -- plain LBP ----------------------------------------------------------------

def test_lbp_code_sign_pattern_window():
    # ring 40,35,30,10,50,5,0 read clockwise from top-left against center 29
    window = [[40, 35, 30],
              [0, 29, 10],
              [5, 50, 29]]
    code = lbp_code(window)
    bits = "".join(str((code >> p) & 1) for p in range(8))
    assert bits == "11101100"
    assert code == 55


def test_lbp_code_ties_count_as_one():
    window = np.full((3, 3), 7)
    assert lbp_code(window) == 255


def test_lbp_image_matches_naive_reference():
    rng = np.random.default_rng(42)
    for _ in range(200):
        h = int(rng.integers(3, 33))
        w = int(rng.integers(3, 33))
        img = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        got = lbp_image(img)
        assert got.shape == (h - 2, w - 2)
        assert np.array_equal(got, naive_lbp(img))


def test_lbp_image_rejects_tiny_input():
    with pytest.raises(ImageTooSmallError):
        lbp_image(np.zeros((2, 5), dtype=np.uint8))


# -- uniform mapping ----------------------------------------------------------

def test_uniform_code_census():
    uniform = [c for c in range(256) if transitions(c) <= 2]
    assert len(uniform) == 58
    table = uniform_map()
    # uniform codes occupy bins 0..57 in ascending numeric order
    assert [int(table[c]) for c in uniform] == list(range(58))
    others = [c for c in range(256) if transitions(c) > 2]
    assert all(table[c] == 58 for c in others)
    assert UNIFORM_BINS == 59


def test_transitions_examples():
    assert transitions(0b00000000) == 0
    assert transitions(0b11111111) == 0
    assert transitions(0b00001111) == 2
    assert transitions(0b01010101) == 8


def test_histogram_is_l1_normalized():
    rng = np.random.default_rng(1)
    codes = rng.integers(0, 256, size=50, dtype=np.uint8)
    hist = lbp_histogram(codes)
    assert hist.shape == (59,)
    assert abs(hist.sum() - 1.0) < 1e-12
    full = lbp_histogram(codes, uniform=False)
    assert full.shape == (256,)
    assert abs(full.sum() - 1.0) < 1e-12


# -- Kirsch masks -------------------------------------------------------------

def test_masks_structure():
    masks = kirsch_masks()
    assert [m.direction for m in masks] == list(DIRECTIONS)
    north = masks[0].coefficients
    assert np.array_equal(north, [[5, 5, 5], [-3, 0, -3], [-3, -3, -3]])
    for m in masks:
        coef = m.coefficients
        assert coef.sum() == 0
        assert sorted(coef.ravel()) == sorted([5] * 3 + [-3] * 5 + [0])
        assert coef[1, 1] == 0
    # south is north upside down; east carries its 5s on the left column
    assert np.array_equal(masks[4].coefficients, north[::-1])
    assert np.array_equal(masks[2].coefficients,
                          [[5, -3, -3], [5, 0, -3], [5, -3, -3]])


def test_mask_ring_rotation_closure():
    ring = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0)]
    masks = kirsch_masks()
    for k in range(8):
        a = masks[k].coefficients
        b = masks[(k + 1) % 8].coefficients
        rotated = {ring[(i - 1) % 8]: a[ring[i]] for i in range(8)}
        for pos, value in rotated.items():
            assert b[pos] == value


def test_east_mask_fires_on_bright_left_edge():
    patch = np.array([[250, 120, 10]] * 3, dtype=np.uint8)
    responses = [int(convolve_edge_response(patch, m)[1, 1])
                 for m in kirsch_masks()]
    assert DIRECTIONS[int(np.argmax(responses))] == "east"


def test_correlation_matches_naive_reference():
    rng = np.random.default_rng(7)
    masks = kirsch_masks()
    for _ in range(100):
        img = rng.integers(0, 256, size=(12, 12), dtype=np.uint8)
        for m in masks:
            got = convolve_edge_response(img, m)
            assert got.dtype == np.int32
            assert np.array_equal(got, naive_correlate(img, m.coefficients))


def test_constant_image_gives_zero_response():
    img = np.full((9, 11), 133, dtype=np.uint8)
    for m in kirsch_masks():
        assert not convolve_edge_response(img, m).any()


def test_response_range_bound():
    # brightest possible: the three 5s on 255 and the -3s on 0
    best = np.array([[255, 255, 255], [0, 128, 0], [0, 0, 0]], dtype=np.uint8)
    resp = convolve_edge_response(best, kirsch_masks()[0])
    assert resp[1, 1] == 3825
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
    for m in kirsch_masks():
        resp = convolve_edge_response(img, m)
        assert resp.max() <= 3825 and resp.min() >= -3825


def test_single_bright_pixel_stamps_mirrored_mask():
    img = np.zeros((5, 5), dtype=np.uint8)
    img[2, 2] = 100
    for m in kirsch_masks():
        resp = convolve_edge_response(img, m)
        expected = np.zeros((5, 5), dtype=np.int64)
        expected[1:4, 1:4] = 100 * m.coefficients[::-1, ::-1]
        assert np.array_equal(resp, expected)


# -- rescaling ----------------------------------------------------------------

def test_rescale_endpoints_and_rounding():
    resp = np.array([[0, 1], [4, 150]])
    out = rescale_to_uint8(resp)
    assert out[0, 0] == 0 and out[1, 1] == 255
    assert out[0, 1] == 2   # 1.7 rounds up
    assert out[1, 0] == 7   # 6.8 rounds up
    # scale factor 255/2 is exact in binary, so the half-case is stable
    half = rescale_to_uint8(np.array([[0, 1], [1, 2]]))
    assert half.tolist() == [[0, 128], [128, 255]]


def test_rescale_constant_input_maps_to_zero():
    assert not rescale_to_uint8(np.full((4, 4), 1234)).any()


# -- descriptor ---------------------------------------------------------------

def test_descriptor_lengths():
    assert descriptor_length(2) == 4 * 8 * 59 == 1888
    assert descriptor_length(3) == 9 * 8 * 59 == 4248
    assert descriptor_length(4) == 16 * 8 * 59 == 7552
    assert descriptor_length(2, uniform=False) == 4 * 8 * 256
    assert FULL_BINS == 256


@pytest.mark.parametrize("grid", [2, 3, 4])
def test_descriptor_contract(grid):
    rng = np.random.default_rng(grid)
    img = rng.integers(0, 256, size=(3 * grid + 5, 3 * grid + 2),
                       dtype=np.uint8)
    desc = colbp_descriptor(img, grid)
    assert desc.shape == (grid * grid * 8 * 59,)
    blocks = desc.reshape(-1, 59)
    assert np.allclose(blocks.sum(axis=1), 1.0, atol=1e-9)
    assert (desc >= 0).all()


def test_descriptor_offset_invariance():
    rng = np.random.default_rng(11)
    img = rng.integers(60, 181, size=(14, 17), dtype=np.uint8)
    base = colbp_descriptor(img, 2)
    for offset in (-40, 25, 40):
        shifted = (img.astype(np.int16) + offset).astype(np.uint8)
        assert np.array_equal(colbp_descriptor(shifted, 2), base)


def test_descriptor_rejects_small_region():
    with pytest.raises(RegionTooSmallError):
        colbp_descriptor(np.zeros((11, 12), dtype=np.uint8), 4)


def test_descriptor_order_is_cell_major():
    rng = np.random.default_rng(13)
    img = rng.integers(0, 256, size=(12, 12), dtype=np.uint8)
    desc = colbp_descriptor(img, 2)
    cells = [img[:6, :6], img[:6, 6:], img[6:, :6], img[6:, 6:]]
    masks = kirsch_masks()
    # rebuild cell 2 (bottom-left), direction 3 by hand
    rescaled = rescale_to_uint8(convolve_edge_response(img, masks[3]))
    want = lbp_histogram(lbp_image(rescaled[6:, :6]))
    start = (2 * 8 + 3) * 59
    assert np.array_equal(desc[start:start + 59], want)
    assert len(cells) == 4
