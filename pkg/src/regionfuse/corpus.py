"""Dataset plumbing: manifests, images, fold splits, synthetic corpora.

A corpus is described by a tab-separated manifest, one sample per line:

    sample_id <TAB> image_path <TAB> landmark_path <TAB> label

Lines starting with ``#`` and blank lines are skipped.  Labels are ``0``
(female) or ``1`` (male).  Paths are kept exactly as written; callers that
need absolute paths resolve them against the manifest's directory with
`resolve_records`.
"""

import os
import zlib
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImageError,
    DuplicateIdError,
    MissingFileError,
    ParseError,
    TooFewSamplesError,
    UnsupportedFormatError,
)

# BT.601 luma weights used to collapse color inputs to one channel.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    image_path: str
    landmark_path: str
    label: int


@dataclass(frozen=True)
class FoldSplit:
    """Assignment of sample ids to cross-validation folds."""

    k: int
    assignments: dict  # sample_id -> fold index in [0, k)

    def fold_of(self, sample_id):
        return self.assignments[sample_id]


def load_manifest(path):
    """Parse a manifest file into a list of `SampleRecord` in file order."""
    if not os.path.isfile(path):
        raise MissingFileError(path)
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError(path, lineno,
                                 f"expected 4 tab-separated fields, got {len(fields)}")
            sample_id, image_path, landmark_path, label_str = fields
            if not sample_id:
                raise ParseError(path, lineno, "empty sample id")
            if label_str not in ("0", "1"):
                raise ParseError(path, lineno,
                                 f"label must be 0 or 1, got {label_str!r}")
            if sample_id in seen:
                raise DuplicateIdError(sample_id)
            seen.add(sample_id)
            records.append(SampleRecord(sample_id, image_path, landmark_path,
                                        int(label_str)))
    return records


def write_manifest(records, path):
    """Write records as a manifest; `load_manifest` inverts this exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"{rec.sample_id}\t{rec.image_path}\t"
                     f"{rec.landmark_path}\t{rec.label}\n")


def resolve_records(records, base_dir):
    """Resolve relative image/landmark paths against ``base_dir``."""
    out = []
    for rec in records:
        out.append(replace(
            rec,
            image_path=os.path.join(base_dir, rec.image_path)
            if not os.path.isabs(rec.image_path) else rec.image_path,
            landmark_path=os.path.join(base_dir, rec.landmark_path)
            if not os.path.isabs(rec.landmark_path) else rec.landmark_path,
        ))
    return out


def load_gray_image(path):
    """Load an image as a 2-D uint8 array.

    8-bit grayscale images pass through untouched.  Color inputs are
    collapsed with BT.601 weights (0.299 R + 0.587 G + 0.114 B), rounded
    half away from zero.  Anything that is not 8 bits per channel is
    rejected rather than silently rescaled.
    """
    if not os.path.isfile(path):
        raise MissingFileError(path)
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(path, str(exc)) from exc
    except (OSError, ValueError) as exc:
        # Pillow surfaces short pixel buffers as ValueError
        raise CorruptImageError(path, str(exc)) from exc
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
        raise UnsupportedFormatError(path, f"mode {img.mode} is not 8-bit")
    try:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise CorruptImageError(path, str(exc)) from exc
    luma = rgb @ _LUMA
    return np.floor(luma + 0.5).clip(0, 255).astype(np.uint8)


def write_pgm(image, path):
    """Write a uint8 image as binary PGM (P5, maxval 255)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("write_pgm expects a 2-D array")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


def sub_seed(seed, name):
    """Derive a stable 31-bit child seed for a named pipeline stage."""
    return zlib.crc32(f"{seed}/{name}".encode()) & 0x7FFFFFFF


def stratified_fold_indices(labels, k, seed):
    """Assign each sample to one of ``k`` folds, stratified by label.

    Within each class the samples are shuffled and dealt round-robin; the
    deal position carries over between classes so global fold sizes differ
    by at most one.  Deterministic in (labels, k, seed).
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    rng = np.random.default_rng(seed)
    fold = np.empty(labels.shape[0], dtype=np.int64)
    start = 0
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise TooFewSamplesError(cls, idx.size, k)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (start + np.arange(idx.size)) % k
        start += idx.size
    return fold


def make_folds(records, k, seed):
    """Build a deterministic stratified `FoldSplit` over manifest records."""
    labels = np.array([rec.label for rec in records])
    fold = stratified_fold_indices(labels, k, seed)
    assignments = {rec.sample_id: int(f) for rec, f in zip(records, fold)}
    return FoldSplit(k=k, assignments=assignments)


def stratified_holdout_mask(labels, fraction, seed):
    """Mark a stratified holdout subset: True = held out.

    Per class, ``round(fraction * count)`` samples (at least 1, and at
    most ``count - 1`` so that the remainder keeps both classes) are chosen
    with a seeded shuffle.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    mask = np.zeros(labels.shape[0], dtype=bool)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise TooFewSamplesError(cls, idx.size, 2)
        n_hold = int(np.floor(fraction * idx.size + 0.5))
        n_hold = min(max(n_hold, 1), idx.size - 1)
        take = idx[rng.permutation(idx.size)][:n_hold]
        mask[take] = True
    return mask


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

# Canonical 49-point face template, in fractions of the image side.
# Ordering matches the landmark convention in `regions`:
#   0-4 left brow, 5-9 right brow, 10-13 nose bridge, 14-18 nose base,
#   19-24 left eye, 25-30 right eye, 31-48 mouth (12 outer + 6 inner).
def _build_template():
    pts = [
        # left brow
        (0.16, 0.31), (0.22, 0.29), (0.28, 0.28), (0.34, 0.29), (0.40, 0.31),
        # right brow
        (0.60, 0.31), (0.66, 0.29), (0.72, 0.28), (0.78, 0.29), (0.84, 0.31),
        # nose bridge (staggered so its hull has usable width)
        (0.45, 0.34), (0.55, 0.40), (0.42, 0.46), (0.58, 0.52),
        # nose base
        (0.38, 0.54), (0.44, 0.60), (0.50, 0.66), (0.56, 0.60), (0.62, 0.54),
        # left eye
        (0.20, 0.40), (0.24, 0.37), (0.32, 0.37),
        (0.36, 0.40), (0.32, 0.43), (0.24, 0.43),
        # right eye
        (0.64, 0.40), (0.68, 0.37), (0.76, 0.37),
        (0.80, 0.40), (0.76, 0.43), (0.68, 0.43),
    ]
    # mouth: 12 points on an outer ellipse, 6 on an inner one
    cx, cy = 0.50, 0.78
    for i in range(12):
        t = 2.0 * np.pi * i / 12.0
        pts.append((cx + 0.18 * np.cos(t), cy + 0.07 * np.sin(t)))
    for i in range(6):
        t = 2.0 * np.pi * i / 6.0
        pts.append((cx + 0.10 * np.cos(t), cy + 0.03 * np.sin(t)))
    return np.array(pts)


CANONICAL_FACE = _build_template()

# Horizontal bands (fractions of height) carrying the class-dependent texture.
_EYE_BAND = (0.25, 0.50)
_LIP_BAND = (0.68, 0.88)


def synthesize_sample(label, image_size, rng):
    """Render one synthetic face image and its jittered landmarks.

    The image is a smooth sinusoidal background plus Gaussian noise, with a
    checkerboard pattern whose parity depends on the class label: class 0
    carries it in the eye band, class 1 in the lip band.  The two bands are
    what region crops can discriminate on; elsewhere the classes look alike.
    """
    size = image_size
    yy, xx = np.mgrid[0:size, 0:size]
    phase = rng.uniform(0.0, 2.0 * np.pi)
    base = 120.0 + 30.0 * np.sin(2.0 * np.pi * xx / (0.37 * size) + phase)
    img = base + rng.normal(0.0, 6.0, size=(size, size))

    checker = np.where((xx + yy) % 2 == 0, 45.0, -45.0)
    y0, y1 = (_EYE_BAND if label == 0 else _LIP_BAND)
    band = (yy >= y0 * size) & (yy < y1 * size)
    img = img + np.where(band, checker, 0.0)

    img = np.floor(img + 0.5).clip(0, 255).astype(np.uint8)

    jitter = rng.uniform(-0.004, 0.004, size=CANONICAL_FACE.shape)
    landmarks = (CANONICAL_FACE + jitter) * size
    return img, landmarks


def generate_synthetic_corpus(out_dir, n_per_class, image_size=96, seed=0):
    """Write a labeled synthetic corpus and its manifest.

    Creates ``images/`` and ``landmarks/`` under ``out_dir`` plus a
    ``manifest.tsv`` with paths relative to ``out_dir``.  Returns the
    manifest path.  Deterministic in (n_per_class, image_size, seed).
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    if image_size < 48:
        raise ValueError("image_size below 48 leaves regions too small")
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "landmarks"), exist_ok=True)
    rng = np.random.default_rng(sub_seed(seed, "synth"))
    records = []
    for i in range(2 * n_per_class):
        label = i % 2
        sample_id = f"s{i:04d}"
        img, landmarks = synthesize_sample(label, image_size, rng)
        image_rel = os.path.join("images", f"{sample_id}.pgm")
        lm_rel = os.path.join("landmarks", f"{sample_id}.txt")
        write_pgm(img, os.path.join(out_dir, image_rel))
        with open(os.path.join(out_dir, lm_rel), "w", encoding="utf-8") as fh:
            for x, y in landmarks:
                fh.write(f"{x:.3f} {y:.3f}\n")
        records.append(SampleRecord(sample_id, image_rel, lm_rel, label))
    manifest_path = os.path.join(out_dir, "manifest.tsv")
    write_manifest(records, manifest_path)
    return manifest_path
