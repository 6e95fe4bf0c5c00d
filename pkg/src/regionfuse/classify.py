"""Per-region linear classifiers with calibrated probability outputs.

Training solves the L1-hinge linear SVM in the dual with coordinate
descent (the approach of Hsieh et al., 2008), deterministic under a fixed
seed.  The bias is handled as an extra constant feature on mean-centered
inputs, sized to ``bias_scale`` times the RMS row norm of the centered
data: relative sizing keeps the implicit bias regularization from
distorting the geometric margin while leaving the Gram diagonal balanced
enough for coordinate descent to converge on weakly scaled histogram
features.  Centering and the column size are folded back into the stored
intercept.

Raw decision values are mapped to probabilities with Platt scaling,
``p(male | f) = 1 / (1 + exp(a f + b))``, fitted by the regularized Newton
method of Lin, Lin and Weng (2007) on a holdout set.

Score arrays are (n, 2) with column 0 = p(female), column 1 = p(male),
i.e. the column index is the class label.  Ties predict male.
"""

import io
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ChecksumMismatchError,
    ColumnMismatchError,
    DidNotConvergeError,
    LengthMismatchError,
    MissingFileError,
    SingleClassError,
    UnsupportedFormatError,
    VersionMismatchError,
)

MODEL_MAGIC = b"RFGM"
MODEL_VERSION = 1


@dataclass(eq=False)
class LinearModel:
    """A trained linear classifier plus its calibration and provenance."""

    w: np.ndarray
    b: float
    C: float = 1.0
    seed: int = 0
    bias_scale: float = 2.0
    # Uncalibrated models fall back to the plain logistic link, which
    # preserves the decision boundary (f = 0 maps to p = 0.5).
    platt_a: float = -1.0
    platt_b: float = 0.0
    calibrated: bool = False
    region: int = -1
    grid: int = 0
    uniform: bool = True
    feature_dim: int = -1          # descriptor width before selection
    selected_indices: np.ndarray = field(default=None)


def train_linear_svm(X, y, C=1.0, seed=0, tol=1e-6, max_iter=100_000,
                     bias_scale=2.0):
    """Fit a linear SVM by dual coordinate descent.

    ``y`` holds labels in {0, 1}.  One iteration is one coordinate update;
    an epoch visits all samples in a fresh seeded permutation.  Stops when
    the dual objective changes by less than ``tol`` (relative) over an
    epoch; raises `DidNotConvergeError` at the iteration cap.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if y.shape[0] != n:
        raise LengthMismatchError(f"{n} samples vs {y.shape[0]} labels")
    if not np.isfinite(X).all():
        raise ValueError("X contains NaN or Inf")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassError()
    if C <= 0.0:
        raise ValueError(f"C must be positive, got {C}")

    s = np.where(y == 1, 1.0, -1.0)
    mu = X.mean(axis=0)
    Xa = np.empty((n, d + 1))
    Xa[:, :d] = X - mu
    # The bias column is sized relative to the centered data so it neither
    # dominates the Gram diagonal (stalling coordinate descent) nor shrinks
    # the effective bias regularization into distorting the margin.
    rms = float(np.sqrt((Xa[:, :d] * Xa[:, :d]).sum(axis=1).mean()))
    bias_column = bias_scale * (rms if rms > 0.0 else 1.0)
    Xa[:, d] = bias_column
    qii = (Xa * Xa).sum(axis=1)

    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    dual_prev = 0.0
    updates = 0
    converged = False
    while not converged:
        for i in rng.permutation(n):
            xi = Xa[i]
            G = s[i] * float(w @ xi) - 1.0
            if alpha[i] == 0.0:
                pg = min(G, 0.0)
            elif alpha[i] == C:
                pg = max(G, 0.0)
            else:
                pg = G
            if pg != 0.0:
                new_alpha = min(max(alpha[i] - G / qii[i], 0.0), C)
                delta = new_alpha - alpha[i]
                if delta != 0.0:
                    w += (delta * s[i]) * xi
                    alpha[i] = new_alpha
        updates += n
        dual = 0.5 * float(w @ w) - float(alpha.sum())
        if abs(dual - dual_prev) <= tol * max(1.0, abs(dual)):
            converged = True
        elif updates >= max_iter:
            raise DidNotConvergeError("linear svm coordinate descent", updates)
        dual_prev = dual

    w_feat = w[:d].copy()
    b = float(w[d] * bias_column - w_feat @ mu)
    return LinearModel(w=w_feat, b=b, C=C, seed=seed, bias_scale=bias_scale,
                       feature_dim=d)


def decision_values(model, X):
    """Signed distances (times |w|) from the decision boundary."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.w.shape[0]:
        raise ColumnMismatchError(
            X.shape[1] if X.ndim == 2 else None, model.w.shape[0])
    return X @ model.w + model.b


def _platt_newton(decisions, targets, max_iter=100, min_step=1e-10,
                  ridge=1e-12):
    """Regularized Newton fit of the sigmoid parameters (a, b).

    Targets are smoothed away from {0, 1} so the fit is well-posed even
    for perfectly separated inputs.  Deterministic; no randomness.
    """
    f = np.asarray(decisions, dtype=np.float64)
    t_pos = targets == 1
    n_pos = int(t_pos.sum())
    n_neg = f.shape[0] - n_pos
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(t_pos, hi, lo)

    def objective(a, b):
        z = a * f + b
        # log(1 + e^-|z|) + max(z, 0) is log(1 + e^z); fold in targets
        return float(np.sum(np.where(z >= 0,
                                     t * z + np.log1p(np.exp(-z)),
                                     (t - 1.0) * z + np.log1p(np.exp(z)))))

    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    obj = objective(a, b)
    for _ in range(max_iter):
        z = a * f + b
        p = np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)),
                     1.0 / (1.0 + np.exp(z)))
        pq = p * (1.0 - p)
        h11 = float((f * f * pq).sum()) + ridge
        h22 = float(pq.sum()) + ridge
        h21 = float((f * pq).sum())
        g1 = float((f * (t - p)).sum())
        g2 = float((t - p).sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            return a, b
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= min_step:
            new_a, new_b = a + step * da, b + step * db
            new_obj = objective(new_a, new_b)
            if new_obj < obj + 1e-4 * step * gd:
                a, b, obj = new_a, new_b, new_obj
                break
            step *= 0.5
        else:
            return a, b  # line search exhausted: already at the optimum
    raise DidNotConvergeError("platt calibration", max_iter)


def calibrate_platt(model, X_holdout, y_holdout):
    """Return a copy of the model with sigmoid calibration fitted.

    The holdout set must contain both classes and must be disjoint from
    the SVM training set, otherwise the probabilities are biased.
    """
    y = np.asarray(y_holdout)
    if np.unique(y).size < 2:
        raise SingleClassError("calibration labels contain a single class")
    f = decision_values(model, X_holdout)
    a, b = _platt_newton(f, y)
    return replace(model, platt_a=a, platt_b=b, calibrated=True)


def score(model, X):
    """Class probabilities, one row per sample: [p_female, p_male]."""
    f = decision_values(model, X)
    z = model.platt_a * f + model.platt_b
    p_male = np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)),
                      1.0 / (1.0 + np.exp(z)))
    return np.column_stack([1.0 - p_male, p_male])


def predict_labels(scores):
    """Argmax over score columns; exact ties go to male (class 1)."""
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) score array, got {scores.shape}")
    return (scores[:, 1] >= scores[:, 0]).astype(np.int64)


@dataclass(frozen=True)
class AccuracyReport:
    male: float     # percent correct among male samples
    female: float   # percent correct among female samples
    overall: float  # percent correct over all samples


def region_accuracy(scores, labels):
    """Per-class and overall accuracy, in percent."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    if scores.shape[0] != labels.shape[0]:
        raise LengthMismatchError(
            f"{scores.shape[0]} score rows vs {labels.shape[0]} labels")
    if labels.shape[0] == 0:
        raise ValueError("empty evaluation set")
    pred = predict_labels(scores)
    correct = pred == labels

    def pct(mask):
        return 100.0 * correct[mask].mean() if mask.any() else float("nan")

    return AccuracyReport(male=pct(labels == 1), female=pct(labels == 0),
                          overall=100.0 * correct.mean())


# ---------------------------------------------------------------------------
# Persistence: magic + version header, length-prefixed fields, CRC trailer.
# ---------------------------------------------------------------------------

def _npy_bytes(arr):
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _npy_load(payload):
    return np.load(io.BytesIO(payload), allow_pickle=False)


def model_to_bytes(model):
    """Serialize a model; `bytes_to_model` inverts this byte-exactly."""
    sel = model.selected_indices
    fields = [
        ("region", struct.pack("<q", int(model.region))),
        ("grid", struct.pack("<q", int(model.grid))),
        ("uniform", struct.pack("<q", 1 if model.uniform else 0)),
        ("feature_dim", struct.pack("<q", int(model.feature_dim))),
        ("C", struct.pack("<d", float(model.C))),
        ("seed", struct.pack("<q", int(model.seed))),
        ("bias_scale", struct.pack("<d", float(model.bias_scale))),
        ("b", struct.pack("<d", float(model.b))),
        ("platt_a", struct.pack("<d", float(model.platt_a))),
        ("platt_b", struct.pack("<d", float(model.platt_b))),
        ("calibrated", struct.pack("<q", 1 if model.calibrated else 0)),
        ("w", _npy_bytes(np.asarray(model.w, dtype=np.float64))),
        ("has_selected", struct.pack("<q", 0 if sel is None else 1)),
        ("selected", _npy_bytes(np.asarray(
            [] if sel is None else sel, dtype=np.int64))),
    ]
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<H", MODEL_VERSION))
    buf.write(struct.pack("<I", len(fields)))
    for name, payload in fields:
        nb = name.encode("ascii")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def bytes_to_model(data, origin="<bytes>"):
    if len(data) < 14:
        raise UnsupportedFormatError(origin, "truncated model file")
    body, crc_stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatchError(origin)
    if body[:4] != MODEL_MAGIC:
        raise UnsupportedFormatError(origin, "bad magic")
    version = struct.unpack("<H", body[4:6])[0]
    if version != MODEL_VERSION:
        raise VersionMismatchError(origin, version, MODEL_VERSION)
    (count,) = struct.unpack("<I", body[6:10])
    pos = 10
    fields = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", body[pos:pos + 2])
        pos += 2
        name = body[pos:pos + name_len].decode("ascii")
        pos += name_len
        (payload_len,) = struct.unpack("<I", body[pos:pos + 4])
        pos += 4
        fields[name] = body[pos:pos + payload_len]
        pos += payload_len
    if pos != len(body):
        raise UnsupportedFormatError(origin, "trailing bytes in field table")

    def need(name):
        if name not in fields:
            raise UnsupportedFormatError(origin, f"missing field {name!r}")
        return fields[name]

    def i64(name):
        return struct.unpack("<q", need(name))[0]

    def f64(name):
        return struct.unpack("<d", need(name))[0]

    sel = _npy_load(need("selected"))
    return LinearModel(
        w=_npy_load(need("w")),
        b=f64("b"),
        C=f64("C"),
        seed=i64("seed"),
        bias_scale=f64("bias_scale"),
        platt_a=f64("platt_a"),
        platt_b=f64("platt_b"),
        calibrated=bool(i64("calibrated")),
        region=i64("region"),
        grid=i64("grid"),
        uniform=bool(i64("uniform")),
        feature_dim=i64("feature_dim"),
        selected_indices=sel if i64("has_selected") else None,
    )


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise MissingFileError(path) from None
    return bytes_to_model(data, origin=str(path))
