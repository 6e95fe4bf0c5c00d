"""End-to-end orchestration: extract, select, train, calibrate, fuse, report.

Per cross-validation fold the flow is:

1. Split the training fold once into an SVM part (80%) and a calibration
   part (20%), stratified; the same split serves every region so that
   per-region score lists stay row-aligned.
2. Per region: fit the feature selector on the full training fold, train
   the SVM on the SVM part, fit Platt calibration on the calibration part.
3. Collect calibrated scores of the SVM-part samples into the fitness set
   and run the genetic search for fusion weights on it.
4. Score the held-out test fold.

Any (sample, region) pair whose descriptor cannot be computed, and any
(region, fold) whose classifier cannot be trained, contributes the neutral
score pair (0.5, 0.5); both cases are counted in the report.  Every random
choice draws from a seed derived from the run seed and the stage name, so
a run is replayable from its seed manifest.
"""

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import (
    AccuracyReport,
    LinearModel,
    calibrate_platt,
    load_model,
    model_to_bytes,
    predict_labels,
    save_model,
    score,
    train_linear_svm,
)
from .corpus import (
    load_gray_image,
    stratified_fold_indices,
    stratified_holdout_mask,
    sub_seed,
)
from .errors import (
    BundleIncompleteError,
    DataError,
    MissingFileError,
    ParseError,
    PipelineError,
)
from .fusion import GaConfig, concat_baseline, fuse_scores, ga_optimize
from .regions import N_REGIONS, RegionId, crop, load_landmarks, region_box
from .selection import IfsSelector
from .texture import UNIFORM_BINS, FULL_BINS, colbp_descriptor, descriptor_length

NEUTRAL = (0.5, 0.5)
BUNDLE_FORMAT = "rfgm-bundle-v1"


@dataclass(frozen=True)
class RunConfig:
    grid: int = 3
    uniform: bool = True
    keep_fraction: float = 0.2
    alpha: float = 0.5
    r_factor: float = 0.9
    svm_c: float = 1.0
    folds: int = 5
    seed: int = 0
    mode: str = "fusion"           # fusion | concat | per-region
    calibration_fraction: float = 0.2
    global_weights: bool = False
    ga: GaConfig = field(default_factory=GaConfig)


def seed_manifest(cfg):
    """Every derived seed a run will use, keyed by stage name."""
    seeds = {"folds": sub_seed(cfg.seed, "folds")}
    for f in range(cfg.folds):
        seeds[f"calib/f{f}"] = sub_seed(cfg.seed, f"calib/f{f}")
        seeds[f"ga/f{f}"] = sub_seed(cfg.seed, f"ga/f{f}")
        for r in range(N_REGIONS):
            seeds[f"svm/r{r}/f{f}"] = sub_seed(cfg.seed, f"svm/r{r}/f{f}")
    seeds["ga/global"] = sub_seed(cfg.seed, "ga/global")
    return seeds


@dataclass
class ExtractedFeatures:
    features: list                # per region: (n_samples, D) float64
    valid: np.ndarray             # (n_regions, n_samples) bool
    labels: np.ndarray            # (n_samples,) int
    sample_ids: list
    grid: int
    uniform: bool
    failures: int                 # invalid (sample, region) pairs
    ms_per_image: float


def extract_features(records, grid, uniform=True):
    """Compute the per-region descriptor matrix for every sample.

    Broken image or landmark files abort the run; a region that cannot be
    cropped or is too small for the grid only invalidates its own
    (sample, region) slot.
    """
    n = len(records)
    if n == 0:
        raise DataError("manifest contains no samples")
    width = descriptor_length(grid, uniform)
    features = [np.zeros((n, width)) for _ in range(N_REGIONS)]
    valid = np.zeros((N_REGIONS, n), dtype=bool)
    labels = np.empty(n, dtype=np.int64)
    sample_ids = []
    t0 = time.perf_counter()
    for i, rec in enumerate(records):
        image = load_gray_image(rec.image_path)
        landmarks = load_landmarks(rec.landmark_path)
        labels[i] = rec.label
        sample_ids.append(rec.sample_id)
        for region in RegionId:
            try:
                box = region_box(landmarks, image, region)
                desc = colbp_descriptor(crop(image, box), grid, uniform)
            except DataError:
                continue
            features[region][i] = desc
            valid[region, i] = True
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    failures = int(valid.size - valid.sum())
    return ExtractedFeatures(features=features, valid=valid, labels=labels,
                             sample_ids=sample_ids, grid=grid, uniform=uniform,
                             failures=failures, ms_per_image=elapsed_ms / n)


@dataclass
class FoldFit:
    fold: int
    models: list                  # per region: LinearModel | None
    fit_scores: np.ndarray        # (n_regions, n_fit, 2) fitness-set scores
    fit_labels: np.ndarray        # (n_fit,)


def _region_scores(model, X_rows):
    return score(model, X_rows[:, model.selected_indices])


def _fit_fold(feats, labels, train_idx, cfg, fold, seeds):
    """Train selector + SVM + calibration per region on one training fold.

    Touches labels only at ``train_idx`` rows.  Regions that cannot be
    trained (single class after masking, degenerate features, solver
    failure) end up with a ``None`` model.
    """
    y_train = labels[train_idx]
    holdout = stratified_holdout_mask(y_train, cfg.calibration_fraction,
                                      seeds[f"calib/f{fold}"])
    svm_idx = train_idx[~holdout]
    cal_idx = train_idx[holdout]

    models = []
    fit_scores = np.full((N_REGIONS, svm_idx.shape[0], 2), 0.5)
    for region in RegionId:
        X = feats.features[region]
        ok = feats.valid[region]
        fit_rows = train_idx[ok[train_idx]]
        svm_rows = svm_idx[ok[svm_idx]]
        cal_rows = cal_idx[ok[cal_idx]]
        try:
            selector = IfsSelector(alpha=cfg.alpha, r_factor=cfg.r_factor,
                                   keep_fraction=cfg.keep_fraction)
            selector.fit(X[fit_rows])
            model = train_linear_svm(
                selector.transform(X[svm_rows]), labels[svm_rows],
                C=cfg.svm_c, seed=seeds[f"svm/r{region}/f{fold}"])
            model = calibrate_platt(model, selector.transform(X[cal_rows]),
                                    labels[cal_rows])
            model = replace(model, region=int(region), grid=cfg.grid,
                            uniform=cfg.uniform,
                            selected_indices=selector.selected_indices_,
                            feature_dim=X.shape[1])
        except PipelineError:
            models.append(None)
            continue
        models.append(model)
        present = ok[svm_idx]
        if present.any():
            fit_scores[region][present] = _region_scores(model, X[svm_rows])
    return FoldFit(fold=fold, models=models, fit_scores=fit_scores,
                   fit_labels=labels[svm_idx])


def _resolve_weights(fits, cfg, seeds):
    """GA weights per fold; one shared vector in global-weights mode."""
    if cfg.global_weights:
        stack = np.concatenate([f.fit_scores for f in fits], axis=1)
        y = np.concatenate([f.fit_labels for f in fits])
        result = ga_optimize(stack, y, replace(cfg.ga,
                                               seed=seeds["ga/global"]))
        return [result.weights.copy() for _ in fits], [result.error] * len(fits)
    weights, errors = [], []
    for fit in fits:
        result = ga_optimize(fit.fit_scores, fit.fit_labels,
                             replace(cfg.ga, seed=seeds[f"ga/f{fit.fold}"]))
        weights.append(result.weights)
        errors.append(result.error)
    return weights, errors


def _test_stack(feats, models, test_idx):
    """Score stack (n_regions, n_test, 2) with neutral fill-ins."""
    stack = np.full((N_REGIONS, test_idx.shape[0], 2), 0.5)
    for region in RegionId:
        model = models[region]
        if model is None:
            continue
        present = feats.valid[region][test_idx]
        if present.any():
            rows = test_idx[present]
            stack[region][present] = _region_scores(
                model, feats.features[region][rows])
    return stack


def _confusion(truth, pred):
    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (truth, pred), 1)
    return conf


def accuracy_from_confusion(conf):
    """Rows are true labels (female, male); columns are predictions."""
    conf = np.asarray(conf)
    female_n = conf[0].sum()
    male_n = conf[1].sum()
    total = conf.sum()
    return AccuracyReport(
        male=100.0 * conf[1, 1] / male_n if male_n else float("nan"),
        female=100.0 * conf[0, 0] / female_n if female_n else float("nan"),
        overall=100.0 * (conf[0, 0] + conf[1, 1]) / total,
    )


@dataclass
class TimingStats:
    extract_ms_per_image: float
    train_ms_per_fold: float
    score_ms_per_image: float
    total_ms: float


@dataclass
class EvaluationReport:
    config: RunConfig
    n_samples: int
    n_male: int
    n_female: int
    region_confusions: dict       # RegionId -> (2, 2) int, pooled over folds
    fused_confusion: np.ndarray   # (2, 2) or None outside fusion mode
    fused_per_fold: list          # overall pct per fold (fusion mode)
    ga_errors: list               # fitness-set error per fold (fusion mode)
    weights: list                 # per fold: (n_regions,) (fusion mode)
    concat: object                # ConcatResult in concat mode, else None
    extraction_failures: int
    dead_models: int
    timing: TimingStats
    seeds: dict

    def region_report(self, region):
        return accuracy_from_confusion(self.region_confusions[region])

    def fused_report(self):
        return (accuracy_from_confusion(self.fused_confusion)
                if self.fused_confusion is not None else None)


def run_train_eval(records, cfg, out_dir=None):
    """Cross-validated evaluation; optionally writes all artifacts.

    Returns an `EvaluationReport`.  When ``out_dir`` is given, writes
    report.txt / report.tsv / timing.tsv / seeds.txt plus, in fusion mode,
    per-fold weights, model files and a prediction bundle.
    """
    if cfg.mode not in ("fusion", "concat", "per-region"):
        raise ValueError(f"unknown mode {cfg.mode!r}")
    total_t0 = time.perf_counter()
    seeds = seed_manifest(cfg)
    feats = extract_features(records, cfg.grid, cfg.uniform)
    labels = feats.labels
    n = labels.shape[0]

    if cfg.mode == "concat":
        train_t0 = time.perf_counter()
        concat = concat_baseline(
            feats.features, labels, alpha=cfg.alpha, r_factor=cfg.r_factor,
            keep_fraction=cfg.keep_fraction, C=cfg.svm_c, folds=cfg.folds,
            seed=cfg.seed)
        train_ms = (time.perf_counter() - train_t0) * 1000.0
        timing = TimingStats(
            extract_ms_per_image=feats.ms_per_image,
            train_ms_per_fold=train_ms / cfg.folds,
            score_ms_per_image=0.0,
            total_ms=(time.perf_counter() - total_t0) * 1000.0)
        report = EvaluationReport(
            config=cfg, n_samples=n, n_male=int((labels == 1).sum()),
            n_female=int((labels == 0).sum()), region_confusions={},
            fused_confusion=None, fused_per_fold=[], ga_errors=[],
            weights=[], concat=concat,
            extraction_failures=feats.failures, dead_models=0,
            timing=timing, seeds=seeds)
        if out_dir is not None:
            _write_outputs(report, out_dir, fits=None)
        return report

    fold_of = stratified_fold_indices(labels, cfg.folds, seeds["folds"])
    train_t0 = time.perf_counter()
    fits = [_fit_fold(feats, labels, np.flatnonzero(fold_of != f),
                      cfg, f, seeds)
            for f in range(cfg.folds)]
    if cfg.mode == "fusion":
        weights, ga_errors = _resolve_weights(fits, cfg, seeds)
    else:
        weights, ga_errors = [], []
    train_ms = (time.perf_counter() - train_t0) * 1000.0

    region_confusions = {region: np.zeros((2, 2), dtype=np.int64)
                         for region in RegionId}
    fused_confusion = np.zeros((2, 2), dtype=np.int64) \
        if cfg.mode == "fusion" else None
    fused_per_fold = []
    score_t0 = time.perf_counter()
    for f in range(cfg.folds):
        test_idx = np.flatnonzero(fold_of == f)
        truth = labels[test_idx]
        stack = _test_stack(feats, fits[f].models, test_idx)
        for region in RegionId:
            pred = predict_labels(stack[region])
            region_confusions[region] += _confusion(truth, pred)
        if cfg.mode == "fusion":
            fused = fuse_scores(stack, weights[f])
            pred = predict_labels(fused)
            fused_confusion += _confusion(truth, pred)
            fused_per_fold.append(100.0 * float((pred == truth).mean()))
    score_ms = (time.perf_counter() - score_t0) * 1000.0

    timing = TimingStats(
        extract_ms_per_image=feats.ms_per_image,
        train_ms_per_fold=train_ms / cfg.folds,
        score_ms_per_image=score_ms / n,
        total_ms=(time.perf_counter() - total_t0) * 1000.0)
    report = EvaluationReport(
        config=cfg, n_samples=n, n_male=int((labels == 1).sum()),
        n_female=int((labels == 0).sum()),
        region_confusions=region_confusions,
        fused_confusion=fused_confusion, fused_per_fold=fused_per_fold,
        ga_errors=ga_errors, weights=weights, concat=None,
        extraction_failures=feats.failures,
        dead_models=sum(m is None for fit in fits for m in fit.models),
        timing=timing, seeds=seeds)
    if out_dir is not None:
        _write_outputs(report, out_dir, fits=fits)
    return report


# ---------------------------------------------------------------------------
# Leak check: refitting with flipped test labels must not move anything.
# ---------------------------------------------------------------------------

def leak_check(records, cfg):
    """Verify fold isolation by poisoning test labels and refitting.

    For each fold, all test-fold labels are flipped and the whole fold fit
    (selectors, SVMs, calibration, GA weights) is redone; every serialized
    artifact must come out byte-identical.  Returns a list of per-fold
    booleans (True = identical).
    """
    seeds = seed_manifest(cfg)
    feats = extract_features(records, cfg.grid, cfg.uniform)
    labels = feats.labels
    fold_of = stratified_fold_indices(labels, cfg.folds, seeds["folds"])

    def artifacts(lbls):
        fits = [_fit_fold(feats, lbls, np.flatnonzero(fold_of != f),
                          cfg, f, seeds)
                for f in range(cfg.folds)]
        weights, _ = _resolve_weights(fits, cfg, seeds)
        out = []
        for fit, w in zip(fits, weights):
            blob = b"".join(model_to_bytes(m) if m is not None else b"\0"
                            for m in fit.models)
            out.append((blob, w.tobytes()))
        return out

    clean = artifacts(labels)
    results = []
    for f in range(cfg.folds):
        poisoned = labels.copy()
        test_idx = np.flatnonzero(fold_of == f)
        poisoned[test_idx] = 1 - poisoned[test_idx]
        dirty = artifacts(poisoned)
        results.append(clean[f] == dirty[f])
    return results


def grid_sweep(records, cfg, out_dir=None):
    """Run the full evaluation at grid 2, 3 and 4; returns {n: report}."""
    reports = {}
    for grid in (2, 3, 4):
        sub_out = os.path.join(out_dir, f"grid{grid}") if out_dir else None
        reports[grid] = run_train_eval(records, replace(cfg, grid=grid),
                                       out_dir=sub_out)
    if out_dir is not None:
        lines = []
        for grid, report in reports.items():
            fused = report.fused_report()
            value = fused.overall if fused is not None else float("nan")
            lines.append(f"{grid}\t{value:.6f}\n")
        with open(os.path.join(out_dir, "grid_trend.tsv"), "w",
                  encoding="utf-8") as fh:
            fh.writelines(lines)
    return reports


# ---------------------------------------------------------------------------
# Report and artifact writers
# ---------------------------------------------------------------------------

def _check_report_consistency(report):
    # Percentages must be recomputable from the persisted confusions.
    for region, conf in report.region_confusions.items():
        derived = accuracy_from_confusion(conf)
        stated = report.region_report(region)
        if stated != derived:
            raise RuntimeError(f"inconsistent report for {region}")
    if report.fused_confusion is not None:
        conf = report.fused_confusion
        pooled = accuracy_from_confusion(conf)
        total_correct = conf[0, 0] + conf[1, 1]
        if abs(pooled.overall - 100.0 * total_correct / conf.sum()) > 1e-9:
            raise RuntimeError("inconsistent fused accuracy")


def write_report_tsv(report, path):
    _check_report_consistency(report)
    cfg = report.config
    bins = UNIFORM_BINS if cfg.uniform else FULL_BINS
    lines = [
        f"n_samples\tall\t{report.n_samples}",
        f"n_male\tall\t{report.n_male}",
        f"n_female\tall\t{report.n_female}",
        f"folds\tconfig\t{cfg.folds}",
        f"grid\tconfig\t{cfg.grid}",
        f"histogram_bins\tconfig\t{bins}",
        f"keep_fraction\tconfig\t{cfg.keep_fraction:.6f}",
        f"alpha\tconfig\t{cfg.alpha:.6f}",
        f"r_factor\tconfig\t{cfg.r_factor:.6f}",
        f"svm_c\tconfig\t{cfg.svm_c:.6f}",
        f"mode\tconfig\t{cfg.mode}",
        f"seed\tconfig\t{cfg.seed}",
    ]
    for region, conf in report.region_confusions.items():
        acc = report.region_report(region)
        scope = f"region/{region.label}"
        lines += [
            f"accuracy_male\t{scope}\t{acc.male:.6f}",
            f"accuracy_female\t{scope}\t{acc.female:.6f}",
            f"accuracy_overall\t{scope}\t{acc.overall:.6f}",
            f"confusion_ff\t{scope}\t{conf[0, 0]}",
            f"confusion_fm\t{scope}\t{conf[0, 1]}",
            f"confusion_mf\t{scope}\t{conf[1, 0]}",
            f"confusion_mm\t{scope}\t{conf[1, 1]}",
        ]
    if report.fused_confusion is not None:
        acc = report.fused_report()
        conf = report.fused_confusion
        lines += [
            f"accuracy_male\tfused\t{acc.male:.6f}",
            f"accuracy_female\tfused\t{acc.female:.6f}",
            f"accuracy_overall\tfused\t{acc.overall:.6f}",
            f"confusion_ff\tfused\t{conf[0, 0]}",
            f"confusion_fm\tfused\t{conf[0, 1]}",
            f"confusion_mf\tfused\t{conf[1, 0]}",
            f"confusion_mm\tfused\t{conf[1, 1]}",
        ]
        for f, pct in enumerate(report.fused_per_fold):
            lines.append(f"accuracy_overall\tfused/fold{f}\t{pct:.6f}")
        mean_folds = float(np.mean(report.fused_per_fold))
        lines.append(f"accuracy_mean_folds\tfused\t{mean_folds:.6f}")
        for f, err in enumerate(report.ga_errors):
            lines.append(f"ga_fitness_error\tfold{f}\t{err:.6f}")
        for f, w in enumerate(report.weights):
            for region in RegionId:
                lines.append(
                    f"weight\tfold{f}/{region.label}\t{w[region]:.6f}")
    if report.concat is not None:
        rep = report.concat.report
        lines += [
            f"accuracy_male\tconcat\t{rep.male:.6f}",
            f"accuracy_female\tconcat\t{rep.female:.6f}",
            f"accuracy_overall\tconcat\t{rep.overall:.6f}",
        ]
        for f, frac in enumerate(report.concat.per_fold):
            lines.append(f"accuracy_overall\tconcat/fold{f}\t{100.0 * frac:.6f}")
    lines += [
        f"extraction_failures\tall\t{report.extraction_failures}",
        f"dead_models\tall\t{report.dead_models}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report_txt(report, path):
    _check_report_consistency(report)
    cfg = report.config
    bins = UNIFORM_BINS if cfg.uniform else FULL_BINS
    width = descriptor_length(cfg.grid, cfg.uniform)
    kept = max(1, int(np.floor(cfg.keep_fraction * width + 0.5)))
    out = []
    out.append("region fusion evaluation")
    out.append("=" * 40)
    out.append("")
    out.append(f"samples          {report.n_samples} "
               f"({report.n_male} male / {report.n_female} female)")
    out.append(f"folds            {cfg.folds}")
    out.append(f"grid             {cfg.grid}x{cfg.grid}"
               f"  ({bins}-bin histograms, {width} features per region)")
    out.append(f"keep fraction    {cfg.keep_fraction:.2f}  "
               f"-> {kept} features per region")
    out.append(f"alpha / r-factor {cfg.alpha:.2f} / {cfg.r_factor:.2f}")
    out.append(f"svm C            {cfg.svm_c:.2f}")
    out.append(f"mode             {cfg.mode}")
    out.append(f"seed             {cfg.seed}")
    out.append("")
    if report.region_confusions:
        out.append("per-region accuracy, pooled over folds (%)")
        out.append(f"{'region':<14}{'male':>8}{'female':>8}{'overall':>9}")
        for region in RegionId:
            acc = report.region_report(region)
            out.append(f"{region.label:<14}{acc.male:>8.2f}"
                       f"{acc.female:>8.2f}{acc.overall:>9.2f}")
        out.append("")
    if report.fused_confusion is not None:
        acc = report.fused_report()
        out.append("fused (ga-weighted scores, %)")
        for f, pct in enumerate(report.fused_per_fold):
            out.append(f"  fold {f}: {pct:.2f}")
        out.append(f"  mean over folds: "
                   f"{float(np.mean(report.fused_per_fold)):.2f}")
        out.append(f"  pooled: male {acc.male:.2f}  female {acc.female:.2f}  "
                   f"overall {acc.overall:.2f}")
        conf = report.fused_confusion
        out.append("  confusion (rows true female/male, cols predicted):")
        out.append(f"    {conf[0, 0]:>6} {conf[0, 1]:>6}")
        out.append(f"    {conf[1, 0]:>6} {conf[1, 1]:>6}")
        out.append("")
    if report.concat is not None:
        rep = report.concat.report
        out.append("concatenated-features baseline (%)")
        out.append(f"  male {rep.male:.2f}  female {rep.female:.2f}  "
                   f"overall {rep.overall:.2f}")
        out.append("")
    out.append(f"extraction failures: {report.extraction_failures}")
    out.append(f"untrainable region/fold models: {report.dead_models}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def write_timing_tsv(timing, path):
    lines = [
        f"feature_extraction\tms_per_image\t{timing.extract_ms_per_image:.3f}",
        f"training\tms_per_fold\t{timing.train_ms_per_fold:.3f}",
        f"scoring\tms_per_image\t{timing.score_ms_per_image:.3f}",
        f"total\tms\t{timing.total_ms:.3f}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_seeds_txt(seeds, path):
    with open(path, "w", encoding="utf-8") as fh:
        for name in sorted(seeds):
            fh.write(f"{name}\t{seeds[name]}\n")


def _write_outputs(report, out_dir, fits):
    os.makedirs(out_dir, exist_ok=True)
    write_report_tsv(report, os.path.join(out_dir, "report.tsv"))
    write_report_txt(report, os.path.join(out_dir, "report.txt"))
    write_timing_tsv(report.timing, os.path.join(out_dir, "timing.tsv"))
    write_seeds_txt(report.seeds, os.path.join(out_dir, "seeds.txt"))
    cfg = report.config
    if fits is None or cfg.mode == "concat":
        return
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    bundle_lines = [
        f"format\t{BUNDLE_FORMAT}",
        f"grid\t{cfg.grid}",
        f"uniform\t{1 if cfg.uniform else 0}",
        f"folds\t{cfg.folds}",
        f"regions\t{N_REGIONS}",
    ]
    for fit in fits:
        for region in RegionId:
            model = fit.models[region]
            rel = f"models/r{int(region)}_f{fit.fold}.rfgm"
            if model is None:
                bundle_lines.append(f"model\t{int(region)}\t{fit.fold}\t-")
            else:
                save_model(model, os.path.join(out_dir, rel))
                bundle_lines.append(f"model\t{int(region)}\t{fit.fold}\t{rel}")
    if cfg.mode == "fusion":
        for f, w in enumerate(report.weights):
            rel = f"weights_fold{f}.tsv"
            with open(os.path.join(out_dir, rel), "w", encoding="utf-8") as fh:
                for region in RegionId:
                    fh.write(f"{int(region)}\t{w[region]:.6f}\n")
            bundle_lines.append(f"weights\t{f}\t{rel}")
        with open(os.path.join(out_dir, "bundle.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write("\n".join(bundle_lines) + "\n")


# ---------------------------------------------------------------------------
# Prediction from a saved bundle
# ---------------------------------------------------------------------------

@dataclass
class Bundle:
    grid: int
    uniform: bool
    folds: int
    models: list    # [fold][region] -> LinearModel | None
    weights: list   # [fold] -> (n_regions,) float


def load_bundle(bundle_dir):
    """Read bundle.txt and everything it references."""
    path = os.path.join(bundle_dir, "bundle.txt")
    if not os.path.isfile(path):
        raise BundleIncompleteError(f"no bundle.txt under {bundle_dir}")
    header = {}
    model_paths = {}
    weight_paths = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if parts[0] == "model" and len(parts) == 4:
                model_paths[(int(parts[1]), int(parts[2]))] = parts[3]
            elif parts[0] == "weights" and len(parts) == 3:
                weight_paths[int(parts[1])] = parts[2]
            elif len(parts) == 2:
                header[parts[0]] = parts[1]
            else:
                raise ParseError(path, lineno, f"unrecognized line {line!r}")
    if header.get("format") != BUNDLE_FORMAT:
        raise BundleIncompleteError(
            f"unknown bundle format {header.get('format')!r}")
    try:
        grid = int(header["grid"])
        uniform = bool(int(header["uniform"]))
        folds = int(header["folds"])
        regions = int(header["regions"])
    except (KeyError, ValueError) as exc:
        raise BundleIncompleteError(f"bad bundle header: {exc}") from exc
    if regions != N_REGIONS:
        raise BundleIncompleteError(
            f"bundle has {regions} regions, this build uses {N_REGIONS}")
    if set(weight_paths) != set(range(folds)):
        raise BundleIncompleteError("missing per-fold weight files")

    models = [[None] * N_REGIONS for _ in range(folds)]
    for (region, fold), rel in model_paths.items():
        if rel == "-":
            continue
        full = os.path.join(bundle_dir, rel)
        if not os.path.isfile(full):
            raise BundleIncompleteError(f"referenced model missing: {rel}")
        model = load_model(full)
        if model.grid != grid or model.uniform != uniform:
            raise BundleIncompleteError(
                f"model {rel} disagrees with bundle grid/uniform header")
        models[fold][region] = model
    weights = []
    for f in range(folds):
        full = os.path.join(bundle_dir, weight_paths[f])
        if not os.path.isfile(full):
            raise BundleIncompleteError(
                f"referenced weights missing: {weight_paths[f]}")
        w = np.zeros(N_REGIONS)
        with open(full, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError(full, lineno, "expected region_id<TAB>weight")
                w[int(parts[0])] = float(parts[1])
        if not np.any(w > 0.0):
            raise BundleIncompleteError(f"fold {f} weights are all zero")
        weights.append(w)
    return Bundle(grid=grid, uniform=uniform, folds=folds,
                  models=models, weights=weights)


@dataclass(frozen=True)
class Prediction:
    label: int
    p_male: float
    p_female: float


def predict_sample(bundle, image_path, landmark_path):
    """Classify one image; averages normalized fused scores over folds."""
    image = load_gray_image(image_path)
    landmarks = load_landmarks(landmark_path)
    descriptors = [None] * N_REGIONS
    for region in RegionId:
        try:
            box = region_box(landmarks, image, region)
            descriptors[region] = colbp_descriptor(
                crop(image, box), bundle.grid, bundle.uniform)
        except DataError:
            continue
    fold_probs = np.empty((bundle.folds, 2))
    for f in range(bundle.folds):
        stack = np.full((N_REGIONS, 1, 2), 0.5)
        for region in RegionId:
            model = bundle.models[f][region]
            desc = descriptors[region]
            if model is None or desc is None:
                continue
            if desc.shape[0] != model.feature_dim:
                raise BundleIncompleteError(
                    f"model for region {int(region)} expects "
                    f"{model.feature_dim} features, descriptor has "
                    f"{desc.shape[0]}")
            stack[region, 0] = _region_scores(model, desc[None, :])[0]
        fused = fuse_scores(stack, bundle.weights[f])[0]
        fold_probs[f] = fused / fused.sum()
    mean = fold_probs.mean(axis=0)
    label = int(mean[1] >= mean[0])
    return Prediction(label=label, p_male=float(mean[1]),
                      p_female=float(mean[0]))
