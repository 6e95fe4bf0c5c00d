"""Command-line interface.

Four commands: ``synth`` writes a labeled synthetic corpus, ``train-eval``
runs the cross-validated pipeline and writes reports plus a prediction
bundle, ``predict`` classifies a single image with a saved bundle, and
``timing`` reports per-stage wall-clock costs.

Options can also come from a TOML file via ``--config``; explicit flags
win over the file, the file wins over built-in defaults.  Exit codes:
0 success, 2 usage error, 3 bad data, 4 numerical failure.
"""

import argparse
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import pipeline
from .corpus import generate_synthetic_corpus, load_manifest, resolve_records
from .errors import DataError, NumericError
from .fusion import GaConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_RUN_DEFAULTS = {
    "grid": 3,
    "keep_fraction": 0.2,
    "alpha": 0.5,
    "r_factor": 0.9,
    "svm_c": 1.0,
    "ga_pop": 50,
    "ga_gens": 100,
    "ga_crossover": 0.80,
    "ga_mutation": 0.01,
    "ga_elitism": 2,
    "folds": 5,
    "seed": 0,
    "mode": "fusion",
    "full_lbp_histogram": False,
    "global_weights": False,
    "leak_check": False,
    "grid_sweep": False,
}


def _add_run_options(sub):
    sub.add_argument("--manifest", required=True, help="corpus manifest (TSV)")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--config", help="TOML file with option defaults")
    sub.add_argument("--grid", type=int, choices=(2, 3, 4), default=None,
                     help="cells per region side (default 3)")
    sub.add_argument("--keep-fraction", type=float, default=None,
                     help="fraction of features kept per region (default 0.2)")
    sub.add_argument("--alpha", type=float, default=None,
                     help="relevance/redundancy blend in [0,1] (default 0.5)")
    sub.add_argument("--r-factor", type=float, default=None,
                     help="path-sum discount as a fraction of the spectral "
                          "radius (default 0.9)")
    sub.add_argument("--svm-c", type=float, default=None,
                     help="SVM penalty C (default 1.0)")
    sub.add_argument("--ga-pop", type=int, default=None,
                     help="GA population size (default 50)")
    sub.add_argument("--ga-gens", type=int, default=None,
                     help="GA generations (default 100)")
    sub.add_argument("--ga-crossover", type=float, default=None,
                     help="single-point crossover probability (default 0.80)")
    sub.add_argument("--ga-mutation", type=float, default=None,
                     help="per-gene mutation probability (default 0.01)")
    sub.add_argument("--ga-elitism", type=int, default=None,
                     help="chromosomes copied unchanged (default 2)")
    sub.add_argument("--folds", type=int, default=None,
                     help="cross-validation folds (default 5)")
    sub.add_argument("--seed", type=int, default=None,
                     help="run seed; every stage derives from it (default 0)")
    sub.add_argument("--mode", choices=("fusion", "concat", "per-region"),
                     default=None, help="score fusion, feature concatenation "
                     "baseline, or per-region only (default fusion)")
    sub.add_argument("--full-lbp-histogram", action="store_true", default=None,
                     help="use all 256 LBP codes instead of 59 uniform bins")
    sub.add_argument("--global-weights", action="store_true", default=None,
                     help="learn one fusion weight vector from all training "
                          "folds instead of one per fold")


def _merge_options(args):
    merged = dict(_RUN_DEFAULTS)
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                loaded = tomllib.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file not found: {args.config}") from None
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{args.config}: {exc}") from None
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in merged:
                raise DataError(f"{args.config}: unknown option {key!r}")
            merged[key] = value
    for key in merged:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _run_config(opts):
    ga = GaConfig(population_size=int(opts["ga_pop"]),
                  generations=int(opts["ga_gens"]),
                  crossover_prob=float(opts["ga_crossover"]),
                  mutation_prob=float(opts["ga_mutation"]),
                  elitism_count=int(opts["ga_elitism"]))
    return pipeline.RunConfig(
        grid=int(opts["grid"]),
        uniform=not opts["full_lbp_histogram"],
        keep_fraction=float(opts["keep_fraction"]),
        alpha=float(opts["alpha"]),
        r_factor=float(opts["r_factor"]),
        svm_c=float(opts["svm_c"]),
        folds=int(opts["folds"]),
        seed=int(opts["seed"]),
        mode=str(opts["mode"]),
        global_weights=bool(opts["global_weights"]),
        ga=ga,
    )


def _load_records(manifest_path):
    records = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    return resolve_records(records, base)


def _cmd_synth(args):
    manifest = generate_synthetic_corpus(
        args.out, n_per_class=args.n_per_class,
        image_size=args.image_size, seed=args.seed)
    print(f"wrote {2 * args.n_per_class} samples, manifest at {manifest}")
    return EXIT_OK


def _cmd_train_eval(args):
    opts = _merge_options(args)
    cfg = _run_config(opts)
    records = _load_records(args.manifest)
    if opts["grid_sweep"]:
        reports = pipeline.grid_sweep(records, cfg, out_dir=args.out)
        for grid, report in reports.items():
            fused = report.fused_report()
            if fused is not None:
                print(f"grid {grid}: fused overall {fused.overall:.2f}%")
        print(f"outputs under {args.out}")
        return EXIT_OK
    report = pipeline.run_train_eval(records, cfg, out_dir=args.out)
    if opts["leak_check"]:
        outcomes = pipeline.leak_check(records, cfg)
        with open(os.path.join(args.out, "leak_check.tsv"), "w",
                  encoding="utf-8") as fh:
            for f, identical in enumerate(outcomes):
                fh.write(f"fold{f}\tidentical\t{1 if identical else 0}\n")
        for f, identical in enumerate(outcomes):
            status = "identical" if identical else "DIFFERS"
            print(f"leak check fold {f}: {status}")
        if not all(outcomes):
            raise DataError("leak check failed: test labels reached training")
    fused = report.fused_report()
    if fused is not None:
        print(f"fused overall accuracy: {fused.overall:.2f}%")
    elif report.concat is not None:
        print(f"concat overall accuracy: {report.concat.report.overall:.2f}%")
    else:
        best = max(report.region_report(r).overall
                   for r in report.region_confusions)
        print(f"best single-region accuracy: {best:.2f}%")
    print(f"outputs under {args.out}")
    return EXIT_OK


def _cmd_predict(args):
    bundle = pipeline.load_bundle(args.bundle)
    result = pipeline.predict_sample(bundle, args.image, args.landmarks)
    name = "male" if result.label == 1 else "female"
    print(f"class={name} p_male={result.p_male:.6f} "
          f"p_female={result.p_female:.6f}")
    return EXIT_OK


def _cmd_timing(args):
    opts = _merge_options(args)
    cfg = _run_config(opts)
    records = _load_records(args.manifest)
    report = pipeline.run_train_eval(records, cfg, out_dir=args.out)
    t = report.timing
    print(f"feature_extraction\tms_per_image\t{t.extract_ms_per_image:.3f}")
    print(f"training\tms_per_fold\t{t.train_ms_per_fold:.3f}")
    print(f"scoring\tms_per_image\t{t.score_ms_per_image:.3f}")
    print(f"total\tms\t{t.total_ms:.3f}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="regionfuse",
        description="Region-based facial texture classification with "
                    "score-level fusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a synthetic labeled corpus")
    synth.add_argument("--out", required=True, help="corpus directory")
    synth.add_argument("--n-per-class", type=int, default=60,
                       help="samples per class (default 60)")
    synth.add_argument("--image-size", type=int, default=96,
                       help="square image side, >= 48 (default 96)")
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=_cmd_synth)

    train = sub.add_parser("train-eval",
                           help="cross-validated training and evaluation")
    _add_run_options(train)
    train.add_argument("--leak-check", action="store_true", default=None,
                       help="refit with poisoned test labels and verify "
                            "artifacts are unchanged")
    train.add_argument("--grid-sweep", action="store_true", default=None,
                       help="run grids 2, 3 and 4 and write a trend file")
    train.set_defaults(func=_cmd_train_eval)

    predict = sub.add_parser("predict", help="classify one image")
    predict.add_argument("--bundle", required=True,
                         help="train-eval output directory")
    predict.add_argument("--image", required=True)
    predict.add_argument("--landmarks", required=True)
    predict.set_defaults(func=_cmd_predict)

    timing = sub.add_parser("timing", help="per-stage wall-clock summary")
    _add_run_options(timing)
    timing.set_defaults(func=_cmd_timing)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
