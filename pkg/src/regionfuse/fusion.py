"""Score-level fusion of per-region classifiers.

The fused score of a sample is a weighted sum over regions,
``fused = sum_i a_i * scores_i`` with one weight per region in [0, 1];
classification is the argmax over the two fused columns (ties go to male).
Weights are found by a small real-coded genetic algorithm minimizing the
misclassification fraction on a held-in fitness set: roulette-wheel parent
selection, single-point crossover, per-gene uniform reset mutation, and
elitism.  The best-ever chromosome is tracked outside the population, so
the reported error never increases across generations.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import stratified_fold_indices, sub_seed
from .classify import AccuracyReport, predict_labels, train_linear_svm
from .errors import (
    AllZeroWeightsError,
    DegenerateFitnessSetError,
    LengthMismatchError,
    RowMismatchError,
)
from .selection import IfsSelector


def _as_score_stack(scores):
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise LengthMismatchError(
            f"expected (regions, samples, 2) scores, got {arr.shape}")
    return arr


def _check_weights(weights, n_regions):
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != n_regions:
        raise LengthMismatchError(
            f"{w.shape[0] if w.ndim == 1 else w.shape} weights for "
            f"{n_regions} regions")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("fusion weights must lie in [0, 1]")
    if not np.any(w > 0.0):
        raise AllZeroWeightsError()
    return w


def fuse_scores(scores, weights):
    """Weighted sum of per-region score pairs; returns (n, 2)."""
    stack = _as_score_stack(scores)
    w = _check_weights(weights, stack.shape[0])
    return np.tensordot(w, stack, axes=1)


def fuse(scores, weights):
    """Fused predictions (0 = female, 1 = male) for a score stack."""
    return predict_labels(fuse_scores(scores, weights))


def fitness(weights, scores, labels):
    """Misclassification fraction of fused predictions; lower is better."""
    stack = _as_score_stack(scores)
    labels = np.asarray(labels)
    if labels.shape[0] != stack.shape[1]:
        raise LengthMismatchError(
            f"{stack.shape[1]} score rows vs {labels.shape[0]} labels")
    pred = fuse(stack, weights)
    return float((pred != labels).mean())


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 100
    crossover_prob: float = 0.80
    mutation_prob: float = 0.01
    elitism_count: int = 2
    seed: int = 0


@dataclass
class GaResult:
    weights: np.ndarray   # best-ever chromosome
    error: float          # its misclassification fraction
    history: np.ndarray   # best-ever error after each generation's evaluation


def _batch_errors(population, stack, is_male):
    # All-zero rows fuse to (0, 0); the >= tie rule then predicts male,
    # the same outcome `fuse` gives any male-favoring tie.
    fused = np.einsum("pr,rnc->pnc", population, stack)
    pred_male = fused[:, :, 1] >= fused[:, :, 0]
    return (pred_male != is_male[None, :]).mean(axis=1)


def ga_optimize(scores, labels, config=GaConfig()):
    """Search fusion weights minimizing held-in misclassification.

    Deterministic in (scores, labels, config).  The fitness set must
    contain both classes; chromosomes stay inside [0, 1]^R throughout.
    """
    stack = _as_score_stack(scores)
    labels = np.asarray(labels)
    n_regions, n_samples = stack.shape[0], stack.shape[1]
    if labels.shape[0] != n_samples:
        raise LengthMismatchError(
            f"{n_samples} score rows vs {labels.shape[0]} labels")
    if n_samples == 0:
        raise DegenerateFitnessSetError("no samples")
    if np.unique(labels).size < 2:
        raise DegenerateFitnessSetError("single-class fitness set")
    pop_size = config.population_size
    elite = config.elitism_count
    if pop_size < 2 or elite < 0 or elite >= pop_size:
        raise ValueError("population must exceed elitism_count and hold >= 2")
    if not (0.0 <= config.crossover_prob <= 1.0
            and 0.0 <= config.mutation_prob <= 1.0):
        raise ValueError("crossover/mutation probabilities must lie in [0, 1]")

    rng = np.random.default_rng(config.seed)
    is_male = labels == 1
    population = rng.random((pop_size, n_regions))
    best_weights = None
    best_error = np.inf
    history = []
    for generation in range(config.generations + 1):
        errors = _batch_errors(population, stack, is_male)
        order = np.lexsort((np.arange(pop_size), errors))
        if errors[order[0]] < best_error:
            best_error = float(errors[order[0]])
            best_weights = population[order[0]].copy()
        history.append(best_error)
        if generation == config.generations:
            break

        elites = population[order[:elite]].copy()
        fit = 1.0 - errors
        if np.ptp(fit) == 0.0:
            probs = np.full(pop_size, 1.0 / pop_size)
        else:
            probs = np.maximum(fit, 1e-6)
            probs = probs / probs.sum()

        n_children = pop_size - elite
        children = np.empty((n_children, n_regions))
        filled = 0
        while filled < n_children:
            i, j = rng.choice(pop_size, size=2, replace=True, p=probs)
            if n_regions >= 2 and rng.random() < config.crossover_prob:
                cut = int(rng.integers(1, n_regions))
                first = np.concatenate([population[i][:cut], population[j][cut:]])
                second = np.concatenate([population[j][:cut], population[i][cut:]])
            else:
                first = population[i].copy()
                second = population[j].copy()
            children[filled] = first
            filled += 1
            if filled < n_children:
                children[filled] = second
                filled += 1

        mutate = rng.random(children.shape) < config.mutation_prob
        children[mutate] = rng.random(int(mutate.sum()))
        np.clip(children, 0.0, 1.0, out=children)
        population = np.vstack([elites, children])

    return GaResult(weights=best_weights, error=best_error,
                    history=np.asarray(history))


@dataclass
class ConcatResult:
    accuracy: float          # overall correct fraction in [0, 1]
    report: AccuracyReport   # the same numbers in percent, per class
    per_fold: np.ndarray     # correct fraction per fold


def concat_baseline(region_features, labels, alpha=0.5, r_factor=0.9,
                    keep_fraction=0.2, C=1.0, folds=5, seed=0):
    """Feature-level fusion baseline: concatenate, select, one SVM.

    All region feature matrices are stacked column-wise and pushed through
    the same selector and SVM in a k-fold loop.  No probability
    calibration is involved; predictions come straight from the decision
    sign.  With a single region this is exactly that region's standalone
    pipeline.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in region_features]
    if not mats:
        raise RowMismatchError("no region feature matrices given")
    rows = {m.shape[0] for m in mats}
    if len(rows) != 1:
        raise RowMismatchError(f"region row counts differ: {sorted(rows)}")
    labels = np.asarray(labels)
    X = np.hstack(mats)
    if labels.shape[0] != X.shape[0]:
        raise LengthMismatchError(
            f"{X.shape[0]} samples vs {labels.shape[0]} labels")

    fold_of = stratified_fold_indices(labels, folds, sub_seed(seed, "folds"))
    pred = np.empty(labels.shape[0], dtype=np.int64)
    per_fold = np.empty(folds)
    for f in range(folds):
        test = fold_of == f
        train = ~test
        selector = IfsSelector(alpha=alpha, r_factor=r_factor,
                               keep_fraction=keep_fraction).fit(X[train])
        model = train_linear_svm(selector.transform(X[train]), labels[train],
                                 C=C, seed=sub_seed(seed, f"svm/f{f}"))
        fold_scores = (selector.transform(X[test]) @ model.w) + model.b
        pred[test] = (fold_scores >= 0.0).astype(np.int64)
        per_fold[f] = float((pred[test] == labels[test]).mean())

    correct = pred == labels
    report = AccuracyReport(
        male=100.0 * correct[labels == 1].mean(),
        female=100.0 * correct[labels == 0].mean(),
        overall=100.0 * correct.mean(),
    )
    return ConcatResult(accuracy=float(correct.mean()), report=report,
                        per_fold=per_fold)
