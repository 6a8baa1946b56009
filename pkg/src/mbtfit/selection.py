"""Choosing the number of phases.

Four criteria: AIC on the full-sample likelihood, K-fold
cross-validated held-out likelihood, a cross-validated estimate of the
mean squared integrated loss over the finite count-class partition, and
(when the truth is known) mean squared curve error under resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import GlobalRates, LifeVectorSample
from .demography import curves
from .errors import FitError, StructureError
from .estimation import FitConfig, fit_global, fit_individual, with_n
from .likelihood import LOG_ZERO, class_masses, classify_vector, enumerate_classes, \
    paper_class_count, per_vector_log_probabilities
from .model import TmapModel
from .simulation import aggregate_rates


@dataclass(frozen=True)
class SelectionReport:
    """Per-candidate criterion values and the selected phase count."""

    criterion: str
    n_values: tuple[int, ...]
    scores: tuple[float, ...]
    chosen_n: int
    per_fold: tuple[tuple[float, ...], ...] | None = None
    exclusions: int = 0
    failures: tuple[int, ...] = ()
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "n_values": list(self.n_values),
            "scores": list(self.scores),
            "per_fold": None if self.per_fold is None
            else [list(row) for row in self.per_fold],
            "chosen_n": self.chosen_n,
            "exclusions": self.exclusions,
            "failures": list(self.failures),
            "details": self.details,
        }


DEFAULT_N_RANGE = tuple(range(1, 16))


def _choose(n_values: Sequence[int], scores: Sequence[float],
            maximize: bool) -> int:
    best_n = None
    best_score = None
    for n, s in zip(n_values, scores):
        if not math.isfinite(s):
            continue
        better = best_score is None or (s > best_score if maximize else s < best_score)
        if better:
            best_n, best_score = n, s
    if best_n is None:
        raise FitError("no candidate phase count produced a usable score")
    return best_n


def fold_indices(N: int, k_folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled partition into k nearly equal folds."""
    if not 2 <= k_folds <= N:
        raise StructureError("need 2 <= k_folds <= N")
    perm = np.random.default_rng(seed).permutation(N)
    return [np.sort(part) for part in np.array_split(perm, k_folds)]


def _subsample(sample: LifeVectorSample, idx: Iterable[int]) -> LifeVectorSample:
    return LifeVectorSample(tuple(sample.vectors[i] for i in idx))


def aic(sample: LifeVectorSample, n_range: Sequence[int] = DEFAULT_N_RANGE,
        config: FitConfig = FitConfig()) -> SelectionReport:
    """2(3n-1) - 2 log-likelihood, minimized."""
    n_values = tuple(n_range)
    scores = []
    failures = []
    for n in n_values:
        try:
            result = fit_individual(sample, with_n(config, n))
            scores.append(2.0 * (3 * n - 1) + 2.0 * result.objective)
        except FitError:
            failures.append(n)
            scores.append(float("nan"))
    chosen = _choose(n_values, scores, maximize=False)
    return SelectionReport(criterion="aic", n_values=n_values,
                           scores=tuple(scores), chosen_n=chosen,
                           failures=tuple(failures))


def cross_validate(sample: LifeVectorSample,
                   n_range: Sequence[int] = DEFAULT_N_RANGE,
                   k_folds: int = 5,
                   config: FitConfig = FitConfig()) -> SelectionReport:
    """Mean held-out per-vector log-likelihood, maximized.

    A held-out vector with zero probability sinks its fold to the log-0
    sentinel rather than crashing, which effectively disqualifies that
    candidate.
    """
    folds = fold_indices(sample.N, k_folds, config.seed)
    all_idx = np.arange(sample.N)
    n_values = tuple(n_range)
    scores, per_fold, failures = [], [], []
    for n in n_values:
        fold_vals = []
        try:
            for test_idx in folds:
                train = _subsample(sample, np.setdiff1d(all_idx, test_idx))
                test = _subsample(sample, test_idx)
                result = fit_individual(train, with_n(config, n))
                logs = per_vector_log_probabilities(result.model, test)
                fold_vals.append(LOG_ZERO if np.any(logs == LOG_ZERO)
                                 else float(np.mean(logs)))
            scores.append(float(np.mean(fold_vals)))
            per_fold.append(tuple(fold_vals))
        except FitError:
            failures.append(n)
            scores.append(float("nan"))
            per_fold.append(tuple(fold_vals))
    chosen = _choose(n_values, scores, maximize=True)
    return SelectionReport(criterion="cv", n_values=n_values,
                           scores=tuple(scores), chosen_n=chosen,
                           per_fold=tuple(per_fold), failures=tuple(failures))


def msil_select(sample: LifeVectorSample,
                n_range: Sequence[int] = DEFAULT_N_RANGE,
                k_folds: int = 5, K: int = 1, M: int = 3,
                config: FitConfig = FitConfig()) -> SelectionReport:
    """Cross-validated mean squared integrated loss, minimized.

    Per fold: fit on the complement, score sum_class mass^2 minus twice
    the mean fitted mass of the held-out vectors' classes.  Vectors
    whose class is ambiguous (leading censoring, or still alive before
    reaching M classes) are excluded from the empirical term and
    counted.
    """
    classes = enumerate_classes(K, M)
    index = {c.entries: i for i, c in enumerate(classes)}
    folds = fold_indices(sample.N, k_folds, config.seed)
    all_idx = np.arange(sample.N)
    class_idx_per_vector: list[int] = []
    for v in sample:
        c = classify_vector(v, K, M)
        class_idx_per_vector.append(-1 if c is None else index[c.entries])
    n_values = tuple(n_range)
    scores, per_fold, failures = [], [], []
    exclusions = sum(1 for i in class_idx_per_vector if i < 0)
    mass_gap = 0.0
    for n in n_values:
        fold_vals = []
        try:
            for test_idx in folds:
                train = _subsample(sample, np.setdiff1d(all_idx, test_idx))
                result = fit_individual(train, with_n(config, n))
                masses = class_masses(result.model, classes, sample.class_length)
                mass_gap = max(mass_gap, abs(float(masses.sum()) - 1.0))
                hits = [class_idx_per_vector[i] for i in test_idx
                        if class_idx_per_vector[i] >= 0]
                empirical = float(np.mean(masses[hits])) if hits else 0.0
                fold_vals.append(float(masses @ masses) - 2.0 * empirical)
            scores.append(float(np.mean(fold_vals)))
            per_fold.append(tuple(fold_vals))
        except FitError:
            failures.append(n)
            scores.append(float("nan"))
            per_fold.append(tuple(fold_vals))
    chosen = _choose(n_values, scores, maximize=False)
    details = {"K": K, "M": M, "n_classes": len(classes),
               "published_class_count": paper_class_count(K, M),
               "max_mass_gap": mass_gap}
    return SelectionReport(criterion="msil", n_values=n_values,
                           scores=tuple(scores), chosen_n=chosen,
                           per_fold=tuple(per_fold), exclusions=exclusions,
                           failures=tuple(failures), details=details)


# ---------------------------------------------------------------------------
# partition parameter rules

def _class_level_stats(sample: LifeVectorSample):
    """Per-class survivor fractions, mean births, and birth standard errors."""
    rates = aggregate_rates(sample)
    l = sample.class_length
    n_classes = rates.n_classes
    surv = np.ones(n_classes)
    acc = 1.0
    per_class_d = np.empty(n_classes)
    per_class_b = np.empty(n_classes)
    for x in range(n_classes):
        surv[x] = acc
        m = rates.mortality[x]
        b = rates.fertility[x]
        if np.isfinite(m):
            per_class_d[x] = 1.0 - (1.0 - m) ** l
            acc *= 1.0 - per_class_d[x]
        else:
            per_class_d[x] = np.nan
        if np.isfinite(b):
            per_class_b[x] = (b * per_class_d[x] / m if np.isfinite(m) and m > 0
                              else b * l)
        else:
            per_class_b[x] = np.nan
    counts_at = [[] for _ in range(n_classes)]
    for v in sample:
        entries = v.entries[:-1] if v.died else v.entries
        for x, e in enumerate(entries):
            if e >= 0:
                counts_at[x].append(e)
    stderr = np.full(n_classes, np.nan)
    for x, vals in enumerate(counts_at):
        if len(vals) >= 2:
            stderr[x] = float(np.std(vals, ddof=1)) / math.sqrt(len(vals))
        elif len(vals) == 1:
            stderr[x] = 0.0
    return surv, per_class_b, stderr


def msil_partition_mk1(sample: LifeVectorSample) -> tuple[int, int]:
    """(K, M) from expected lifetime and peak per-class fertility.

    M is the ceiling of the expected number of whole classes survived
    plus one; K+1 is the ceiling of the largest mean birth count over
    classes 1..M.
    """
    surv, per_class_b, _ = _class_level_stats(sample)
    M = int(math.ceil(float(surv[1:].sum()))) + 1
    hi = min(M, len(per_class_b) - 1)
    pool = per_class_b[1:hi + 1]
    pool = pool[np.isfinite(pool)]
    peak = float(pool.max()) if pool.size else 0.0
    K = max(0, int(math.ceil(peak)) - 1)
    return K, M


def msil_partition_mk2(sample: LifeVectorSample,
                       covering_p: float = 0.05) -> tuple[int, int]:
    """(K, M) from a survival covering probability and fertility spread.

    M is one past the first class whose survivor fraction drops below
    covering_p; K+1 adds one standard error to the fertility peak.
    """
    if not 0 < covering_p < 1:
        raise StructureError("covering_p must lie in (0, 1)")
    surv, per_class_b, stderr = _class_level_stats(sample)
    below = np.flatnonzero(surv < covering_p)
    x_star = int(below[0]) if below.size else len(surv) - 1
    M = x_star + 1
    hi = min(M, len(per_class_b) - 1)
    padded = per_class_b[1:hi + 1] + np.where(np.isfinite(stderr[1:hi + 1]),
                                              stderr[1:hi + 1], 0.0)
    padded = padded[np.isfinite(padded)]
    peak = float(padded.max()) if padded.size else 0.0
    K = max(0, int(math.ceil(peak)) - 1)
    return K, M


# ---------------------------------------------------------------------------
# mean squared curve error under known truth

def mse_global(true_model: TmapModel, n_range: Sequence[int],
               dataset_generator: Callable[[np.random.Generator], GlobalRates],
               replicates: int,
               config: FitConfig = FitConfig()) -> SelectionReport:
    """Average over replicates of the true-weighted squared curve gap.

    Each replicate draws a dataset, fits every candidate n by weighted
    regression, and scores the fitted curves against the true ones using
    true survival as the age weights.
    """
    if replicates < 1:
        raise StructureError("need at least one replicate")
    if true_model is None or dataset_generator is None:
        raise StructureError("mse criterion needs a true model and a "
                             "dataset generator")
    n_values = tuple(n_range)
    rows = {n: [] for n in n_values}
    failed = {n: 0 for n in n_values}
    for r in range(replicates):
        rng = np.random.default_rng([config.seed, r])
        rates = dataset_generator(rng)
        true = curves(true_model, rates.n_classes, float(rates.class_length))
        for n in n_values:
            try:
                result = fit_global(rates, with_n(config, n))
                fit = curves(result.model, rates.n_classes,
                             float(rates.class_length))
                gap = ((true.mortality - fit.mortality) ** 2
                       + (true.fertility - fit.fertility) ** 2)
                rows[n].append(float(np.sum(gap * true.survival)))
            except FitError:
                failed[n] += 1
                rows[n].append(float("nan"))
    scores = []
    per_fold = []
    failures = []
    for n in n_values:
        vals = np.asarray(rows[n])
        ok = vals[np.isfinite(vals)]
        scores.append(float(ok.mean()) if ok.size else float("nan"))
        per_fold.append(tuple(vals))
        if not ok.size:
            failures.append(n)
    chosen = _choose(n_values, scores, maximize=False)
    return SelectionReport(criterion="mse", n_values=n_values,
                           scores=tuple(scores), chosen_n=chosen,
                           per_fold=tuple(per_fold), failures=tuple(failures),
                           details={"replicates": replicates})
