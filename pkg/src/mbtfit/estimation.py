"""Parameter fitting from global rates or individual life vectors.

Both routes minimize over log-transformed parameters with a multi-start
Nelder-Mead protocol: the first start is the deterministic seeding
recipe, the remaining starts jitter it with multiplicative log-normal
noise, and each start restarts the simplex at its own best point until
an entire restart gains less than the objective tolerance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .data import GlobalRates, LifeVectorSample
from .demography import curves, rates_model_equivalents
from .errors import CapacityError, FitError, NumericError, StructureError
from .likelihood import LOG_ZERO, PreparedSample, log_likelihood, \
    prepare_sample
from .model import AtmmppParams, TmapModel, build_atmmpp
from .simulation import aggregate_rates

# Objective value handed to the simplex when a trial point is infeasible
# (overflowing rates, non-finite curves); large but orderable.
INFEASIBLE = 1e300
SEED_FLOOR = 1e-6
LOG_RATE_CAP = 60.0


@dataclass(frozen=True)
class FitConfig:
    """Multi-start optimizer settings.

    ``max_iter`` is the objective-evaluation budget per start; a start
    counts as converged only when its restart loop stalls within the
    budget, not when the budget runs out.
    """

    n: int = 1
    seeds: int = 25
    noise: float = 0.25
    objective_tol: float = 1e-10
    step_tol: float = 1e-8
    max_iter: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise StructureError("n must be at least 1")
        if self.seeds < 1:
            raise StructureError("need at least one seed")
        if self.objective_tol <= 0 or self.step_tol <= 0:
            raise StructureError("tolerances must be positive")
        if self.max_iter < 1:
            raise StructureError("max_iter must be at least 1")
        if self.noise < 0:
            raise StructureError("noise must be nonnegative")


@dataclass(frozen=True)
class SeedTrace:
    seed_index: int
    converged: bool
    value: float
    start_value: float
    n_evaluations: int


@dataclass(frozen=True)
class FitResult:
    """Winning parameters plus the per-start optimization record."""

    params: AtmmppParams
    objective: float
    traces: tuple[SeedTrace, ...]
    winner: int
    diagnostics: tuple[str, ...] = ()

    @property
    def model(self) -> TmapModel:
        return build_atmmpp(self.params)


def survival_weights(rates: GlobalRates) -> np.ndarray:
    """Observed probability of surviving to the start of each class.

    Chains the per-class survival implied by each mortality value;
    classes with missing mortality pass their cohort through unchanged
    so later weights stay defined.
    """
    out = np.ones(rates.n_classes)
    acc = 1.0
    for x in range(rates.n_classes):
        out[x] = acc
        m = rates.mortality[x]
        if np.isfinite(m):
            if m > 1:
                raise StructureError(f"mortality {m} above 1 at class {x}")
            target_d, _ = rates_model_equivalents(0.0, float(m),
                                                  _as_whole(rates.class_length))
            acc *= 1.0 - target_d
    return out


def _as_whole(l: float) -> int:
    if int(l) != l:
        raise StructureError("global-rates fitting needs a whole-number class length")
    return int(l)


def _class_targets(rates: GlobalRates) -> tuple[np.ndarray, np.ndarray]:
    """Per-class (target_d, target_b) with NaN where data is missing."""
    l = _as_whole(rates.class_length)
    target_d = np.full(rates.n_classes, np.nan)
    target_b = np.full(rates.n_classes, np.nan)
    for x in range(rates.n_classes):
        m = rates.mortality[x]
        b = rates.fertility[x]
        m_known = np.isfinite(m)
        if m_known:
            target_d[x] = rates_model_equivalents(0.0, float(m), l)[0]
        if np.isfinite(b):
            # a missing death rate converts the birth rate at the
            # zero-mortality limit
            mu = float(m) if m_known else 0.0
            target_b[x] = rates_model_equivalents(float(b), mu, l)[1]
    return target_d, target_b


def objective_global(params: AtmmppParams, rates: GlobalRates,
                     weights: np.ndarray | None = None) -> float:
    """Weighted squared distance between data targets and model curves."""
    target_d, target_b = _class_targets(rates)
    if weights is None:
        weights = survival_weights(rates)
    return _objective_from_targets(params, target_d, target_b,
                                   np.asarray(weights, dtype=float),
                                   rates.n_classes, float(rates.class_length))


def _objective_from_targets(params: AtmmppParams, target_d: np.ndarray,
                            target_b: np.ndarray, weights: np.ndarray,
                            n_classes: int, l: float) -> float:
    if weights.shape != (n_classes,):
        raise StructureError(f"weights must have length {n_classes}")
    model = build_atmmpp(params)
    cur = curves(model, n_classes, l)
    total = 0.0
    for x in range(n_classes):
        term = 0.0
        if np.isfinite(target_d[x]):
            term += (target_d[x] - cur.mortality[x]) ** 2
        if np.isfinite(target_b[x]):
            term += (target_b[x] - cur.fertility[x]) ** 2
        w = weights[x]
        if np.isfinite(w):
            total += term * w
    return total


def seed_params(n: int, data: GlobalRates | LifeVectorSample) -> AtmmppParams:
    """Deterministic starting parameters from the data's gross features.

    With M the largest observed age index, phase-advance rates traverse
    the chain in one expected lifespan, and each phase receives the
    average per-class birth and death rate.
    """
    rates = aggregate_rates(data) if isinstance(data, LifeVectorSample) else data
    present_b = rates.fertility[np.isfinite(rates.fertility)]
    present_d = rates.mortality[np.isfinite(rates.mortality)]
    present_any = np.isfinite(rates.fertility) | np.isfinite(rates.mortality)
    if not present_any.any():
        raise StructureError("no usable data: every class is missing")
    M = int(np.flatnonzero(present_any).max())
    gamma = np.full(n - 1, n / (M + 1))
    lam = np.full(n, float(present_b.sum()) / (M + 1))
    mu = np.full(n, float(present_d.sum()) / (M + 1))
    return AtmmppParams(gamma=gamma, mu=mu, lam=lam)


# ---------------------------------------------------------------------------
# multi-start simplex core

def _run_start(objective, x0: np.ndarray, config: FitConfig
               ) -> tuple[np.ndarray, float, bool, int, float]:
    x = np.asarray(x0, dtype=float)
    f = float(objective(x))
    start_value = f
    nfev = 1
    budget = config.max_iter
    converged = False
    # each inner round is capped so the restart criterion, not the inner
    # simplex termination, decides convergence
    round_cap = 250 * x.size
    while budget > 0:
        res = scipy.optimize.minimize(
            objective, x, method="Nelder-Mead",
            options={"maxfev": min(budget, round_cap), "maxiter": 10 ** 9,
                     "fatol": config.objective_tol, "xatol": config.step_tol})
        nfev += res.nfev
        budget -= res.nfev
        improvement = f - float(res.fun)
        if res.fun <= f:
            x, f = np.asarray(res.x, dtype=float), float(res.fun)
        if improvement < config.objective_tol:
            converged = True
            break
    return x, f, converged, nfev, start_value


def _multistart(objective, seed: AtmmppParams, config: FitConfig) -> FitResult:
    base = np.log(np.clip(seed.theta, SEED_FLOOR, None))
    rng = np.random.default_rng(config.seed)
    jitter = rng.standard_normal((max(0, config.seeds - 1), base.size))
    traces = []
    best = None
    for s in range(config.seeds):
        x0 = base if s == 0 else base + config.noise * jitter[s - 1]
        x, f, converged, nfev, f0 = _run_start(objective, x0, config)
        traces.append(SeedTrace(seed_index=s, converged=converged, value=f,
                                start_value=f0, n_evaluations=nfev))
        if converged and (best is None or f < best[1]):
            best = (x, f, s, f0)
    if best is None:
        raise FitError("no start converged within its evaluation budget",
                       tuple(traces))
    x, f, winner, f0 = best
    diagnostics = []
    if f0 - f <= config.objective_tol:
        diagnostics.append("flat objective: optimizer did not improve on its seed")
    if not np.isfinite(f) or f >= INFEASIBLE:
        raise FitError("optimum is not finite", tuple(traces))
    params = AtmmppParams.from_theta(config.n, np.exp(x))
    return FitResult(params=params, objective=f, traces=tuple(traces),
                     winner=winner, diagnostics=tuple(diagnostics))


def _guarded(fn):
    """Turn numeric blowups at wild trial points into rejectable values."""
    def wrapped(x: np.ndarray) -> float:
        if not np.all(np.isfinite(x)) or np.max(x) > LOG_RATE_CAP:
            return INFEASIBLE
        try:
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                val = fn(np.exp(x))
        except (NumericError, StructureError, CapacityError):
            return INFEASIBLE
        if not np.isfinite(val):
            return INFEASIBLE
        return float(val)
    return wrapped


def fit_global(rates: GlobalRates, config: FitConfig,
               weights: np.ndarray | None = None) -> FitResult:
    """Weighted nonlinear least squares against age-specific rates."""
    target_d, target_b = _class_targets(rates)
    w = survival_weights(rates) if weights is None else np.asarray(weights, float)
    n_classes, l = rates.n_classes, float(rates.class_length)
    if w.shape != (n_classes,):
        raise StructureError(f"weights must have length {n_classes}")
    seed = seed_params(config.n, rates)

    def raw(theta: np.ndarray) -> float:
        params = AtmmppParams.from_theta(config.n, theta)
        return _objective_from_targets(params, target_d, target_b, w, n_classes, l)

    return _multistart(_guarded(raw), seed, config)


def fit_individual(sample: LifeVectorSample | PreparedSample,
                   config: FitConfig,
                   seed: AtmmppParams | None = None) -> FitResult:
    """Maximum likelihood on life vectors; objective is -log-likelihood."""
    if isinstance(sample, PreparedSample):
        prep = sample
        if seed is None:
            raise StructureError("prepared samples need an explicit seed")
    else:
        prep = prepare_sample(sample)
        if seed is None:
            seed = seed_params(config.n, sample)

    def raw(theta: np.ndarray) -> float:
        params = AtmmppParams.from_theta(config.n, theta)
        model = build_atmmpp(params)
        ll = log_likelihood(model, prep)
        if ll == LOG_ZERO:
            return INFEASIBLE
        return -ll

    return _multistart(_guarded(raw), seed, config)


def negative_log_likelihood(theta_log: np.ndarray, n: int,
                            prep: PreparedSample) -> float:
    """-log-likelihood at log-parameters, with infeasible-point guarding."""
    def raw(theta: np.ndarray) -> float:
        model = build_atmmpp(AtmmppParams.from_theta(n, theta))
        ll = log_likelihood(model, prep)
        return INFEASIBLE if ll == LOG_ZERO else -ll
    return _guarded(raw)(np.asarray(theta_log, dtype=float))


# ---------------------------------------------------------------------------
# picklable sample-to-model conveniences used by bands and the CLI

def fit_individual_model(sample: LifeVectorSample, config: FitConfig) -> TmapModel:
    return build_atmmpp(fit_individual(sample, config).params)


def fit_global_model(sample: LifeVectorSample, config: FitConfig,
                     count_weights: bool = False) -> TmapModel:
    rates = aggregate_rates(sample)
    weights = rates.counts if count_weights else None
    return build_atmmpp(fit_global(rates, config, weights=weights).params)


def with_n(config: FitConfig, n: int) -> FitConfig:
    return dataclasses.replace(config, n=n)
