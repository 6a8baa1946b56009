"""Pointwise confidence bands for model outputs.

Monte Carlo bands refit the model on resampled (from a known truth) or
bootstrapped (from the data) datasets and spread the refitted curves;
the delta-method band propagates the observed information matrix of the
likelihood through a finite-difference gradient of the output.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.stats

from .data import LifeVectorSample
from .errors import FitError, StructureError
from .estimation import negative_log_likelihood
from .likelihood import prepare_sample
from .model import AtmmppParams, TmapModel, build_atmmpp
from .simulation import SimConfig, replicate_rng, simulate_sample

OutputFn = Callable[[TmapModel, np.ndarray], np.ndarray]
FitFn = Callable[[LifeVectorSample], TmapModel]

EIGENVALUE_CLIP = 1e-8
BOUNDARY_EPS = 1e-6


@dataclass(frozen=True)
class ConfidenceBand:
    """Pointwise band: estimate with lower/upper bounds per age."""

    ages: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str
    n_success: int = 0
    n_failures: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("ages", "estimate", "lower", "upper"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.ages.shape == self.estimate.shape == self.lower.shape
                == self.upper.shape):
            raise StructureError("band columns must share one length")
        if not 0 < self.level < 1:
            raise StructureError("level must lie in (0, 1)")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def mean_width(self) -> float:
        return float(self.width.mean())


def _spread_band(ages: np.ndarray, curves: np.ndarray, level: float,
                 method: str, n_failures: int, quantile: bool,
                 flags: tuple[str, ...] = ()) -> ConfidenceBand:
    if curves.shape[0] < 2:
        raise FitError(f"only {curves.shape[0]} replicate fits succeeded; "
                       f"need at least 2 for a band")
    if quantile:
        lo = (1.0 - level) / 2.0
        lower = np.quantile(curves, lo, axis=0)
        upper = np.quantile(curves, 1.0 - lo, axis=0)
        estimate = np.quantile(curves, 0.5, axis=0)
    else:
        z = scipy.stats.norm.ppf(0.5 + level / 2.0)
        estimate = curves.mean(axis=0)
        sd = curves.std(axis=0, ddof=1)
        lower = estimate - z * sd
        upper = estimate + z * sd
    return ConfidenceBand(ages=ages, estimate=estimate, lower=lower,
                          upper=upper, level=level, method=method,
                          n_success=curves.shape[0], n_failures=n_failures,
                          flags=flags)


def _replicate_curves(tasks, runner, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(runner, tasks))
    return [runner(task) for task in tasks]


def _resample_task(args):
    true_model, fit_fn, output_fn, ages, config, index = args
    rng = replicate_rng(config.seed, index)
    sample = simulate_sample(true_model, config.N, config.T,
                             config.class_length, rng)
    try:
        model = fit_fn(sample)
    except FitError:
        return None
    return np.asarray(output_fn(model, ages), dtype=float)


def band_resample(true_model: TmapModel, fit_fn: FitFn, output_fn: OutputFn,
                  ages: np.ndarray, B: int, config: SimConfig,
                  level: float = 0.95, quantile: bool = False,
                  jobs: int = 1) -> ConfidenceBand:
    """Simulate B datasets from a known model, refit, and spread the curves."""
    if B < 2:
        raise StructureError("need B >= 2 replicates")
    ages = np.asarray(ages, dtype=float)
    tasks = [(true_model, fit_fn, output_fn, ages, config, b) for b in range(B)]
    results = _replicate_curves(tasks, _resample_task, jobs)
    good = [r for r in results if r is not None]
    return _spread_band(ages, np.asarray(good), level, "resample",
                        n_failures=B - len(good), quantile=quantile)


def _bootstrap_task(args):
    sample_vectors, fit_fn, output_fn, ages, seed, index = args
    rng = replicate_rng(seed, index)
    draw = rng.integers(0, len(sample_vectors), size=len(sample_vectors))
    resampled = LifeVectorSample(tuple(sample_vectors[i] for i in draw))
    try:
        model = fit_fn(resampled)
    except FitError:
        return None
    return np.asarray(output_fn(model, ages), dtype=float)


def band_bootstrap(sample: LifeVectorSample, fit_fn: FitFn, output_fn: OutputFn,
                   ages: np.ndarray, B: int, seed: int = 0,
                   level: float = 0.95, quantile: bool = False,
                   jobs: int = 1) -> ConfidenceBand:
    """Refit on B with-replacement resamples of the observed vectors."""
    if B < 2:
        raise StructureError("need B >= 2 replicates")
    ages = np.asarray(ages, dtype=float)
    tasks = [(sample.vectors, fit_fn, output_fn, ages, seed, b) for b in range(B)]
    results = _replicate_curves(tasks, _bootstrap_task, jobs)
    good = [r for r in results if r is not None]
    return _spread_band(ages, np.asarray(good), level, "bootstrap",
                        n_failures=B - len(good), quantile=quantile)


# ---------------------------------------------------------------------------
# delta method

def _fd_hessian(f: Callable[[np.ndarray], float], x: np.ndarray,
                steps: np.ndarray) -> np.ndarray:
    p = x.size
    H = np.empty((p, p))
    f0 = f(x)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = steps[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / steps[i] ** 2
    for i in range(p):
        for j in range(i + 1, p):
            ei = np.zeros(p)
            ej = np.zeros(p)
            ei[i] = steps[i]
            ej[j] = steps[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                   + f(x - ei - ej)) / (4.0 * steps[i] * steps[j])
            H[i, j] = H[j, i] = val
    return H


def band_delta(sample: LifeVectorSample, theta_hat: AtmmppParams,
               output_fn: OutputFn, ages: np.ndarray,
               level: float = 0.95) -> ConfidenceBand:
    """Observed-information band around the maximum-likelihood fit.

    Works in log-parameters so positivity is built in: the information
    matrix is the finite-difference Hessian of the negative
    log-likelihood there, and the output gradient uses the same
    per-coordinate steps.  A non-positive-definite information matrix is
    eigenvalue-clipped and flagged rather than rejected; parameters
    sitting at the zero boundary are flagged as invalidating the
    approximation.
    """
    ages = np.asarray(ages, dtype=float)
    prep = prepare_sample(sample)
    n = theta_hat.n
    theta = theta_hat.theta
    flags: list[str] = []
    if np.any(theta < BOUNDARY_EPS):
        flags.append("boundary parameters: delta approximation unreliable")
    phi = np.log(np.clip(theta, 1e-300, None))
    steps = 1e-4 * (1.0 + np.abs(phi))

    def nll(x: np.ndarray) -> float:
        return negative_log_likelihood(x, n, prep)

    info = _fd_hessian(nll, phi, steps)
    info = 0.5 * (info + info.T)
    eigvals, eigvecs = scipy.linalg.eigh(info)
    top = float(eigvals.max())
    if top <= 0:
        raise FitError("information matrix has no positive curvature; "
                       "the likelihood surface is flat at the fit")
    floor = EIGENVALUE_CLIP * top
    if np.any(eigvals < floor):
        flags.append("information matrix not positive definite; "
                     "eigenvalues clipped")
        eigvals = np.maximum(eigvals, floor)
    inv_info = (eigvecs / eigvals) @ eigvecs.T

    def g(x: np.ndarray) -> np.ndarray:
        model = build_atmmpp(AtmmppParams.from_theta(n, np.exp(x)))
        return np.asarray(output_fn(model, ages), dtype=float)

    estimate = g(phi)
    grad = np.empty((phi.size, ages.size))
    for i in range(phi.size):
        ei = np.zeros(phi.size)
        ei[i] = steps[i]
        grad[i] = (g(phi + ei) - g(phi - ei)) / (2.0 * steps[i])
    var = np.einsum("pa,pq,qa->a", grad, inv_info, grad)
    if np.any(var < -1e-10):
        flags.append("negative variance floored at zero")
    var = np.maximum(var, 0.0)
    z = scipy.stats.norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(var)
    return ConfidenceBand(ages=ages, estimate=estimate, lower=estimate - half,
                          upper=estimate + half, level=level, method="delta",
                          n_success=1, n_failures=0, flags=tuple(flags))
