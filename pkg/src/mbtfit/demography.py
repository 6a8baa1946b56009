"""Model-implied demographic quantities.

The lifetime of an individual is phase type with generator
``D = D0 + D1``, which yields closed matrix expressions for survival,
age-specific mortality and fertility, and (through the branching fixed
point) the probability that the family founded by one individual
eventually dies out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IterationError, NumericError, StructureError
from .model import TmapModel, ensure_valid, matrix_exp

SURVIVAL_FLOOR = 1e-300


@dataclass(frozen=True)
class AgeGrid:
    """Evaluation ages plus the class length they discretize."""

    ages: np.ndarray
    class_length: float = 1.0

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=float).reshape(-1)
        ages.setflags(write=False)
        object.__setattr__(self, "ages", ages)
        if self.class_length <= 0:
            raise StructureError("class_length must be positive")
        if ages.size and (np.any(np.diff(ages) <= 0) or ages[0] < 0):
            raise StructureError("ages must be nonnegative and strictly increasing")


@dataclass(frozen=True)
class DemographicCurves:
    """Mortality, fertility and survival on an age grid."""

    ages: np.ndarray
    mortality: np.ndarray
    fertility: np.ndarray
    survival: np.ndarray
    class_length: float = 1.0


def _alive_row(model: TmapModel, x: float) -> np.ndarray:
    """Row vector alpha e^{Dx} of phase occupation among survivors at age x."""
    if x < 0:
        raise StructureError("age must be nonnegative")
    if x == 0:
        return model.alpha.copy()
    return model.alpha @ matrix_exp(model.generator, x)


def survival(model: TmapModel, x: float) -> float:
    """P(lifetime > x)."""
    ensure_valid(model)
    val = float(_alive_row(model, x).sum())
    return min(max(val, 0.0), 1.0)


def _interval_factors(model: TmapModel, l: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (I - e^{Dl})1 and (I - e^{Dl})(-D)^{-1} D1 1."""
    D = model.generator
    U = matrix_exp(D, l)
    IU = np.eye(model.n) - U
    try:
        mean_births = np.linalg.solve(-D, model.D1.sum(axis=1))
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "D = D0 + D1 is singular; some phases never reach death, so the "
            "expected-births operator (-D)^{-1} does not exist") from exc
    return IU.sum(axis=1), IU @ mean_births


def mortality_rate(model: TmapModel, x: float, l: float = 1.0) -> float:
    """Probability of dying within (x, x+l] given alive at age x."""
    ensure_valid(model)
    if l <= 0:
        raise StructureError("l must be positive")
    row = _alive_row(model, x)
    total = float(row.sum())
    if total < SURVIVAL_FLOOR:
        raise NumericError(f"survival at age {x} is below {SURVIVAL_FLOOR}; "
                           f"age beyond numeric support")
    death_mass, _ = _interval_factors(model, l)
    val = float(row @ death_mass) / total
    return min(max(val, 0.0), 1.0)


def fertility_rate(model: TmapModel, x: float, l: float = 1.0) -> float:
    """Expected births during (x, x+l] given alive at age x."""
    ensure_valid(model)
    if l <= 0:
        raise StructureError("l must be positive")
    row = _alive_row(model, x)
    total = float(row.sum())
    if total < SURVIVAL_FLOOR:
        raise NumericError(f"survival at age {x} is below {SURVIVAL_FLOOR}; "
                           f"age beyond numeric support")
    _, birth_mass = _interval_factors(model, l)
    return max(float(row @ birth_mass) / total, 0.0)


def curves(model: TmapModel, n_classes: int, l: float = 1.0) -> DemographicCurves:
    """Evaluate all three curves on the grid 0, l, ..., (n_classes-1)l.

    One matrix exponential is computed and reused: the survivor row at
    age (i+1)l is the age-il row propagated by e^{Dl}.
    """
    ensure_valid(model)
    if n_classes < 1:
        raise StructureError("n_classes must be at least 1")
    if l <= 0:
        raise StructureError("l must be positive")
    D = model.generator
    U = matrix_exp(D, l)
    death_mass = (np.eye(model.n) - U).sum(axis=1)
    try:
        mean_births = np.linalg.solve(-D, model.D1.sum(axis=1))
    except np.linalg.LinAlgError as exc:
        raise NumericError("D = D0 + D1 is singular") from exc
    birth_mass = (np.eye(model.n) - U) @ mean_births
    ages = np.arange(n_classes) * l
    mort = np.full(n_classes, np.nan)
    fert = np.full(n_classes, np.nan)
    surv = np.full(n_classes, np.nan)
    row = model.alpha.copy()
    for i in range(n_classes):
        total = float(row.sum())
        surv[i] = min(max(total, 0.0), 1.0)
        if total < SURVIVAL_FLOOR:
            raise NumericError(f"survival at age {ages[i]} is below "
                               f"{SURVIVAL_FLOOR}; shrink the grid")
        mort[i] = min(max(float(row @ death_mass) / total, 0.0), 1.0)
        fert[i] = max(float(row @ birth_mass) / total, 0.0)
        row = row @ U
    return DemographicCurves(ages=ages, mortality=mort, fertility=fert,
                             survival=surv, class_length=l)


def rates_model_equivalents(beta_hat: float, mu_hat: float,
                            l: int = 1) -> tuple[float, float]:
    """Convert per-year rates to their class-length-l counterparts.

    A constant per-year death probability ``mu_hat`` compounds to
    ``1 - (1-mu_hat)^l`` over l years, and a constant per-year birth
    rate ``beta_hat`` accumulates ``beta_hat (1-(1-mu_hat)^l)/mu_hat``
    expected births from the survivors-weighted sub-years (limit
    ``beta_hat * l`` when ``mu_hat = 0``).
    """
    if not (0 <= mu_hat <= 1):
        raise StructureError("mu_hat must lie in [0, 1]")
    if beta_hat < 0:
        raise StructureError("beta_hat must be nonnegative")
    if l < 1 or int(l) != l:
        raise StructureError("l must be a positive integer number of base periods")
    l = int(l)
    if mu_hat == 0:
        return 0.0, beta_hat * l
    if l == 1:
        return mu_hat, beta_hat
    target_d = 1.0 - (1.0 - mu_hat) ** l
    return target_d, beta_hat * target_d / mu_hat


def extinction_vector(model: TmapModel, tol: float = 1e-12,
                      max_iter: int = 10 ** 6) -> np.ndarray:
    """Per-starting-phase probability that the founded family dies out.

    Solves the branching fixed point by monotone functional iteration
    from zero, which converges to the minimal nonnegative solution:
    conditioning one individual's first event on hidden move, death, or
    birth (child restarting from alpha) gives
    ``q = (-diag(D0))^{-1} [d + offdiag(D0) q + (alpha . q) D1 q]``.
    """
    ensure_valid(model)
    exit_rate = -np.diag(model.D0)
    off = model.D0 - np.diag(np.diag(model.D0))
    q = np.zeros(model.n)
    for _ in range(max_iter):
        child = float(model.alpha @ q)
        q_new = (model.d + off @ q + child * (model.D1 @ q)) / exit_rate
        resid = float(np.abs(q_new - q).max())
        q = q_new
        if resid < tol:
            return np.clip(q, 0.0, 1.0)
    raise IterationError(f"extinction iteration did not reach tol={tol} in "
                         f"{max_iter} steps; last residual {resid:.3e}")


def extinction_by_initial_age(model: TmapModel, x: float,
                              q: np.ndarray | None = None) -> float:
    """Extinction probability of a family whose founder is alive at age x."""
    ensure_valid(model)
    if q is None:
        q = extinction_vector(model)
    row = _alive_row(model, x)
    total = float(row.sum())
    if total < SURVIVAL_FLOOR:
        raise NumericError(f"survival at age {x} is below {SURVIVAL_FLOOR}; "
                           f"age beyond numeric support")
    return min(max(float(row @ q) / total, 0.0), 1.0)


def extinction_age_curve(model: TmapModel, ages: np.ndarray) -> np.ndarray:
    """extinction_by_initial_age evaluated on a grid, solving q once."""
    q = extinction_vector(model)
    return np.array([extinction_by_initial_age(model, float(x), q) for x in ages])


def survival_curve(model: TmapModel, ages: np.ndarray) -> np.ndarray:
    return np.array([survival(model, float(x)) for x in ages])


def mortality_curve(model: TmapModel, ages: np.ndarray, l: float = 1.0) -> np.ndarray:
    return np.array([mortality_rate(model, float(x), l) for x in ages])


def fertility_curve(model: TmapModel, ages: np.ndarray, l: float = 1.0) -> np.ndarray:
    return np.array([fertility_rate(model, float(x), l) for x in ages])
