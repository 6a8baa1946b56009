"""Transient Markovian arrival processes for binary branching populations.

A model tracks one individual through hidden phases.  ``D0`` holds
phase-change rates without a birth, ``D1`` holds rates that emit a child
while the parent moves (here: stays) in its phase, and ``d`` holds exit
(death) rates.  Rows conserve: ``D0 @ 1 + D1 @ 1 + d = 0``.  The phase
process of a single individual is the defective chain with generator
``D0 + D1`` and exit vector ``d``, so its lifetime is phase type.

The fitted subclass is an acyclic chain: phase ``i`` can only advance to
``i + 1`` (rate ``gamma[i]``), give birth (rate ``lam[i]``) or die (rate
``mu[i]``), and every individual starts in phase 1.  That leaves
``3 n - 1`` free parameters for ``n`` phases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import StructureError

PROB_ATOL = 1e-12
CONSERVE_ATOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MatrixExpOptions:
    """Knobs for the matrix exponential.

    The default backend is Pade with scaling and squaring; the plain
    ``"taylor"`` backend exists as a slow in-library cross-check.
    ``tolerance`` is the target relative accuracy; both backends beat
    it comfortably for generator matrices of moderate norm.
    """

    method: str = "pade"
    tolerance: float = 1e-13

    def __post_init__(self):
        if self.method not in ("pade", "taylor"):
            raise StructureError(f"unknown matrix_exp method {self.method!r}")
        if not self.tolerance > 0:
            raise StructureError("tolerance must be positive")


def matrix_exp(a: np.ndarray, t: float = 1.0,
               options: MatrixExpOptions | None = None) -> np.ndarray:
    """Return ``exp(a * t)`` for a square matrix ``a`` and ``t >= 0``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructureError(f"matrix_exp needs a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise StructureError("matrix_exp needs finite entries")
    if t < 0:
        raise StructureError("matrix_exp needs t >= 0")
    if options is not None and options.method == "taylor":
        return _taylor_exp(a * t)
    return scipy.linalg.expm(a * t)


def _taylor_exp(m: np.ndarray, terms: int = 200) -> np.ndarray:
    # plain series, scaled so the argument norm is below 1/2
    norm = np.abs(m).sum(axis=1).max()
    squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-300)))) + 1)
    ms = m / (2 ** squarings)
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, terms + 1):
        term = term @ ms / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


@dataclass(frozen=True)
class Violation:
    """One failed model invariant with its numeric residual."""

    name: str
    residual: float

    def __str__(self) -> str:
        return f"{self.name} (residual {self.residual:.3e})"


@dataclass(frozen=True)
class TmapModel:
    """Transient Markovian arrival process ``(alpha, D0, D1, d)``.

    ``alpha`` is the initial phase distribution (row vector), ``D0`` the
    no-birth transition rates, ``D1`` the birth rates and ``d`` the exit
    rate column.  Construction only checks shapes; call :func:`validate`
    or :func:`ensure_valid` for the sign and conservation invariants, so
    that intermediate objects from optimizers can be inspected.
    """

    alpha: np.ndarray
    D0: np.ndarray
    D1: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _readonly(self.alpha).reshape(-1))
        object.__setattr__(self, "D0", _readonly(self.D0))
        object.__setattr__(self, "D1", _readonly(self.D1))
        object.__setattr__(self, "d", _readonly(self.d).reshape(-1))
        n = self.alpha.shape[0]
        for name in ("D0", "D1"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise StructureError(f"{name} must be {n}x{n}, got {m.shape}")
        if self.d.shape != (n,):
            raise StructureError(f"d must have length {n}, got {self.d.shape}")

    @property
    def n(self) -> int:
        """Number of hidden phases."""
        return self.alpha.shape[0]

    @property
    def generator(self) -> np.ndarray:
        """Lifetime generator ``D0 + D1`` of a single individual."""
        return self.D0 + self.D1

    def to_json_dict(self) -> dict:
        """Plain-types representation used by the model JSON format."""
        out = {
            "n": self.n,
            "alpha": self.alpha.tolist(),
            "D0": self.D0.tolist(),
            "D1": self.D1.tolist(),
            "d": self.d.tolist(),
        }
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TmapModel":
        try:
            n = int(obj["n"])
            model = cls(
                alpha=np.asarray(obj["alpha"], dtype=float),
                D0=np.asarray(obj["D0"], dtype=float),
                D1=np.asarray(obj["D1"], dtype=float),
                d=np.asarray(obj["d"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureError(f"malformed model object: {exc}") from exc
        if model.n != n:
            raise StructureError(f"declared n={n} but alpha has length {model.n}")
        return model


def validate(model: TmapModel,
             prob_atol: float = PROB_ATOL,
             conserve_atol: float = CONSERVE_ATOL) -> list[Violation]:
    """Check all model invariants and return the violated ones.

    An empty list means the model is valid.  Residuals measure how far
    the worst entry is from the feasible set.
    """
    out: list[Violation] = []
    if not (np.isfinite(model.alpha).all() and np.isfinite(model.D0).all()
            and np.isfinite(model.D1).all() and np.isfinite(model.d).all()):
        out.append(Violation("finite entries", float("nan")))
        return out
    neg = float(-model.alpha.min())
    if neg > 0:
        out.append(Violation("alpha nonnegative", neg))
    gap = abs(float(model.alpha.sum()) - 1.0)
    if gap > prob_atol:
        out.append(Violation("alpha sums to one", gap))
    for name, m in (("D1", model.D1), ("d", model.d)):
        neg = float(-m.min())
        if neg > 0:
            out.append(Violation(f"{name} nonnegative", neg))
    off = model.D0 - np.diag(np.diag(model.D0))
    neg = float(-off.min())
    if neg > 0:
        out.append(Violation("D0 off-diagonal nonnegative", neg))
    diag_max = float(np.diag(model.D0).max())
    if diag_max >= 0:
        out.append(Violation("D0 diagonal negative", diag_max))
    resid = float(np.abs(model.D0.sum(axis=1) + model.D1.sum(axis=1) + model.d).max())
    if resid > conserve_atol:
        out.append(Violation("row conservation", resid))
    return out


def ensure_valid(model: TmapModel) -> TmapModel:
    """Return ``model`` unchanged or raise listing every violation."""
    bad = validate(model)
    if bad:
        raise StructureError("invalid model: " + "; ".join(str(v) for v in bad))
    return model


@dataclass(frozen=True)
class AtmmppParams:
    """Free parameters of the acyclic chain subclass.

    ``gamma`` has length ``n - 1`` (phase advance rates, strictly
    positive), ``mu`` and ``lam`` have length ``n`` (death and birth
    rates, nonnegative).
    """

    gamma: np.ndarray
    mu: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", _readonly(self.gamma).reshape(-1))
        object.__setattr__(self, "mu", _readonly(self.mu).reshape(-1))
        object.__setattr__(self, "lam", _readonly(self.lam).reshape(-1))
        n = self.mu.shape[0]
        if n < 1:
            raise StructureError("need at least one phase")
        if self.lam.shape != (n,):
            raise StructureError("mu and lam must have equal length")
        if self.gamma.shape != (n - 1,):
            raise StructureError(f"gamma must have length n-1={n - 1}, "
                                 f"got {self.gamma.shape[0]}")
        for name, arr in (("gamma", self.gamma), ("mu", self.mu), ("lam", self.lam)):
            if not np.isfinite(arr).all():
                raise StructureError(f"{name} must be finite")
        if self.mu.size and self.mu.min() < 0:
            raise StructureError("mu must be nonnegative")
        if self.lam.min() < 0:
            raise StructureError("lam must be nonnegative")
        if self.gamma.size and self.gamma.min() <= 0:
            raise StructureError("gamma must be strictly positive")

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def theta(self) -> np.ndarray:
        """Flat parameter vector ``(gamma, mu, lam)`` of length ``3n - 1``."""
        return np.concatenate([self.gamma, self.mu, self.lam])

    @classmethod
    def from_theta(cls, n: int, theta: Iterable[float]) -> "AtmmppParams":
        theta = np.asarray(list(theta), dtype=float)
        if theta.shape != (3 * n - 1,):
            raise StructureError(f"theta must have length 3n-1={3 * n - 1}, "
                                 f"got {theta.shape}")
        return cls(gamma=theta[:n - 1], mu=theta[n - 1:2 * n - 1], lam=theta[2 * n - 1:])


def build_atmmpp(params: AtmmppParams) -> TmapModel:
    """Assemble the full model from acyclic-chain parameters.

    The start distribution puts all mass on phase 1, births keep the
    parent in its phase (``D1 = diag(lam)``), the only hidden moves are
    ``i -> i + 1`` at rate ``gamma[i]``, and the diagonal of ``D0``
    balances each row so that rates conserve exactly.
    """
    n = params.n
    alpha = np.zeros(n)
    alpha[0] = 1.0
    D1 = np.diag(params.lam)
    D0 = np.zeros((n, n))
    for i in range(n - 1):
        D0[i, i + 1] = params.gamma[i]
    gamma_out = np.append(params.gamma, 0.0)
    np.fill_diagonal(D0, -(gamma_out + params.lam + params.mu))
    return TmapModel(alpha=alpha, D0=D0, D1=D1, d=params.mu.copy())
