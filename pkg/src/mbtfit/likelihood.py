"""Life-vector likelihoods and count-class masses.

The joint law of (births in an age class, survival of the class, phase
at its end) is obtained from one matrix exponential of a block
lower-bidiagonal generator; multiplying those kernels along a life
vector gives its probability, and summing logs over a sample gives the
likelihood surface used for maximum-likelihood fitting.  The same
kernels power the finite class partition behind the integrated-loss
selection criterion.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import CENSORED, DEATH, LifeVector, LifeVectorSample
from .errors import CapacityError, NumericError, StructureError
from .model import TmapModel, ensure_valid, matrix_exp

# Most-negative finite double: stands in for log(0) so that optimizers
# see a rejectable value instead of -inf arithmetic.
LOG_ZERO = -float(np.finfo(float).max)

KERNEL_DIM_CAP = 5000
FACTORIAL_CAP = 170  # largest k with finite float64 k!
ENUMERATION_CAP = 10 ** 6


@dataclass(frozen=True)
class CountKernels:
    """Per-age-class birth-count kernels for one model and class length.

    ``P_k[k]`` is the n x n matrix of P(k births, survive the class,
    end phase j | start phase i); ``p_k[k]`` the vector of P(k births,
    die within the class | start phase i).  ``P`` and ``p`` are the
    count-marginalized versions.  ``alive_or_dead[k] = P_k[k] 1 + p_k[k]``
    is the mass of seeing count k regardless of survival.
    """

    class_length: float
    K: int
    P_k: np.ndarray
    p_k: np.ndarray
    P: np.ndarray
    p: np.ndarray
    alive_or_dead: np.ndarray = field(init=False)

    def __post_init__(self):
        ones = self.P_k.sum(axis=2) + self.p_k
        ones.setflags(write=False)
        object.__setattr__(self, "alive_or_dead", ones)

    @property
    def n(self) -> int:
        return self.P.shape[0]


def count_kernels(model: TmapModel, l: float, K: int,
                  dim_cap: int = KERNEL_DIM_CAP) -> CountKernels:
    """Compute P(k), p(k) for k = 0..K plus the marginal P, p.

    Stacks counting levels 0..K into one generator whose exponential
    holds the count-resolved transition masses, and integrates the same
    exponential against the exit rates via a linear solve to get the
    die-within-class masses.  The stacked generator is conjugated by
    diag(k! I) up front so every block stays O(1); without that the
    raw blocks grow like k! and the solve loses all precision by K ~ 30.
    """
    ensure_valid(model)
    if l <= 0:
        raise StructureError("l must be positive")
    if K < 0:
        raise StructureError("K must be nonnegative")
    n = model.n
    dim = n * (K + 1)
    if dim > dim_cap:
        raise CapacityError(f"count kernel dimension n(K+1)={dim} exceeds cap {dim_cap}")
    if K > FACTORIAL_CAP:
        raise CapacityError(f"K={K} exceeds the float64 factorial range "
                            f"({FACTORIAL_CAP})")
    big = np.zeros((dim, dim))
    for k in range(K + 1):
        big[k * n:(k + 1) * n, k * n:(k + 1) * n] = model.D0
        if k >= 1:
            big[k * n:(k + 1) * n, (k - 1) * n:k * n] = model.D1
    E = matrix_exp(big, l)
    P_k = E[:, 0:n].reshape(K + 1, n, n).copy()

    # block forward substitution for y with (-M)y = [d; 0; ...]; a
    # singular factor surfaces as non-finite y, checked below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        try:
            lu = scipy.linalg.lu_factor(-model.D0)
        except scipy.linalg.LinAlgError as exc:
            raise NumericError("count-kernel generator is singular; no phase "
                               "can exit, so die-within-class masses are "
                               "undefined") from exc
        y = np.empty((K + 1, n))
        y[0] = scipy.linalg.lu_solve(lu, model.d)
        for k in range(1, K + 1):
            y[k] = scipy.linalg.lu_solve(lu, model.D1 @ y[k - 1])
    if not np.isfinite(y).all():
        raise NumericError("count-kernel generator is singular; no phase can "
                           "exit, so die-within-class masses are undefined")
    p_k = (y.reshape(-1) - E @ y.reshape(-1)).reshape(K + 1, n)

    D = model.generator
    P = matrix_exp(D, l)
    try:
        yD = np.linalg.solve(-D, model.d)
    except np.linalg.LinAlgError as exc:
        raise NumericError("D = D0 + D1 is singular") from exc
    p = yD - P @ yD

    for arr in (P_k, p_k, P, p):
        low = float(arr.min(initial=0.0))
        if low < -1e-9:
            raise NumericError(f"count kernel produced entry {low}; the model's "
                               f"rates are numerically inconsistent")
    P_k = np.clip(P_k, 0.0, None)
    p_k = np.clip(p_k, 0.0, None)
    P = np.clip(P, 0.0, None)
    p = np.clip(p, 0.0, None)
    for arr in (P_k, p_k, P, p):
        arr.setflags(write=False)
    return CountKernels(class_length=l, K=K, P_k=P_k, p_k=p_k, P=P, p=p)


def _check_kernels(v: LifeVector, kernels: CountKernels) -> None:
    if v.max_count > kernels.K:
        raise StructureError(f"vector has count {v.max_count} but kernels were "
                             f"built with K={kernels.K}")
    if not math.isclose(v.class_length, kernels.class_length,
                        rel_tol=1e-12, abs_tol=0.0):
        raise StructureError("vector and kernels disagree on class length")


def life_vector_probability(model: TmapModel, v: LifeVector,
                            kernels: CountKernels | None = None) -> float:
    """Probability of observing exactly this life vector.

    Left-to-right product: count k in a survived class contributes
    P(k), a censored survived class contributes P; the final entry
    contributes p(k) or p when followed by the death marker, and the
    alive-or-dead mass P(k)1 + p(k) (or plain 1 for a censored tail,
    which carries no information) otherwise.
    """
    if kernels is None:
        kernels = count_kernels(model, v.class_length, max(0, v.max_count))
    _check_kernels(v, kernels)
    entries = v.entries
    if entries[-1] == DEATH:
        if len(entries) == 1:
            raise StructureError("[-1] alone: death with no preceding class")
        body, last = entries[:-2], entries[-2]
        closing = kernels.p if last == CENSORED else kernels.p_k[last]
    else:
        body, last = entries[:-1], entries[-1]
        closing = (np.ones(kernels.n) if last == CENSORED
                   else kernels.alive_or_dead[last])
    row = model.alpha
    for e in body:
        row = row @ (kernels.P if e == CENSORED else kernels.P_k[e])
    return min(max(float(row @ closing), 0.0), 1.0)


# ---------------------------------------------------------------------------
# prepared samples: grouped evaluation for optimizer loops

@dataclass(frozen=True)
class PreparedSample:
    """Deduplicated sample laid out for batched kernel products.

    ``positions[i]`` lists (entry value, row indices) groups for
    non-terminal position i over the unique vectors; ``closers`` groups
    rows by their closing factor.  ``multiplicity`` counts duplicates.
    """

    class_length: float
    K: int
    n_unique: int
    multiplicity: np.ndarray
    positions: tuple[tuple[tuple[int, np.ndarray], ...], ...]
    closers: tuple[tuple[str, int, np.ndarray], ...]
    N: int


def prepare_sample(sample: LifeVectorSample) -> PreparedSample:
    """Group identical vectors and index entries by position and value."""
    counter: dict[tuple[int, ...], int] = {}
    for v in sample:
        counter[v.entries] = counter.get(v.entries, 0) + 1
    unique = list(counter)
    mult = np.array([counter[u] for u in unique], dtype=float)

    bodies: list[tuple[int, ...]] = []
    closer_key: list[tuple[str, int]] = []
    for entries in unique:
        if entries[-1] == DEATH:
            if len(entries) == 1:
                raise StructureError("[-1] alone: death with no preceding class")
            bodies.append(entries[:-2])
            last = entries[-2]
            closer_key.append(("die_any", 0) if last == CENSORED else ("die", last))
        else:
            bodies.append(entries[:-1])
            last = entries[-1]
            closer_key.append(("open", 0) if last == CENSORED else ("seen", last))

    max_body = max((len(b) for b in bodies), default=0)
    positions = []
    for i in range(max_body):
        groups: dict[int, list[int]] = {}
        for r, body in enumerate(bodies):
            if i < len(body):
                groups.setdefault(body[i], []).append(r)
        positions.append(tuple((val, np.array(rows, dtype=np.intp))
                               for val, rows in sorted(groups.items())))
    closer_groups: dict[tuple[str, int], list[int]] = {}
    for r, key in enumerate(closer_key):
        closer_groups.setdefault(key, []).append(r)
    closers = tuple((kind, val, np.array(rows, dtype=np.intp))
                    for (kind, val), rows in sorted(closer_groups.items()))
    return PreparedSample(class_length=sample.class_length,
                          K=sample.max_count,
                          n_unique=len(unique),
                          multiplicity=mult,
                          positions=tuple(positions),
                          closers=closers,
                          N=sample.N)


def _unique_probabilities(model: TmapModel, prep: PreparedSample,
                          kernels: CountKernels) -> np.ndarray:
    rows = np.broadcast_to(model.alpha, (prep.n_unique, kernels.n)).copy()
    for groups in prep.positions:
        for val, idx in groups:
            mat = kernels.P if val == CENSORED else kernels.P_k[val]
            rows[idx] = rows[idx] @ mat
    out = np.empty(prep.n_unique)
    for kind, val, idx in prep.closers:
        if kind == "die":
            close = kernels.p_k[val]
        elif kind == "die_any":
            close = kernels.p
        elif kind == "seen":
            close = kernels.alive_or_dead[val]
        else:
            close = np.ones(kernels.n)
        out[idx] = rows[idx] @ close
    return np.clip(out, 0.0, 1.0)


def log_likelihood(model: TmapModel,
                   sample: LifeVectorSample | PreparedSample,
                   kernels: CountKernels | None = None) -> float:
    """Sum of log vector probabilities; LOG_ZERO if any vector has mass 0."""
    prep = sample if isinstance(sample, PreparedSample) else prepare_sample(sample)
    if kernels is None:
        kernels = count_kernels(model, prep.class_length, prep.K)
    probs = _unique_probabilities(model, prep, kernels)
    if np.any(probs <= 0.0):
        return LOG_ZERO
    return float(prep.multiplicity @ np.log(probs))


def per_vector_log_probabilities(model: TmapModel,
                                 sample: LifeVectorSample) -> np.ndarray:
    """Log probability of each vector in order; LOG_ZERO marks mass-0 rows."""
    kernels = count_kernels(model, sample.class_length, sample.max_count)
    out = np.empty(sample.N)
    cache: dict[tuple[int, ...], float] = {}
    for j, v in enumerate(sample):
        prob = cache.get(v.entries)
        if prob is None:
            prob = life_vector_probability(model, v, kernels)
            cache[v.entries] = prob
        out[j] = math.log(prob) if prob > 0 else LOG_ZERO
    return out


# ---------------------------------------------------------------------------
# count-class partition for the integrated-loss criterion

@dataclass(frozen=True)
class MsilClassVector:
    """One equivalence class of life vectors under a (K, M) partition.

    Entries over {0..K, K+1} where K+1 pools all counts above K; a
    trailing -1 marks death during the last listed class (length m+1
    with 1 <= m <= M-1), and a full length-M template covers every
    continuation past class M, including death within class M.
    """

    entries: tuple[int, ...]
    K: int
    M: int

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.K < 0 or self.M < 1:
            raise StructureError("need K >= 0 and M >= 1")
        if entries and entries[-1] == DEATH:
            content = entries[:-1]
            if not 1 <= len(content) <= self.M - 1:
                raise StructureError(
                    f"death class content length must be 1..{self.M - 1}")
        else:
            content = entries
            if len(content) != self.M:
                raise StructureError(f"alive class must have exactly M={self.M} entries")
        for e in content:
            if not 0 <= e <= self.K + 1:
                raise StructureError(f"class entry {e} outside 0..{self.K + 1}")

    @property
    def tail_positions(self) -> tuple[int, ...]:
        """Indices of entries holding the pooled >K symbol."""
        return tuple(i for i, e in enumerate(self.entries) if e == self.K + 1)


def enumerate_classes(K: int, M: int,
                      cap: int = ENUMERATION_CAP) -> list[MsilClassVector]:
    """All classes of the canonical (K, M) partition.

    Death templates of content length 1..M-1 plus full length-M
    templates; together they partition the life-vector space, so their
    masses sum to one under any valid model.
    """
    if K < 0 or M < 1:
        raise StructureError("need K >= 0 and M >= 1")
    base = K + 2
    total = sum(base ** m for m in range(1, M)) + base ** M
    if total > cap:
        raise CapacityError(f"partition would hold {total} classes, over cap {cap}")
    symbols = range(base)
    out = []
    for m in range(1, M):
        for combo in itertools.product(symbols, repeat=m):
            out.append(MsilClassVector(combo + (DEATH,), K, M))
    for combo in itertools.product(symbols, repeat=M):
        out.append(MsilClassVector(combo, K, M))
    return out


def paper_class_count(K: int, M: int) -> int:
    """Published cardinality figure for the (K, M) class set.

    Reported for cross-checking only; it does not equal the size of the
    canonical partition produced by enumerate_classes.
    """
    return (K + 2) * ((K + 2) ** (M + 1) - 1) // (K + 1)


def msil_class_mass(model: TmapModel, vtilde: MsilClassVector,
                    kernels: CountKernels | None = None) -> float:
    """Probability that a random life history falls in the class.

    Templates without the pooled symbol are scored directly as life
    vectors.  Each pooled entry (> K) is expanded by inclusion and
    exclusion: substituting a censored marker counts all counts at that
    position, and subtracting the explicit 0..K substitutions leaves
    exactly the K+1-and-above tail.
    """
    if kernels is None:
        kernels = count_kernels(model, 1.0, vtilde.K)
    if kernels.K < vtilde.K:
        raise StructureError(f"kernels need K >= {vtilde.K}")
    tails = vtilde.tail_positions
    base_entries = list(vtilde.entries)
    if not tails:
        return life_vector_probability(
            model, LifeVector(tuple(base_entries), kernels.class_length), kernels)
    total = 0.0
    options = [CENSORED] + list(range(vtilde.K + 1))
    for combo in itertools.product(options, repeat=len(tails)):
        entries = list(base_entries)
        n_cens = 0
        for pos, value in zip(tails, combo):
            entries[pos] = value
            n_cens += value == CENSORED
        sign = -1.0 if (len(tails) + n_cens) % 2 else 1.0
        total += sign * life_vector_probability(
            model, LifeVector(tuple(entries), kernels.class_length), kernels)
    return min(max(total, 0.0), 1.0)


def class_masses(model: TmapModel, classes: list[MsilClassVector],
                 class_length: float = 1.0) -> np.ndarray:
    """msil_class_mass over a class list, building kernels once."""
    if not classes:
        return np.empty(0)
    K = classes[0].K
    kernels = count_kernels(model, class_length, K)
    return np.array([msil_class_mass(model, c, kernels) for c in classes])


def classify_vector(v: LifeVector, K: int, M: int) -> MsilClassVector | None:
    """Map a life vector to its partition class, or None when undecidable.

    Only the prefix before the first censored entry is trusted: a
    leading or early censoring leaves the class ambiguous, as does a
    still-alive vector shorter than M classes.  Counts above K collapse
    to the pooled symbol; death later than class M-1 lands in the
    full-length class of the first M counts.
    """
    entries = v.entries
    first_cens = next((i for i, e in enumerate(entries) if e == CENSORED),
                      len(entries))
    prefix = entries[:first_cens]
    if not prefix:
        return None
    clip = lambda k: min(k, K + 1)
    if prefix[-1] == DEATH:
        content = prefix[:-1]
        m = len(content)
        if m >= M:
            return MsilClassVector(tuple(clip(k) for k in content[:M]), K, M)
        return MsilClassVector(tuple(clip(k) for k in content) + (DEATH,), K, M)
    if len(prefix) >= M:
        return MsilClassVector(tuple(clip(k) for k in prefix[:M]), K, M)
    return None
