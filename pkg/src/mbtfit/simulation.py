"""Exact stochastic simulation of individuals and family trees.

Each individual is a continuous-time chain: in phase i it holds for an
exponential time at the total outflow rate, then the event is a hidden
move (D0 off-diagonal), a birth (D1, child ignored or spawned depending
on the caller), or death (d).  Simulation is exact, with a vectorized
engine that advances many individuals per RNG call; the per-individual
reference path is kept for single trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CENSORED, DEATH, GlobalRates, LifeVector, LifeVectorSample
from .errors import StructureError
from .model import AtmmppParams, TmapModel, build_atmmpp, ensure_valid


@dataclass(frozen=True)
class ExamplePreset:
    """A named synthetic study: chain parameters plus simulation sizes."""

    params: AtmmppParams
    N: int
    T: float


PRESETS: dict[str, ExamplePreset] = {
    "example1": ExamplePreset(
        AtmmppParams(gamma=(0.25, 0.25), mu=(0.2, 0.4, 0.9), lam=(6.0, 3.0, 2.0)),
        N=500, T=15.0),
    "example2": ExamplePreset(
        AtmmppParams(gamma=(0.5, 0.1, 0.1), mu=(0.3, 0.1, 0.2, 0.7),
                     lam=(0.5, 2.0, 0.5, 0.01)),
        N=400, T=25.0),
    "example3": ExamplePreset(
        AtmmppParams(gamma=(0.3, 0.3, 0.3), mu=(0.6, 0.1, 0.2, 0.5),
                     lam=(0.2, 3.0, 2.0, 0.1)),
        N=500, T=15.0),
}


def preset(name: str) -> ExamplePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise StructureError(f"unknown preset {name!r}; choose from "
                             f"{sorted(PRESETS)}") from None


def preset_model(name: str) -> TmapModel:
    return build_atmmpp(preset(name).params)


@dataclass(frozen=True)
class Trajectory:
    """One simulated life: birth epochs in time order, death epoch or inf."""

    births: np.ndarray
    death: float
    phases: tuple[int, ...] | None = None

    def __post_init__(self):
        births = np.asarray(self.births, dtype=float).reshape(-1)
        births.setflags(write=False)
        object.__setattr__(self, "births", births)
        if births.size and not np.all(np.diff(births) >= 0):
            raise StructureError("birth epochs must be sorted")
        if births.size and births[-1] >= self.death:
            raise StructureError("births must precede death")


@dataclass(frozen=True)
class SimConfig:
    """Simulation sizes and family-tree caps.

    The population cap counts individuals ever born; a tree that reaches
    it, or that still has a member alive at max_time, is scored as
    surviving (the induced bias toward survival is negligible away from
    criticality and is noted in reports).
    """

    N: int = 500
    T: float = 15.0
    seed: int = 0
    class_length: float = 1.0
    max_population: int = 10_000
    max_time: float = 200.0

    def __post_init__(self):
        if self.N < 1:
            raise StructureError("N must be at least 1")
        if self.T <= 0 or self.class_length <= 0 or self.max_time <= 0:
            raise StructureError("T, class_length and max_time must be positive")
        if self.max_population < 1:
            raise StructureError("max_population must be at least 1")


@dataclass(frozen=True)
class FamilyTreeResult:
    extinct: bool
    total_born: int
    cap_hit: str | None = None  # "population" | "time" | None


def _as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate `index` derived from one seed."""
    return np.random.default_rng([seed, index])


class _EventTables:
    """Per-phase competing-event layout for categorical draws."""

    def __init__(self, model: TmapModel):
        ensure_valid(model)
        n = model.n
        self.n = n
        self.total_rate = -np.diag(model.D0).copy()
        events_per_phase = []
        for i in range(n):
            ev = []
            for j in range(n):
                if j != i and model.D0[i, j] > 0:
                    ev.append((model.D0[i, j], 0, j))
            for j in range(n):
                if model.D1[i, j] > 0:
                    ev.append((model.D1[i, j], 1, j))
            if model.d[i] > 0:
                ev.append((model.d[i], 2, -1))
            events_per_phase.append(ev)
        width = max(len(ev) for ev in events_per_phase)
        self.cum = np.ones((n, width))
        self.kind = np.full((n, width), 2, dtype=np.int8)
        self.target = np.full((n, width), -1, dtype=np.intp)
        for i, ev in enumerate(events_per_phase):
            if not ev:
                continue
            rates = np.array([e[0] for e in ev])
            cum = np.cumsum(rates) / self.total_rate[i]
            cum[-1] = 1.0
            self.cum[i, :len(ev)] = cum
            self.cum[i, len(ev):] = 1.0
            self.kind[i, :len(ev)] = [e[1] for e in ev]
            self.target[i, :len(ev)] = [e[2] for e in ev]
        self.alpha_cum = np.cumsum(model.alpha)

    def draw_initial(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.searchsorted(self.alpha_cum, rng.random(size), side="right")


def simulate_trajectory(model: TmapModel, T: float,
                        rng: np.random.Generator | int | None = None,
                        trace_phases: bool = False) -> Trajectory:
    """Simulate one individual from birth until death or the horizon T."""
    if T <= 0:
        raise StructureError("T must be positive")
    rng = _as_rng(rng)
    tables = _EventTables(model)
    phase = int(tables.draw_initial(1, rng)[0])
    t = 0.0
    births: list[float] = []
    phases = [phase]
    death = math.inf
    while True:
        rate = tables.total_rate[phase]
        t += rng.exponential(1.0 / rate)
        if t >= T:
            break
        row = tables.cum[phase]
        idx = int(np.searchsorted(row, rng.random(), side="left"))
        kind = tables.kind[phase, idx]
        if kind == 2:
            death = t
            break
        target = int(tables.target[phase, idx])
        if kind == 1:
            births.append(t)
        phase = target
        if trace_phases:
            phases.append(phase)
    return Trajectory(births=np.array(births), death=death,
                      phases=tuple(phases) if trace_phases else None)


def _simulate_binned(model: TmapModel, N: int, n_classes: int, l: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized batch of N lives over n_classes classes of length l.

    Returns (counts, death_time): birth counts per class (boundary
    births assigned to the earlier class) and death epochs (inf for
    individuals alive at the horizon).
    """
    tables = _EventTables(model)
    horizon = n_classes * l
    counts = np.zeros((N, n_classes), dtype=np.int64)
    death_time = np.full(N, np.inf)
    ids = np.arange(N)
    t = np.zeros(N)
    phase = tables.draw_initial(N, rng)
    while ids.size:
        t = t + rng.exponential(1.0 / tables.total_rate[phase])
        alive_done = t >= horizon
        if alive_done.any():
            keep = ~alive_done
            ids, t, phase = ids[keep], t[keep], phase[keep]
            if not ids.size:
                break
        u = rng.random(ids.size)
        idx = (u[:, None] > tables.cum[phase]).sum(axis=1)
        kind = tables.kind[phase, idx]
        target = tables.target[phase, idx]
        births = kind == 1
        if births.any():
            cls = np.ceil(t[births] / l).astype(np.int64) - 1
            np.clip(cls, 0, n_classes - 1, out=cls)
            np.add.at(counts, (ids[births], cls), 1)
        dead = kind == 2
        if dead.any():
            death_time[ids[dead]] = t[dead]
        phase = np.where(kind == 0, target, np.where(births, target, phase))
        keep = ~dead
        ids, t, phase = ids[keep], t[keep], phase[keep]
    return counts, death_time


def _death_class(death_time: float, l: float) -> int:
    # right-open classes: a death exactly on a boundary belongs to the
    # earlier class
    return max(0, int(math.ceil(death_time / l)) - 1)


def encode_life_vector(traj: Trajectory, l: float, T: float) -> LifeVector:
    """Bin one trajectory into per-class birth counts.

    Death in class j yields j+1 count entries followed by -1; an
    individual alive at T yields floor(T/l) count entries and no marker.
    Events exactly on a class boundary belong to the earlier class.
    """
    if l <= 0 or T <= 0:
        raise StructureError("l and T must be positive")
    n_classes = int(math.floor(T / l + 1e-9))
    if n_classes < 1:
        raise StructureError("T shorter than one class")
    horizon = n_classes * l
    death = traj.death
    if death < math.inf and death <= horizon:
        last = _death_class(death, l)
        closing: tuple[int, ...] = (DEATH,)
    else:
        last = n_classes - 1
        closing = ()
    counts = [0] * (last + 1)
    for b in traj.births:
        if b > horizon:
            continue
        cls = max(0, int(math.ceil(b / l)) - 1)
        if cls <= last:
            counts[cls] += 1
    return LifeVector(tuple(counts) + closing, l)


def censor_sample(sample: LifeVectorSample, prob: float,
                  rng: np.random.Generator | int | None = None) -> LifeVectorSample:
    """Mask each count entry independently with the given probability."""
    if not 0 <= prob <= 1:
        raise StructureError("censoring probability must lie in [0, 1]")
    rng = _as_rng(rng)
    out = []
    for v in sample:
        entries = tuple(CENSORED if e >= 0 and rng.random() < prob else e
                        for e in v.entries)
        out.append(LifeVector(entries, v.class_length))
    return LifeVectorSample(tuple(out))


def simulate_sample(model: TmapModel, N: int, T: float, l: float = 1.0,
                    rng: np.random.Generator | int | None = None,
                    censor_prob: float = 0.0) -> LifeVectorSample:
    """Simulate N individuals and encode their life vectors."""
    if N < 1:
        raise StructureError("N must be at least 1")
    if l <= 0 or T <= 0:
        raise StructureError("l and T must be positive")
    rng = _as_rng(rng)
    n_classes = int(math.floor(T / l + 1e-9))
    if n_classes < 1:
        raise StructureError("T shorter than one class")
    counts, death_time = _simulate_binned(model, N, n_classes, l, rng)
    vectors = []
    for i in range(N):
        if math.isfinite(death_time[i]):
            last = _death_class(float(death_time[i]), l)
            entries = tuple(int(c) for c in counts[i, :last + 1]) + (DEATH,)
        else:
            entries = tuple(int(c) for c in counts[i])
        vectors.append(LifeVector(entries, l))
    sample = LifeVectorSample(tuple(vectors))
    if censor_prob > 0:
        sample = censor_sample(sample, censor_prob, rng)
    return sample


# ---------------------------------------------------------------------------
# aggregation to global rates

def _aggregate_arrays(counts: np.ndarray, death_class: np.ndarray,
                      observed_len: np.ndarray, l: float) -> GlobalRates:
    """Rule shared by aggregate_rates and the fast simulation path.

    counts[i, x] is individual i's count at class x (-1 where the entry
    is censored or absent), death_class[i] the 0-based class of death
    (-1 if none observed), observed_len[i] the number of entries before
    any death marker.
    """
    n_classes = int(observed_len.max(initial=0))
    if n_classes == 0:
        raise StructureError("sample contains no observed classes")
    present = counts[:, :n_classes] >= 0
    alive_n = present.sum(axis=0).astype(float)
    births = np.where(present, counts[:, :n_classes], 0).sum(axis=0).astype(float)
    deaths = np.zeros(n_classes)
    for x in np.arange(n_classes):
        deaths[x] = np.sum((death_class == x) & present[:, x])
    with np.errstate(invalid="ignore", divide="ignore"):
        death_frac = np.where(alive_n > 0, deaths / alive_n, np.nan)
        births_per_class = np.where(alive_n > 0, births / alive_n, np.nan)
    # convert class-level fractions to per-year rates so that the
    # class-length compounding rules recover them exactly
    if l == 1.0:
        mort, fert = death_frac, births_per_class
    else:
        with np.errstate(invalid="ignore"):
            mort = 1.0 - (1.0 - death_frac) ** (1.0 / l)
            fert = np.where(death_frac > 0,
                            births_per_class * mort / death_frac,
                            births_per_class / l)
    return GlobalRates(class_length=l, fertility=fert, mortality=mort,
                       counts=alive_n)


def aggregate_rates(sample: LifeVectorSample) -> GlobalRates:
    """Per-class death fractions and mean births, as per-year rates.

    For each class x: the mortality numerator counts individuals whose
    count entry at x is followed by the death marker, the denominator
    counts individuals with a count entry at x (censored entries join
    neither), and fertility divides total births at x by the same
    denominator.  Classes with no observed individuals are missing.
    """
    max_len = max(len(v) - (1 if v.died else 0) for v in sample)
    counts = np.full((sample.N, max_len), -1, dtype=np.int64)
    death_class = np.full(sample.N, -1, dtype=np.int64)
    observed_len = np.zeros(sample.N, dtype=np.int64)
    for i, v in enumerate(sample):
        entries = v.entries[:-1] if v.died else v.entries
        observed_len[i] = len(entries)
        for x, e in enumerate(entries):
            if e >= 0:
                counts[i, x] = e
        if v.died and entries and entries[-1] >= 0:
            death_class[i] = len(entries) - 1
    return _aggregate_arrays(counts, death_class, observed_len,
                             sample.class_length)


def simulate_rates(model: TmapModel, N: int, T: float, l: float = 1.0,
                   rng: np.random.Generator | int | None = None) -> GlobalRates:
    """Simulate N lives and aggregate, without materializing vectors."""
    rng = _as_rng(rng)
    n_classes = int(math.floor(T / l + 1e-9))
    counts, death_time = _simulate_binned(model, N, n_classes, l, rng)
    death_class = np.full(N, -1, dtype=np.int64)
    observed_len = np.full(N, n_classes, dtype=np.int64)
    finite = np.isfinite(death_time)
    if finite.any():
        cls = np.maximum(0, np.ceil(death_time[finite] / l).astype(np.int64) - 1)
        death_class[finite] = cls
        observed_len[finite] = cls + 1
    masked = counts.copy()
    masked[np.arange(n_classes) >= observed_len[:, None]] = -1
    return _aggregate_arrays(masked, death_class, observed_len, l)


# ---------------------------------------------------------------------------
# family trees

def simulate_family_tree(model: TmapModel, config: SimConfig,
                         rng: np.random.Generator | int | None = None
                         ) -> FamilyTreeResult:
    """Follow one family (children restart from alpha) until it dies out
    or a cap is hit."""
    rng = _as_rng(rng)
    tables = _EventTables(model)
    stack: list[tuple[float, int]] = [(0.0, int(tables.draw_initial(1, rng)[0]))]
    total_born = 1
    while stack:
        t, phase = stack.pop()
        while True:
            t += rng.exponential(1.0 / tables.total_rate[phase])
            if t >= config.max_time:
                return FamilyTreeResult(False, total_born, "time")
            row = tables.cum[phase]
            idx = int(np.searchsorted(row, rng.random(), side="left"))
            kind = tables.kind[phase, idx]
            if kind == 2:
                break
            target = int(tables.target[phase, idx])
            if kind == 1:
                total_born += 1
                if total_born >= config.max_population:
                    return FamilyTreeResult(False, total_born, "population")
                stack.append((t, int(tables.draw_initial(1, rng)[0])))
            phase = target
    return FamilyTreeResult(True, total_born, None)


def simulate_family_trees(model: TmapModel, n_trees: int, config: SimConfig,
                          rng: np.random.Generator | int | None = None
                          ) -> np.ndarray:
    """Extinction flags for many independent trees, generation-batched."""
    rng = _as_rng(rng)
    tables = _EventTables(model)
    survived = np.zeros(n_trees, dtype=bool)
    total_born = np.ones(n_trees, dtype=np.int64)
    tree = np.arange(n_trees)
    t = np.zeros(n_trees)
    phase = tables.draw_initial(n_trees, rng)
    while tree.size:
        child_tree: list[np.ndarray] = []
        child_t: list[np.ndarray] = []
        while tree.size:
            t = t + rng.exponential(1.0 / tables.total_rate[phase])
            timed_out = t >= config.max_time
            if timed_out.any():
                survived[tree[timed_out]] = True
                keep = ~timed_out
                tree, t, phase = tree[keep], t[keep], phase[keep]
                if not tree.size:
                    break
            u = rng.random(tree.size)
            idx = (u[:, None] > tables.cum[phase]).sum(axis=1)
            kind = tables.kind[phase, idx]
            target = tables.target[phase, idx]
            births = kind == 1
            if births.any():
                child_tree.append(tree[births].copy())
                child_t.append(t[births].copy())
                np.add.at(total_born, tree[births], 1)
            dead = kind == 2
            phase = np.where(kind == 0, target, np.where(births, target, phase))
            keep = ~dead
            tree, t, phase = tree[keep], t[keep], phase[keep]
        if not child_tree:
            break
        survived |= total_born >= config.max_population
        tree = np.concatenate(child_tree)
        t = np.concatenate(child_t)
        live = ~survived[tree]
        tree, t = tree[live], t[live]
        phase = tables.draw_initial(tree.size, rng)
    return ~survived
