"""Data containers and file formats.

Two dataset shapes feed the fitting routines: per-individual life
vectors (birth counts per age class with ``-1`` marking death in the
previous class and ``-2`` marking a censored class) and global
age-specific rates (population-average per-year fertility and mortality
by age class).  This module also owns the CSV/JSON readers and writers
shared by the library and the command line, all of which write
atomically (temp file + rename) and round-trip floats exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import StructureError
from .model import AtmmppParams, TmapModel


# ---------------------------------------------------------------------------
# containers

DEATH = -1
CENSORED = -2


@dataclass(frozen=True)
class LifeVector:
    """Birth counts per age class for one individual.

    Entries are nonnegative counts, ``-2`` for a class with no
    information, or a single final ``-1`` meaning the individual died
    during the previous entry's class.
    """

    entries: tuple[int, ...]
    class_length: float = 1.0

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if len(entries) == 0:
            raise StructureError("life vector needs at least one entry")
        if self.class_length <= 0:
            raise StructureError("class_length must be positive")
        for e in entries:
            if e < CENSORED:
                raise StructureError(f"invalid life-vector entry {e}")
        if DEATH in entries[:-1] or entries.count(DEATH) > 1:
            raise StructureError("-1 must appear at most once, as the final entry")

    @property
    def died(self) -> bool:
        return self.entries[-1] == DEATH

    @property
    def max_count(self) -> int:
        """Largest nonnegative entry, or -1 if there are none."""
        return max((e for e in self.entries if e >= 0), default=-1)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LifeVectorSample:
    """Life vectors sharing one class length."""

    vectors: tuple[LifeVector, ...]

    def __post_init__(self):
        vectors = tuple(self.vectors)
        object.__setattr__(self, "vectors", vectors)
        if not vectors:
            raise StructureError("sample must contain at least one vector")
        l = vectors[0].class_length
        for v in vectors:
            if v.class_length != l:
                raise StructureError("all vectors in a sample must share class_length")

    @classmethod
    def from_lists(cls, rows: Iterable[Sequence[int]],
                   class_length: float = 1.0) -> "LifeVectorSample":
        return cls(tuple(LifeVector(tuple(r), class_length) for r in rows))

    @property
    def class_length(self) -> float:
        return self.vectors[0].class_length

    @property
    def N(self) -> int:
        return len(self.vectors)

    @property
    def max_count(self) -> int:
        """Largest birth count in the sample (0 when fully censored)."""
        return max(0, max(v.max_count for v in self.vectors))

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)


@dataclass(frozen=True)
class GlobalRates:
    """Age-specific per-year fertility and mortality for classes 0..M.

    ``fertility[x]`` is the expected births per year for an individual
    in class x, ``mortality[x]`` the probability of dying within a year;
    NaN marks a missing value.  ``counts``, when present, holds the
    number of observed individuals behind each row.  Classes span
    ``[x*class_length, (x+1)*class_length)``.
    """

    class_length: float
    fertility: np.ndarray
    mortality: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.fertility, dtype=float).reshape(-1)
        m = np.asarray(self.mortality, dtype=float).reshape(-1)
        object.__setattr__(self, "fertility", f)
        object.__setattr__(self, "mortality", m)
        if self.class_length <= 0:
            raise StructureError("class_length must be positive")
        if f.shape != m.shape or f.size == 0:
            raise StructureError("fertility and mortality must be equal-length, nonempty")
        if self.counts is not None:
            c = np.asarray(self.counts, dtype=float).reshape(-1)
            object.__setattr__(self, "counts", c)
            if c.shape != f.shape:
                raise StructureError("counts length must match the rate columns")
            if np.any(c[~np.isnan(c)] < 0):
                raise StructureError("counts must be nonnegative")
        with np.errstate(invalid="ignore"):
            if np.any((m < 0) | (m > 1)):
                raise StructureError("mortality values must lie in [0, 1]")
            if np.any(f < 0):
                raise StructureError("fertility values must be nonnegative")
        if self.counts is None and not (np.isfinite(f).any() or np.isfinite(m).any()):
            # fully-missing tables are representable only when raw
            # observation counts document why (e.g. everything censored)
            raise StructureError("rates table has no present values")
        for arr in (f, m, self.counts):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_classes(self) -> int:
        return self.fertility.shape[0]

    @property
    def ages(self) -> np.ndarray:
        """Class start times 0, l, 2l, ..."""
        return np.arange(self.n_classes) * self.class_length


# ---------------------------------------------------------------------------
# low-level helpers

def _fmt(x: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    """Write a file atomically: temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise StructureError(f"{path}: invalid JSON: {exc}") from exc


def _sidecar_path(path: str) -> str:
    return path + ".json"


# ---------------------------------------------------------------------------
# model JSON

def write_model(path: str, model: TmapModel,
                params: AtmmppParams | None = None) -> None:
    """Write a model JSON file, optionally carrying its chain parameters."""
    obj = model.to_json_dict()
    if params is not None:
        obj["atmmpp"] = {
            "gamma": params.gamma.tolist(),
            "mu": params.mu.tolist(),
            "lambda": params.lam.tolist(),
        }
    write_json(path, obj)


def read_model(path: str) -> tuple[TmapModel, AtmmppParams | None]:
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise StructureError(f"{path}: model file must hold a JSON object")
    model = TmapModel.from_json_dict(obj)
    params = None
    if "atmmpp" in obj:
        try:
            raw = obj["atmmpp"]
            params = AtmmppParams(
                gamma=np.asarray(raw["gamma"], dtype=float),
                mu=np.asarray(raw["mu"], dtype=float),
                lam=np.asarray(raw["lambda"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureError(f"{path}: malformed atmmpp block: {exc}") from exc
    return model, params


# ---------------------------------------------------------------------------
# global-rates CSV

RATES_HEADER = ("age", "fertility", "mortality")


def write_global_rates(path: str, rates: GlobalRates) -> None:
    """Write the rates CSV plus a sidecar JSON carrying the class length."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = list(RATES_HEADER) + (["count"] if rates.counts is not None else [])
    writer.writerow(header)
    for i in range(rates.n_classes):
        row = [_fmt(i * rates.class_length),
               _fmt(rates.fertility[i]),
               _fmt(rates.mortality[i])]
        if rates.counts is not None:
            row.append(_fmt(rates.counts[i]))
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())
    write_json(_sidecar_path(path), {"class_length": rates.class_length})


def _parse_cell(text: str, path: str, lineno: int, what: str) -> float:
    text = text.strip()
    if text == "":
        return float("nan")
    try:
        return float(text)
    except ValueError as exc:
        raise StructureError(f"{path} line {lineno}: bad {what} value {text!r}") from exc


def read_global_rates(path: str, class_length: float | None = None) -> GlobalRates:
    """Read a rates CSV; class length from the argument, sidecar, or 1.0."""
    if class_length is None:
        sidecar = _sidecar_path(path)
        if os.path.exists(sidecar):
            meta = read_json(sidecar)
            class_length = float(meta.get("class_length", 1.0))
        else:
            class_length = 1.0
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise StructureError(f"{path}: empty file") from None
        cols = [c.strip().lower() for c in header]
        if cols[:3] != list(RATES_HEADER) or len(cols) > 4 or \
                (len(cols) == 4 and cols[3] != "count"):
            raise StructureError(
                f"{path} line 1: expected header age,fertility,mortality[,count]")
        has_counts = len(cols) == 4
        ages, ferts, morts, counts = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise StructureError(f"{path} line {lineno}: expected {len(cols)} cells, "
                                     f"got {len(row)}")
            ages.append(_parse_cell(row[0], path, lineno, "age"))
            ferts.append(_parse_cell(row[1], path, lineno, "fertility"))
            morts.append(_parse_cell(row[2], path, lineno, "mortality"))
            if has_counts:
                counts.append(_parse_cell(row[3], path, lineno, "count"))
    if not ages:
        raise StructureError(f"{path}: no data rows")
    expected = np.arange(len(ages)) * class_length
    if not np.allclose(np.asarray(ages), expected, atol=1e-9, rtol=1e-9):
        raise StructureError(f"{path}: age column must be 0, l, 2l, ... "
                             f"with l={class_length}")
    return GlobalRates(class_length=class_length,
                       fertility=np.asarray(ferts),
                       mortality=np.asarray(morts),
                       counts=np.asarray(counts) if has_counts else None)


# ---------------------------------------------------------------------------
# life-vector files

def write_life_vectors(path: str, sample: LifeVectorSample) -> None:
    """Write vectors as JSON (``.json`` suffix) or bare CSV lines."""
    if path.endswith(".json"):
        obj = {"class_length": sample.class_length,
               "vectors": [list(v.entries) for v in sample]}
        write_json(path, obj)
        return
    lines = [",".join(str(e) for e in v.entries) for v in sample]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_life_vectors(path: str, class_length: float | None = None) -> LifeVectorSample:
    """Read a life-vector CSV or JSON envelope.

    For the JSON envelope the embedded class length wins; for bare CSV
    the argument applies (default 1.0).
    """
    with open(path, encoding="utf-8") as fh:
        head = fh.read(1)
        fh.seek(0)
        if path.endswith(".json") or head == "{":
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise StructureError(f"{path}: invalid JSON: {exc}") from exc
            try:
                l = float(obj["class_length"])
                rows = obj["vectors"]
            except (KeyError, TypeError) as exc:
                raise StructureError(
                    f"{path}: envelope needs class_length and vectors") from exc
            try:
                return LifeVectorSample.from_lists(rows, l)
            except (StructureError, TypeError, ValueError) as exc:
                raise StructureError(f"{path}: {exc}") from exc
        l = 1.0 if class_length is None else class_length
        vectors = []
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries = tuple(int(cell) for cell in line.split(","))
            except ValueError as exc:
                raise StructureError(f"{path} line {lineno}: entries must be "
                                     f"integers") from exc
            try:
                vectors.append(LifeVector(entries, l))
            except StructureError as exc:
                raise StructureError(f"{path} line {lineno}: {exc}") from exc
    if not vectors:
        raise StructureError(f"{path}: no vectors")
    return LifeVectorSample(tuple(vectors))


def detect_format(path: str) -> str:
    """Classify a data file as ``"rates"`` or ``"vectors"`` by its header."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        raise StructureError(f"{path}: empty file")
    if first.startswith("{"):
        return "vectors"
    cells = [c.strip().lower() for c in first.split(",")]
    if cells[:3] == list(RATES_HEADER):
        return "rates"
    try:
        for c in cells:
            int(c)
    except ValueError:
        raise StructureError(
            f"{path}: cannot auto-detect format from header {first!r}; "
            f"pass an explicit format") from None
    return "vectors"


# ---------------------------------------------------------------------------
# curve / band / report tables

def write_table(path: str, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    """Write aligned columns as CSV with exact float formatting."""
    n = len(columns[0])
    for col in columns:
        if len(col) != n:
            raise StructureError("table columns must have equal length")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(list(header))
    for i in range(n):
        writer.writerow([_fmt(float(col[i])) for col in columns])
    atomic_write_text(path, buf.getvalue())


def read_table(path: str, expected_header: Sequence[str]) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header] != list(expected_header):
            raise StructureError(f"{path}: expected header {','.join(expected_header)}")
        rows = [row for row in reader if row]
    cols = {name: np.array([_parse_cell(r[i], path, j + 2, name)
                            for j, r in enumerate(rows)])
            for i, name in enumerate(expected_header)}
    return cols
