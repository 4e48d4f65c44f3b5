"""Cohort data schema, validation, and CSV ingestion/serialization.

A cohort couples a small labeled subset carrying the current-status outcome
delta = I(T <= C) with a larger unlabeled remainder. Every subject carries
baseline covariates Z, the follow-up time C, and K surrogate event times
observed censored as (X_k, D_k) with X_k = min(T_k, C) and D_k = I(T_k <= C).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .exceptions import InvalidArgumentError, SchemaError


@dataclass(frozen=True)
class Subject:
    """One cohort row. ``delta`` is present exactly when ``labeled``."""

    id: str
    labeled: bool
    delta: int | None
    C: float
    Z: np.ndarray
    X: np.ndarray
    Dlt: np.ndarray


@dataclass(frozen=True)
class RegimeConfig:
    """How to decide between the comparable and large-unlabeled regimes."""

    regime: str = "auto"
    rho_threshold: float = 0.1

    def __post_init__(self):
        if self.regime not in ("comparable", "large_unlabeled", "auto"):
            raise InvalidArgumentError(f"unknown regime {self.regime!r}")
        if not 0.0 < self.rho_threshold < 1.0:
            raise InvalidArgumentError("rho_threshold must lie in (0, 1)")


class Dataset:
    """Immutable columnar cohort.

    Arrays are row-aligned and read-only: ``labeled`` (bool, N), ``delta``
    (float, N; NaN on unlabeled rows), ``C`` (N), ``Z`` (N x p), ``X`` (N x K),
    ``Dlt`` (int8, N x K). Row order is preserved by construction and I/O.
    """

    __slots__ = ("ids", "labeled", "delta", "C", "Z", "X", "Dlt")

    def __init__(self, ids, labeled, delta, C, Z, X, Dlt):
        ids = tuple(str(s) for s in ids)
        labeled = np.asarray(labeled, dtype=bool)
        delta = np.asarray(delta, dtype=float)
        C = np.asarray(C, dtype=float)
        Z = np.asarray(Z, dtype=float)
        X = np.asarray(X, dtype=float)
        Dlt = np.asarray(Dlt, dtype=np.int8)
        N = len(ids)
        if Z.ndim != 2 or X.ndim != 2 or Dlt.ndim != 2:
            raise InvalidArgumentError("Z, X, Dlt must be two-dimensional")
        shapes_ok = (
            labeled.shape == (N,)
            and delta.shape == (N,)
            and C.shape == (N,)
            and Z.shape[0] == N
            and X.shape[0] == N
            and Dlt.shape == X.shape
        )
        if not shapes_ok:
            raise InvalidArgumentError("row counts of ids/labeled/delta/C/Z/X/Dlt disagree")
        if N == 0:
            raise InvalidArgumentError("a cohort needs at least one subject")
        if not np.all(np.isfinite(C)) or np.any(C <= 0.0):
            bad = int(np.flatnonzero(~(np.isfinite(C) & (C > 0.0)))[0])
            raise InvalidArgumentError(f"row {bad + 1}: follow-up C must be finite and > 0")
        if not np.all(np.isfinite(Z)):
            raise InvalidArgumentError("covariates Z must be finite")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("surrogate times X must be finite")
        if not np.all((Dlt == 0) | (Dlt == 1)):
            raise InvalidArgumentError("surrogate indicators D must be 0/1")
        if np.any(X > C[:, None]):
            bad = int(np.flatnonzero(np.any(X > C[:, None], axis=1))[0])
            raise InvalidArgumentError(f"row {bad + 1}: surrogate time X exceeds follow-up C")
        censored_mismatch = (Dlt == 0) & (X != C[:, None])
        if np.any(censored_mismatch):
            bad = int(np.flatnonzero(np.any(censored_mismatch, axis=1))[0])
            raise InvalidArgumentError(f"row {bad + 1}: censored surrogate must store X = C")
        has_delta = np.isfinite(delta)
        if not np.array_equal(has_delta, labeled):
            bad = int(np.flatnonzero(has_delta != labeled)[0])
            raise InvalidArgumentError(f"row {bad + 1}: delta must be present exactly on labeled rows")
        lab_delta = delta[labeled]
        if not np.all((lab_delta == 0.0) | (lab_delta == 1.0)):
            raise InvalidArgumentError("labeled delta values must be 0/1")
        for arr in (labeled, delta, C, Z, X, Dlt):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labeled", labeled)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Dlt", Dlt)

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def N(self) -> int:
        return len(self.ids)

    @property
    def n(self) -> int:
        return int(np.sum(self.labeled))

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def subjects(self) -> Iterator[Subject]:
        for i in range(self.N):
            lab = bool(self.labeled[i])
            yield Subject(
                id=self.ids[i],
                labeled=lab,
                delta=int(self.delta[i]) if lab else None,
                C=float(self.C[i]),
                Z=self.Z[i].copy(),
                X=self.X[i].copy(),
                Dlt=self.Dlt[i].copy(),
            )

    @classmethod
    def from_subjects(cls, subjects) -> "Dataset":
        subjects = list(subjects)
        ids = [s.id for s in subjects]
        labeled = [s.labeled for s in subjects]
        delta = [float(s.delta) if s.delta is not None else np.nan for s in subjects]
        C = [s.C for s in subjects]
        Z = np.array([np.asarray(s.Z, dtype=float) for s in subjects])
        X = np.array([np.asarray(s.X, dtype=float) for s in subjects])
        Dlt = np.array([np.asarray(s.Dlt) for s in subjects])
        return cls(ids, labeled, delta, C, Z, X, Dlt)

    def take(self, index) -> "Dataset":
        """Row subset in the given order (repeats allowed)."""
        index = np.asarray(index, dtype=int)
        return Dataset(
            ids=[self.ids[i] for i in index],
            labeled=self.labeled[index],
            delta=self.delta[index],
            C=self.C[index],
            Z=self.Z[index],
            X=self.X[index],
            Dlt=self.Dlt[index],
        )

    def content_hash(self) -> str:
        import hashlib

        hsh = hashlib.sha256()
        for arr in (self.labeled, self.delta, self.C, self.Z, self.X, self.Dlt):
            hsh.update(np.ascontiguousarray(arr).tobytes())
        hsh.update(("|".join(self.ids)).encode())
        return hsh.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.labeled, other.labeled)
            and np.array_equal(self.delta, other.delta, equal_nan=True)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.Z, other.Z)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.Dlt, other.Dlt)
        )

    def __repr__(self):
        return f"Dataset(N={self.N}, n={self.n}, p={self.p}, K={self.K})"


def _expected_header(p: int, K: int) -> list[str]:
    return (
        ["id", "labeled", "delta", "C"]
        + [f"Z{j}" for j in range(1, p + 1)]
        + [f"X{k}" for k in range(1, K + 1)]
        + [f"D{k}" for k in range(1, K + 1)]
    )


def _parse_header(header: list[str]) -> tuple[int, int]:
    if header[:4] != ["id", "labeled", "delta", "C"]:
        raise SchemaError("header must start with id,labeled,delta,C")
    p = 0
    pos = 4
    while pos < len(header) and header[pos] == f"Z{p + 1}":
        p += 1
        pos += 1
    K = 0
    while pos < len(header) and header[pos] == f"X{K + 1}":
        K += 1
        pos += 1
    if p < 1 or K < 1 or header != _expected_header(p, K):
        raise SchemaError("header must be id,labeled,delta,C,Z1..Zp,X1..XK,D1..DK")
    return p, K


def load_dataset(path) -> Dataset:
    """Read a cohort CSV, validating the schema row by row.

    Schema (header required): ``id,labeled,delta,C,Z1..Zp,X1..XK,D1..DK``
    with ``delta`` empty on unlabeled rows. Errors name the offending row
    (1-based, excluding the header) and the violated rule.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: missing header") from None
        p, K = _parse_header(header)
        width = len(header)
        ids, labeled, delta, C = [], [], [], []
        Z, X, Dlt = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != width:
                raise SchemaError(f"row {row_no}: expected {width} fields, got {len(row)}")
            try:
                lab_raw = row[1].strip()
                if lab_raw not in ("0", "1"):
                    raise SchemaError(f"row {row_no}: labeled must be 0 or 1")
                lab = lab_raw == "1"
                d_raw = row[2].strip()
                if lab:
                    if d_raw not in ("0", "1"):
                        raise SchemaError(f"row {row_no}: labeled row needs delta in {{0,1}}")
                    d = float(d_raw)
                else:
                    if d_raw != "":
                        raise SchemaError(f"row {row_no}: delta must be empty on unlabeled rows")
                    d = np.nan
                c = float(row[3])
                z = [float(v) for v in row[4 : 4 + p]]
                x = [float(v) for v in row[4 + p : 4 + p + K]]
                dl_raw = row[4 + p + K :]
                if any(v.strip() not in ("0", "1") for v in dl_raw):
                    raise SchemaError(f"row {row_no}: D indicators must be 0 or 1")
                dl = [int(v) for v in dl_raw]
            except SchemaError:
                raise
            except ValueError as exc:
                raise SchemaError(f"row {row_no}: {exc}") from None
            if not (np.isfinite(c) and c > 0.0):
                raise SchemaError(f"row {row_no}: follow-up C must be finite and > 0")
            for k in range(K):
                if x[k] > c:
                    raise SchemaError(f"row {row_no}: X{k + 1} > C violates X_k <= C")
                if dl[k] == 0 and x[k] != c:
                    raise SchemaError(f"row {row_no}: D{k + 1}=0 requires X{k + 1} = C")
            ids.append(row[0])
            labeled.append(lab)
            delta.append(d)
            C.append(c)
            Z.append(z)
            X.append(x)
            Dlt.append(dl)
    if not ids:
        raise SchemaError("file has a header but no data rows")
    try:
        return Dataset(ids, labeled, delta, C, np.array(Z), np.array(X), np.array(Dlt))
    except InvalidArgumentError as exc:
        raise SchemaError(str(exc)) from None


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(dataset: Dataset, path) -> None:
    """Write the cohort CSV; floats carry 17 significant digits so that
    ``load_dataset(save_dataset(d)) == d`` bit-exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(dataset.p, dataset.K))
        for i in range(dataset.N):
            lab = bool(dataset.labeled[i])
            row = [
                dataset.ids[i],
                "1" if lab else "0",
                str(int(dataset.delta[i])) if lab else "",
                _fmt(dataset.C[i]),
            ]
            row += [_fmt(v) for v in dataset.Z[i]]
            row += [_fmt(v) for v in dataset.X[i]]
            row += [str(int(v)) for v in dataset.Dlt[i]]
            writer.writerow(row)


def resolve_regime(dataset: Dataset, config: RegimeConfig | None = None) -> str:
    """Resolve ``auto`` to a concrete regime from the labeled proportion n/N."""
    config = config or RegimeConfig()
    if config.regime != "auto":
        return config.regime
    if dataset.N == 0:
        raise InvalidArgumentError("empty dataset")
    rho = dataset.n / dataset.N
    return "large_unlabeled" if rho < config.rho_threshold else "comparable"
