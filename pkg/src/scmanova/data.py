"""Grouped semicontinuous data, presence patterns and co-presence filtering.

A semicontinuous observation is a nonnegative vector whose exact zeros
mark absent components. The continuous part of the model lives on the
log scale of the positive entries, so absent entries are carried as
masked values (``numpy.ma``) and never as a number that could leak into
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import InsufficientVariablesError, ValidationError

__all__ = [
    "SemicontDataset",
    "PresencePattern",
    "LogData",
    "FilterOutcome",
    "ingest",
    "to_log_data",
    "filter_variables",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SemicontDataset:
    """Validated n x p matrix of nonnegative values with group ids.

    ``groups`` holds integer ids in ``1..K`` (first-appearance order of
    the raw labels); ``group_labels[k - 1]`` is the raw label of id ``k``.
    """

    values: np.ndarray
    groups: np.ndarray
    variable_names: tuple[str, ...]
    group_labels: tuple = ()

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def K(self) -> int:
        return int(self.groups.max()) if self.n else 0

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.K + 1)[1:]

    def with_groups(self, groups: Sequence) -> SemicontDataset:
        """Return a copy carrying new group labels (rows untouched)."""
        return ingest(self.values, groups, self.variable_names)


def ingest(values, groups, variable_names: Sequence[str] | None = None) -> SemicontDataset:
    """Validate raw data and remap group labels to ``1..K``.

    Raises :class:`ValidationError` on negative or non-finite cells,
    shape mismatches, or when fewer than one row per group is present.
    """
    x = np.array(values, dtype=float, copy=True)
    if x.ndim != 2:
        raise ValidationError(f"values must be a 2-d matrix, got {x.ndim} dimension(s)")
    n, p = x.shape
    labels = list(groups)
    if len(labels) != n:
        raise ValidationError(f"{len(labels)} group labels for {n} rows")
    if n == 0 or p == 0:
        raise ValidationError("empty data matrix")

    bad = ~np.isfinite(x)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValidationError(f"non-finite value at row {i}, column {j}")
    neg = x < 0
    if neg.any():
        i, j = np.argwhere(neg)[0]
        raise ValidationError(f"negative value {float(x[i, j])!r} at row {i}, column {j}")

    order: dict = {}
    for lab in labels:
        order.setdefault(lab, len(order) + 1)
    ids = np.array([order[lab] for lab in labels], dtype=np.int64)

    if variable_names is None:
        variable_names = tuple(f"V{j + 1}" for j in range(p))
    else:
        variable_names = tuple(str(v) for v in variable_names)
        if len(variable_names) != p:
            raise ValidationError(f"{len(variable_names)} variable names for {p} columns")

    return SemicontDataset(
        values=_readonly(x),
        groups=_readonly(ids),
        variable_names=variable_names,
        group_labels=tuple(order),
    )


@dataclass(frozen=True)
class PresencePattern:
    """Binary presence mask of one observation and its support."""

    mask: np.ndarray

    @cached_property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.mask))

    @property
    def count(self) -> int:
        return len(self.support)

    @property
    def key(self) -> bytes:
        return np.packbits(self.mask).tobytes() + self.mask.size.to_bytes(4, "little")


@dataclass(frozen=True)
class LogData:
    """Log-scale values with an explicit absence mask.

    ``logs`` is a masked array; ``logs.mask`` is True exactly where the
    raw value was zero. ``columns`` maps local column positions back to
    the original dataset columns.
    """

    logs: np.ma.MaskedArray
    columns: tuple[int, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.logs.shape[0]

    @property
    def p(self) -> int:
        return self.logs.shape[1]

    @cached_property
    def present(self) -> np.ndarray:
        return _readonly(~np.ma.getmaskarray(self.logs))

    @cached_property
    def filled(self) -> np.ndarray:
        """Log values with absent entries set to 0 (only ever multiplied by presence)."""
        return _readonly(self.logs.filled(0.0))

    @cached_property
    def counts(self) -> np.ndarray:
        return _readonly(self.present.sum(axis=1))

    @cached_property
    def pattern_groups(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(support, rows)`` for each distinct presence pattern, in sorted mask order."""
        masks, inverse = np.unique(self.present, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(masks) + 1))
        return [
            (_readonly(np.flatnonzero(m)), _readonly(order[bounds[u] : bounds[u + 1]]))
            for u, m in enumerate(masks)
        ]

    @property
    def patterns(self) -> list[PresencePattern]:
        return [PresencePattern(_readonly(row.copy())) for row in self.present]

    def select(self, kept: Sequence[int]) -> LogData:
        """Restrict to the given local column positions."""
        kept = list(kept)
        cols = self.columns or tuple(range(self.p))
        return LogData(self.logs[:, kept], tuple(cols[j] for j in kept))


def to_log_data(ds: SemicontDataset) -> LogData:
    """Take logs of positive entries; zeros become masked (absent)."""
    present = ds.values > 0
    logs = np.zeros_like(ds.values)
    np.log(ds.values, out=logs, where=present)
    return LogData(np.ma.MaskedArray(logs, mask=~present), tuple(range(ds.p)))


@dataclass(frozen=True)
class FilterOutcome:
    """Variables kept after co-presence filtering, plus the removal log.

    ``removed`` lists ``(column, absence_count)`` in removal order.
    Indices refer to the columns of the :class:`LogData` that was filtered.
    """

    kept: tuple[int, ...]
    removed: tuple[tuple[int, int], ...]

    @property
    def p_star(self) -> int:
        return len(self.kept)


def filter_variables(ld: LogData) -> FilterOutcome:
    """Drop variables until every kept pair is co-present at least once.

    Never-present variables go first (in index order). After that, the
    variable with the most absences among those in a violating pair is
    removed, lowest index on ties, and the violations are updated.
    """
    y = ld.present.astype(np.int64)
    p = y.shape[1]
    absences = ld.n - y.sum(axis=0)
    keep = np.ones(p, dtype=bool)
    removed: list[tuple[int, int]] = []

    for j in np.flatnonzero(absences == ld.n):
        keep[j] = False
        removed.append((int(j), int(absences[j])))

    zero_pairs = (y.T @ y) == 0
    np.fill_diagonal(zero_pairs, False)
    violations = zero_pairs[:, keep].sum(axis=1)
    violations[~keep] = 0
    while True:
        involved = np.flatnonzero(violations > 0)
        if involved.size == 0:
            break
        # argmax returns the first maximum, i.e. the lowest index
        j = int(involved[np.argmax(absences[involved])])
        keep[j] = False
        removed.append((j, int(absences[j])))
        violations -= zero_pairs[:, j]
        violations[j] = 0

    kept = tuple(int(j) for j in np.flatnonzero(keep))
    if len(kept) < 2:
        raise InsufficientVariablesError(
            f"insufficient co-observed variables: {len(kept)} of {p} survive filtering"
        )
    return FilterOutcome(kept, tuple(removed))
