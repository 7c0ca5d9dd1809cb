"""Closed-form penalized estimators of the two-part model.

The discrete part is estimated per group (or pooled under the null) from
the distribution of presence counts; the continuous part uses pairwise
available residual cross-products. The ridge penalty only touches the
diagonal of the covariance, so ``sigma(lam) = scatter + diag(lam)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import LogData
from .exceptions import InternalInvariantError, ValidationError

__all__ = [
    "ModelParams",
    "PenaltyVector",
    "as_penalty",
    "group_codes",
    "estimate_pi",
    "estimate_mu",
    "estimate_sigma",
    "pairwise_scatter",
    "residuals",
    "fit_model",
    "fit",
]


@dataclass(frozen=True)
class PenaltyVector:
    """Nonnegative per-variable ridge penalty."""

    lam: np.ndarray
    scalar_mode: bool

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ValidationError("penalty must be a vector")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValidationError("penalty entries must be finite and >= 0")
        if self.scalar_mode and lam.size and np.any(lam != lam[0]):
            raise ValidationError("scalar-mode penalty must have identical entries")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def scalar(cls, value: float, p: int) -> PenaltyVector:
        return cls(np.full(p, float(value)), True)

    @property
    def value(self) -> float:
        """The common value in scalar mode."""
        if not self.scalar_mode:
            raise ValueError("penalty is not scalar")
        return float(self.lam[0]) if self.lam.size else 0.0


def as_penalty(lam, p: int) -> PenaltyVector:
    """Coerce a float, sequence or :class:`PenaltyVector` to length ``p``."""
    if isinstance(lam, PenaltyVector):
        if lam.lam.size != p:
            raise ValidationError(f"penalty has length {lam.lam.size}, expected {p}")
        return lam
    if np.ndim(lam) == 0:
        return PenaltyVector.scalar(float(lam), p)
    arr = np.asarray(lam, dtype=float)
    if arr.size != p:
        raise ValidationError(f"penalty has length {arr.size}, expected {p}")
    return PenaltyVector(arr, bool(np.all(arr == arr[0])))


@dataclass(frozen=True)
class ModelParams:
    """Fitted (pi, mu, sigma) for the alternative or the null model.

    ``pi[k, s]`` is the probability of one particular presence pattern
    with ``s`` components in group ``k``; ``log_pi`` is its logarithm
    computed without forming huge binomial coefficients. ``mu`` is a
    masked array: entry ``(k, j)`` is masked when variable ``j`` is
    never present in group ``k``. Under the null, ``pi`` and ``mu`` have
    a single row shared by every group.
    """

    pi: np.ndarray
    log_pi: np.ndarray
    mu: np.ma.MaskedArray
    sigma: np.ndarray
    null_model: bool

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    def binomial_sums(self) -> np.ndarray:
        """``sum_s C(p, s) * pi[k, s]`` for every row; 1 at a valid fit."""
        p = self.p
        comb = np.array([math.comb(p, s) for s in range(p + 1)], dtype=float)
        return self.pi @ comb


def group_codes(groups) -> tuple[np.ndarray, int]:
    """Map arbitrary labels to codes ``0..K-1`` in sorted label order."""
    _, codes = np.unique(np.asarray(groups), return_inverse=True)
    codes = codes.reshape(-1)
    return codes, int(codes.max()) + 1 if codes.size else 0


def _count_table(ld: LogData, groups, pooled: bool) -> np.ndarray:
    codes, K = group_codes(groups)
    if pooled:
        codes, K = np.zeros_like(codes), 1
    table = np.zeros((K, ld.p + 1), dtype=np.int64)
    np.add.at(table, (codes, ld.counts), 1)
    return table


def estimate_pi(ld: LogData, groups, pooled: bool = False) -> np.ndarray:
    """Count-indexed pattern probabilities, one row per group.

    ``pi[k, s] = (#obs in group k with s presences) / (n_k * C(p, s))``.
    The division is done on Python integers so it stays correctly
    rounded for large ``p``.
    """
    table = _count_table(ld, groups, pooled)
    p = ld.p
    comb = [math.comb(p, s) for s in range(p + 1)]
    pi = np.empty(table.shape, dtype=float)
    for k, row in enumerate(table):
        n_k = int(row.sum())
        for s in range(p + 1):
            pi[k, s] = int(row[s]) / (n_k * comb[s])
    return pi


def _estimate_log_pi(ld: LogData, groups, pooled: bool) -> np.ndarray:
    table = _count_table(ld, groups, pooled).astype(float)
    p = ld.p
    log_comb = np.array(
        [math.lgamma(p + 1) - math.lgamma(s + 1) - math.lgamma(p - s + 1) for s in range(p + 1)]
    )
    n_k = table.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        return np.log(table / n_k) - log_comb


def estimate_mu(ld: LogData, groups, pooled: bool = False) -> np.ma.MaskedArray:
    """Mean of the present log values per group (masked where undefined)."""
    codes, K = group_codes(groups)
    if pooled:
        codes, K = np.zeros_like(codes), 1
    x, y = ld.filled, ld.present
    sums = np.zeros((K, ld.p))
    counts = np.zeros((K, ld.p), dtype=np.int64)
    for k in range(K):
        rows = codes == k
        sums[k] = x[rows].sum(axis=0)
        counts[k] = y[rows].sum(axis=0)
    defined = counts > 0
    mu = np.zeros((K, ld.p))
    np.divide(sums, counts, out=mu, where=defined)
    return np.ma.MaskedArray(mu, mask=~defined)


def residuals(ld: LogData, mu: np.ma.MaskedArray, groups=None) -> np.ndarray:
    """Present log values minus their (group) mean; 0 on absent entries."""
    if mu.shape[0] == 1:
        centre = np.broadcast_to(mu.filled(0.0)[0], ld.filled.shape)
    else:
        if groups is None:
            raise ValidationError("groups are required for per-group means")
        codes, K = group_codes(groups)
        if K != mu.shape[0]:
            raise ValidationError(f"mean matrix has {mu.shape[0]} rows for {K} groups")
        centre = mu.filled(0.0)[codes]
    return np.where(ld.present, ld.filled - centre, 0.0)


def pairwise_scatter(ld: LogData, mu: np.ma.MaskedArray, groups=None) -> np.ndarray:
    """Unpenalized pairwise-available covariance (the ``lam = 0`` estimate).

    Entry ``(a, b)`` averages residual products over the observations in
    which both ``a`` and ``b`` are present. Raises
    :class:`InternalInvariantError` if some pair is never co-present.
    """
    r = residuals(ld, mu, groups)
    y = ld.present.astype(float)
    num = r.T @ r
    den = y.T @ y
    if np.any(den == 0):
        a, b = np.argwhere(den == 0)[0]
        raise InternalInvariantError(
            f"variables {a} and {b} are never co-present; filter the data first"
        )
    s = num / den
    # mirror the upper triangle so the result is exactly symmetric
    return np.triu(s) + np.triu(s, 1).T


def estimate_sigma(ld: LogData, mu: np.ma.MaskedArray, lam, groups=None) -> np.ndarray:
    """Ridge-penalized covariance estimate ``pairwise_scatter + diag(lam)``."""
    lam = as_penalty(lam, ld.p)
    sigma = pairwise_scatter(ld, mu, groups)
    sigma[np.diag_indices_from(sigma)] += lam.lam
    return sigma


def fit_model(ld: LogData, groups, lam, null_model: bool) -> ModelParams:
    """Fit the alternative (per-group) or null (pooled) model at ``lam``."""
    mu = estimate_mu(ld, groups, pooled=null_model)
    return ModelParams(
        pi=estimate_pi(ld, groups, pooled=null_model),
        log_pi=_estimate_log_pi(ld, groups, pooled=null_model),
        mu=mu,
        sigma=estimate_sigma(ld, mu, lam, groups),
        null_model=null_model,
    )


def fit(ld: LogData, groups: Sequence, lam, lam0) -> tuple[ModelParams, ModelParams]:
    """Fit both hypotheses; returns ``(alternative, null)``."""
    return fit_model(ld, groups, lam, False), fit_model(ld, groups, lam0, True)
