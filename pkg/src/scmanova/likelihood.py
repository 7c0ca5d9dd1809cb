"""Log-likelihood, ridge penalty and information criterion.

Every observation contributes a Gaussian density on its own support, so
all work is grouped by distinct presence pattern: each pattern's
covariance submatrix is factorized once and reused for all rows that
share it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .data import LogData
from .estimation import ModelParams, as_penalty, group_codes
from .exceptions import NotPositiveDefiniteError

__all__ = [
    "PIVOT_FLOOR",
    "PatternCache",
    "PatternFactor",
    "factorize",
    "discrete_log_likelihood",
    "continuous_log_likelihood",
    "log_likelihood",
    "penalty",
    "penalized_log_likelihood",
    "complexity_weight",
    "inverse_trace",
    "information_criterion",
]

LOG_2PI = math.log(2.0 * math.pi)

# Relative pivot floor used to declare a pattern submatrix positive definite.
PIVOT_FLOOR = 1e-10


def factorize(a: np.ndarray, support: tuple[int, ...] = ()) -> np.ndarray:
    """Lower Cholesky factor of ``a`` with a relative pivot floor.

    Raises :class:`NotPositiveDefiniteError` if LAPACK fails or any
    squared pivot falls below ``PIVOT_FLOOR * max(diag(a))``.
    """
    scale = float(np.max(np.diag(a))) if a.size else 0.0
    if not scale > 0:
        raise NotPositiveDefiniteError(f"non-positive diagonal on pattern {support}", support)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"covariance submatrix not positive definite on pattern {support}", support
        ) from None
    if np.min(np.diag(chol)) ** 2 < PIVOT_FLOOR * scale:
        raise NotPositiveDefiniteError(
            f"covariance submatrix numerically singular on pattern {support}", support
        )
    return chol


@dataclass(frozen=True)
class PatternFactor:
    support: np.ndarray
    rows: np.ndarray
    chol: np.ndarray
    logdet: float

    @property
    def multiplicity(self) -> int:
        return self.rows.size

    @property
    def count(self) -> int:
        return self.support.size


class PatternCache:
    """Cholesky factors of ``sigma`` restricted to each observed pattern.

    Keys are the packed presence masks. Patterns with no present
    component are kept (with an empty factor) so multiplicities sum to n.
    Read-only after construction.
    """

    def __init__(self, ld: LogData, sigma: np.ndarray):
        self.n = ld.n
        self.entries: dict[bytes, PatternFactor] = {}
        for support, rows in ld.pattern_groups:
            if support.size:
                chol = factorize(sigma[np.ix_(support, support)], tuple(support.tolist()))
                logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
            else:
                chol, logdet = np.zeros((0, 0)), 0.0
            key = np.packbits(ld.present[rows[0]]).tobytes()
            self.entries[key] = PatternFactor(support, rows, chol, logdet)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.values())

    def inverse_diagonals(self):
        """Yield ``(factor, diag(sigma_V^-1))`` for each non-empty pattern."""
        for f in self:
            if f.count == 0:
                continue
            w = solve_triangular(f.chol, np.eye(f.count), lower=True, check_finite=False)
            yield f, np.einsum("ij,ij->j", w, w)


def _cache(ld: LogData, params: ModelParams, cache: PatternCache | None) -> PatternCache:
    return cache if cache is not None else PatternCache(ld, params.sigma)


def discrete_log_likelihood(ld: LogData, groups, params: ModelParams) -> float:
    """Sum of ``log pi_k(s_i)`` over observations."""
    if params.null_model:
        rows = np.zeros(ld.n, dtype=np.int64)
    else:
        rows, _ = group_codes(groups)
    terms = params.log_pi[rows, ld.counts]
    if np.isneginf(terms).any():
        bad = int(ld.counts[np.argmax(np.isneginf(terms))])
        warnings.warn(
            f"zero pattern probability for an observed count s={bad}; log-likelihood is -inf",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(np.sum(terms))


def continuous_log_likelihood(
    ld: LogData, groups, params: ModelParams, cache: PatternCache | None = None
) -> float:
    """Gaussian log-density of the present log values on their supports."""
    cache = _cache(ld, params, cache)
    mu = params.mu.filled(0.0)
    if params.null_model:
        centre_rows = np.zeros(ld.n, dtype=np.int64)
    else:
        centre_rows, _ = group_codes(groups)
    total = 0.0
    for f in cache:
        if f.count == 0:
            continue
        resid = ld.filled[np.ix_(f.rows, f.support)] - mu[np.ix_(centre_rows[f.rows], f.support)]
        z = solve_triangular(f.chol, resid.T, lower=True, check_finite=False)
        m = f.multiplicity
        total += -0.5 * (m * f.count * LOG_2PI + m * f.logdet + float(np.sum(z * z)))
    return total


def log_likelihood(ld: LogData, groups, params: ModelParams, cache: PatternCache | None = None) -> float:
    """Unpenalized log-likelihood (discrete plus continuous part)."""
    cache = _cache(ld, params, cache)
    return discrete_log_likelihood(ld, groups, params) + continuous_log_likelihood(
        ld, groups, params, cache
    )


def penalty(params: ModelParams, lam, ld: LogData, cache: PatternCache | None = None) -> float:
    """Sum over observations of ``tr(Lambda_V sigma_V^-1)``."""
    lam = as_penalty(lam, ld.p).lam
    if not np.any(lam):
        return 0.0
    cache = _cache(ld, params, cache)
    return float(sum(f.multiplicity * float(lam[f.support] @ d) for f, d in cache.inverse_diagonals()))


def penalized_log_likelihood(
    ld: LogData, groups, params: ModelParams, lam, cache: PatternCache | None = None
) -> float:
    """``log_likelihood - penalty / 2``."""
    cache = _cache(ld, params, cache)
    return log_likelihood(ld, groups, params, cache) - 0.5 * penalty(params, lam, ld, cache)


def complexity_weight(n: int, p: int) -> float:
    """Weight of the trace term in the criterion: ``log n + log(p) / 2``."""
    return math.log(n) + 0.5 * math.log(p)


def inverse_trace(ld: LogData, params: ModelParams, cache: PatternCache | None = None) -> float:
    """Sum over observations of ``tr(sigma_V^-1)``."""
    cache = _cache(ld, params, cache)
    return float(sum(f.multiplicity * float(np.sum(d)) for f, d in cache.inverse_diagonals()))


def information_criterion(
    ld: LogData, groups, params: ModelParams, cache: PatternCache | None = None
) -> float:
    """Penalty-selection criterion at fitted parameters.

    ``-2 * loglik + (log n + log(p)/2) * sum_i tr(sigma_{V_i}^-1)``, with
    the unpenalized log-likelihood. Raises
    :class:`NotPositiveDefiniteError` when the fit is infeasible.
    """
    cache = _cache(ld, params, cache)
    ll = log_likelihood(ld, groups, params, cache)
    return -2.0 * ll + complexity_weight(ld.n, ld.p) * inverse_trace(ld, params, cache)
