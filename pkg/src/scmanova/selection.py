"""Penalty selection by grid search on the information criterion.

For a scalar penalty the covariance estimate is ``S + lam * I`` with
``S`` the unpenalized pairwise scatter, so a single eigendecomposition
of each pattern submatrix ``S_V`` gives the log-determinant, quadratic
forms, inverse trace and feasibility for every grid value at once. The
winning candidate is then re-evaluated through the Cholesky path in
:mod:`scmanova.likelihood`, which is the value reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from .data import LogData
from .estimation import (
    ModelParams,
    PenaltyVector,
    as_penalty,
    fit_model,
    pairwise_scatter,
    residuals,
)
from .exceptions import InfeasibleGridError, NotPositiveDefiniteError, ValidationError
from .likelihood import (
    LOG_2PI,
    PIVOT_FLOOR,
    PatternCache,
    complexity_weight,
    discrete_log_likelihood,
    information_criterion,
    log_likelihood,
)

__all__ = [
    "LambdaGrid",
    "SelectionResult",
    "default_grid",
    "criterion_path",
    "select_lambda",
]

DEFAULT_GRID_SIZE = 60
DEFAULT_GRID_RANGE = (1e-4, 1e2)


@dataclass(frozen=True)
class LambdaGrid:
    """Ordered penalty candidates.

    In scalar mode ``candidates`` is a strictly increasing tuple of
    floats; otherwise each candidate is a per-variable vector.
    """

    candidates: tuple
    scalar_mode: bool = True

    def __post_init__(self):
        if not self.candidates:
            raise ValidationError("empty penalty grid")
        if self.scalar_mode:
            c = np.asarray(self.candidates, dtype=float)
            if c.ndim != 1 or np.any(c < 0) or np.any(np.diff(c) <= 0):
                raise ValidationError("scalar grid must be nonnegative and strictly increasing")
            object.__setattr__(self, "candidates", tuple(float(v) for v in c))

    @classmethod
    def logspace(cls, lo: float, hi: float, size: int, include_zero: bool = True) -> LambdaGrid:
        if not 0 < lo < hi or size < 2:
            raise ValidationError("grid needs 0 < min < max and size >= 2")
        values = np.geomspace(lo, hi, size)
        return cls(((0.0,) if include_zero else ()) + tuple(values))

    @property
    def includes_zero(self) -> bool:
        return self.scalar_mode and self.candidates[0] == 0.0

    @property
    def bounds(self) -> tuple[float, float]:
        if self.scalar_mode:
            return self.candidates[0], self.candidates[-1]
        flat = np.concatenate([np.ravel(c) for c in self.candidates])
        return float(flat.min()), float(flat.max())

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a grid search.

    ``trace_path`` pairs each candidate with its criterion value, or
    ``None`` when the candidate is infeasible. ``params`` and
    ``log_likelihood`` describe the refit at ``lambda_hat``.
    """

    lambda_hat: PenaltyVector
    criterion_value: float
    feasible_count: int
    trace_path: list = field(repr=False)
    params: ModelParams | None = field(repr=False)
    log_likelihood: float = 0.0


def default_grid(
    ld: LogData, size: int = DEFAULT_GRID_SIZE, span: tuple[float, float] = DEFAULT_GRID_RANGE
) -> LambdaGrid:
    """Zero plus ``size`` log-spaced values scaled by the mean unpenalized variance.

    The scale is the mean over variables of the residual mean square
    about the pooled means, which is defined even when the full scatter
    matrix is not positive definite and does not depend on group labels.
    """
    y = ld.present
    counts = y.sum(axis=0)
    sums = ld.filled.sum(axis=0)
    mean = np.divide(sums, counts, out=np.zeros(ld.p), where=counts > 0)
    r = np.where(y, ld.filled - mean, 0.0)
    var = np.divide((r * r).sum(axis=0), counts, out=np.zeros(ld.p), where=counts > 0)
    scale = float(var[counts > 0].mean()) if np.any(counts > 0) else 0.0
    if not scale > 0:
        scale = 1.0
    return LambdaGrid.logspace(span[0] * scale, span[1] * scale, size)


def criterion_path(
    ld: LogData, groups, lams: Sequence[float], null_model: bool, return_loglik: bool = False
):
    """Information criterion at each scalar penalty, ``inf`` where infeasible.

    Uses one symmetric eigendecomposition per distinct presence pattern.
    A candidate is feasible when, for every pattern, the smallest
    eigenvalue of ``S_V + lam I`` exceeds ``PIVOT_FLOOR`` times its
    largest diagonal entry (a slightly stricter test than the Cholesky
    pivot check, since every pivot is at least the smallest eigenvalue).
    With ``return_loglik`` the unpenalized log-likelihoods are returned too.
    """
    lams = np.asarray(lams, dtype=float)
    base = fit_model(ld, groups, 0.0, null_model)
    scatter = base.sigma
    r = residuals(ld, base.mu, None if null_model else groups)

    loglik = np.full(lams.size, discrete_log_likelihood(ld, groups, base))
    trace = np.zeros(lams.size)
    feasible = np.ones(lams.size, dtype=bool)
    for support, rows in ld.pattern_groups:
        s = support.size
        if s == 0:
            continue
        m = rows.size
        sub = scatter[np.ix_(support, support)]
        evals, evecs = eigh(sub, driver="evd", check_finite=False)
        shifted = evals[:, None] + lams[None, :]
        feasible &= shifted[0] > PIVOT_FLOOR * (np.max(np.diag(sub)) + lams)
        z = evecs.T @ r[np.ix_(rows, support)].T
        # infeasible candidates may produce inf/nan here; they are masked below
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inv = 1.0 / shifted
            logdet = np.sum(np.log(np.where(shifted > 0, shifted, np.nan)), axis=0)
            quad = (z * z).sum(axis=1) @ inv
            loglik += -0.5 * (m * s * LOG_2PI + m * logdet + quad)
            trace += m * inv.sum(axis=0)

    with np.errstate(invalid="ignore"):
        crit = -2.0 * loglik + complexity_weight(ld.n, ld.p) * trace
    bad = ~feasible | ~np.isfinite(crit)
    crit[bad] = np.inf
    if return_loglik:
        loglik[bad] = np.nan
        return crit, loglik
    return crit


def _refit(ld: LogData, groups, lam, null_model: bool):
    params = fit_model(ld, groups, lam, null_model)
    cache = PatternCache(ld, params.sigma)
    ll = log_likelihood(ld, groups, params, cache)
    crit = information_criterion(ld, groups, params, cache)
    return params, ll, crit


def select_lambda(
    ld: LogData, groups, grid: LambdaGrid, null_model: bool = False, verify: bool = True
) -> SelectionResult:
    """Feasible grid candidate minimizing the information criterion.

    Ties go to the smallest penalty. For scalar grids the winner is refit
    through the Cholesky path and that value is reported; with
    ``verify=False`` the spectral values are returned as-is and
    ``params`` is ``None`` (used inside permutation loops). Raises
    :class:`InfeasibleGridError` (with the trace attached) when no
    candidate is feasible.
    """
    if grid.scalar_mode:
        crit, loglik = criterion_path(ld, groups, grid.candidates, null_model, return_loglik=True)
        trace = [(lam, None if np.isinf(c) else float(c)) for lam, c in zip(grid.candidates, crit)]
        # stable sort keeps the smallest penalty first among equal values
        for idx in np.argsort(crit, kind="stable"):
            if np.isinf(crit[idx]):
                break
            lam = grid.candidates[idx]
            feasible = sum(v is not None for _, v in trace)
            if not verify:
                return SelectionResult(
                    PenaltyVector.scalar(lam, ld.p), float(crit[idx]), feasible, trace, None,
                    float(loglik[idx]),
                )
            try:
                params, ll, value = _refit(ld, groups, lam, null_model)
            except NotPositiveDefiniteError:
                trace[idx] = (lam, None)
                continue
            feasible = sum(v is not None for _, v in trace)
            return SelectionResult(
                PenaltyVector.scalar(lam, ld.p), value, feasible, trace, params, ll
            )
    else:
        trace = []
        best = None
        for cand in grid.candidates:
            lam = as_penalty(cand, ld.p)
            try:
                params, ll, value = _refit(ld, groups, lam, null_model)
            except NotPositiveDefiniteError:
                trace.append((lam.lam, None))
                continue
            trace.append((lam.lam, value))
            if best is None or value < best[1]:
                best = (lam, value, params, ll)
        if best is not None:
            feasible = sum(v is not None for _, v in trace)
            return SelectionResult(best[0], best[1], feasible, trace, best[2], best[3])
    raise InfeasibleGridError("Phi empty on grid; widen bounds", trace)
