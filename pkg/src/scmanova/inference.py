"""Likelihood-ratio statistic and its permutation null distribution.

The null fit pools every group, so it (and its selected penalty) does
not depend on the labels: it is computed once and only the alternative
is refit for each permutation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .data import LogData, SemicontDataset, filter_variables, to_log_data
from .estimation import fit, fit_model, group_codes
from .exceptions import InfeasibleGridError, NotPositiveDefiniteError, ValidationError
from .likelihood import log_likelihood
from .selection import LambdaGrid, criterion_path, default_grid, select_lambda

__all__ = [
    "PermutationConfig",
    "TestReport",
    "WilksResult",
    "HomogeneityResult",
    "lrt_statistic",
    "wilks_df",
    "permutation_rng",
    "permutation_p_value",
    "permutation_test",
    "wilks_reference",
    "count_homogeneity_diagnostic",
]

logger = logging.getLogger(__name__)

# Permutation statistics within this relative distance below the observed
# one are counted as ties (roundoff between algebraically equal values).
TIE_RTOL = 1e-9


def lrt_statistic(ld: LogData, groups, lam, lam0) -> float:
    """``-2 * (loglik_null - loglik_alt)`` at the penalized estimates.

    Raises :class:`NotPositiveDefiniteError` if either fit is infeasible.
    """
    alt, null = fit(ld, groups, lam, lam0)
    return -2.0 * (log_likelihood(ld, groups, null) - log_likelihood(ld, groups, alt))


def wilks_df(p_star: int, K: int) -> int:
    return 2 * p_star * (K - 1)


def permutation_rng(seed: int, b: int) -> np.random.Generator:
    """Counter-based stream for permutation ``b``; independent of run order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b])))


def permutation_p_value(observed: float, perm_stats) -> float:
    """Add-one permutation p-value ``(1 + #{D_b >= D_obs}) / (B + 1)``."""
    perm_stats = np.asarray(perm_stats, dtype=float)
    tol = TIE_RTOL * max(1.0, abs(observed))
    hits = int(np.sum(perm_stats >= observed - tol))
    return (1 + hits) / (perm_stats.size + 1)


@dataclass(frozen=True)
class PermutationConfig:
    """Settings for :func:`permutation_test`.

    ``grid=None`` uses :func:`default_grid` on the filtered data.
    ``reselect_lambda=False`` freezes the alternative penalty at its
    observed-data value for every permutation.
    """

    B: int = 999
    seed: int = 0
    reselect_lambda: bool = True
    grid: LambdaGrid | None = None
    n_jobs: int = 1
    keep_perm_stats: bool = False

    def __post_init__(self):
        if self.B < 1:
            raise ValidationError("number of permutations must be >= 1")


@dataclass(frozen=True)
class TestReport:
    """Result of the permutation test."""

    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    permutations: int
    lambda_hat: float
    lambda0_hat: float
    p_star: int
    removed_variables: list
    df_wilks: int
    seed: int
    perm_stats: list | None = None
    infeasible_permutations: int = 0
    reselect_lambda: bool = True

    def to_dict(self) -> dict:
        """Report fields in their documented order, ``permutations`` as ``B``."""
        d = asdict(self)
        out = {k: d.pop(k) for k in ("statistic", "p_value")}
        out["B"] = d.pop("permutations")
        out.update(d)
        if out["perm_stats"] is None:
            del out["perm_stats"]
        return out


def _alt_loglik(ld: LogData, groups, grid: LambdaGrid, frozen) -> float:
    if frozen is None:
        return select_lambda(ld, groups, grid, null_model=False, verify=False).log_likelihood
    if frozen.scalar_mode:
        _, ll = criterion_path(ld, groups, [frozen.value], False, return_loglik=True)
        if np.isnan(ll[0]):
            raise NotPositiveDefiniteError("frozen penalty infeasible for this permutation")
        return float(ll[0])
    return log_likelihood(ld, groups, fit_model(ld, groups, frozen, null_model=False))


def _perm_stat(ld, groups, b, seed, grid, frozen, null_ll) -> float:
    perm = permutation_rng(seed, b).permutation(groups)
    try:
        return -2.0 * (null_ll - _alt_loglik(ld, perm, grid, frozen))
    except (NotPositiveDefiniteError, InfeasibleGridError):
        return math.inf


def permutation_test(ds: SemicontDataset, config: PermutationConfig = PermutationConfig()) -> TestReport:
    """Regularized MANOVA test with a permutation p-value.

    Variables are filtered once (the co-presence rule ignores labels),
    penalties are selected by the information criterion, and the group
    labels of whole observations are permuted ``B`` times. Permutations
    whose alternative fit is infeasible get ``D_b = inf``.
    """
    if ds.K < 2:
        raise ValidationError("at least two groups are required")
    ld_all = to_log_data(ds)
    outcome = filter_variables(ld_all)
    ld = ld_all.select(outcome.kept)
    groups = np.asarray(ds.groups)
    grid = config.grid if config.grid is not None else default_grid(ld)

    # observed and permuted statistics go through the same spectral path
    null_sel = select_lambda(ld, groups, grid, null_model=True, verify=False)
    alt_sel = select_lambda(ld, groups, grid, null_model=False, verify=False)
    observed = -2.0 * (null_sel.log_likelihood - alt_sel.log_likelihood)
    frozen = None if config.reselect_lambda else alt_sel.lambda_hat

    args = (ld, groups)
    tail = (config.seed, grid, frozen, null_sel.log_likelihood)
    if config.n_jobs == 1:
        perm = [_perm_stat(*args, b, *tail) for b in range(config.B)]
    else:
        perm = Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_perm_stat)(*args, b, *tail) for b in range(config.B)
        )
    perm = np.asarray(perm, dtype=float)
    infeasible = int(np.sum(np.isinf(perm)))
    if infeasible:
        logger.info("%d of %d permutations infeasible (counted as D_b = inf)", infeasible, config.B)

    return TestReport(
        statistic=float(observed),
        p_value=permutation_p_value(observed, perm),
        permutations=config.B,
        lambda_hat=alt_sel.lambda_hat.value,
        lambda0_hat=null_sel.lambda_hat.value,
        p_star=ld.p,
        removed_variables=[ds.variable_names[j] for j, _ in outcome.removed],
        df_wilks=wilks_df(ld.p, ds.K),
        seed=config.seed,
        perm_stats=perm.tolist() if config.keep_perm_stats else None,
        infeasible_permutations=infeasible,
        reselect_lambda=config.reselect_lambda,
    )


class WilksResult(NamedTuple):
    statistic: float
    p_value: float
    df: int
    reject: bool


def wilks_reference(ds: SemicontDataset, alpha: float = 0.05) -> WilksResult:
    """Unpenalized statistic with its asymptotic chi-square p-value.

    Only meaningful for ``n > p*`` and zero penalty; otherwise use
    :func:`permutation_test`.
    """
    ld_all = to_log_data(ds)
    ld = ld_all.select(filter_variables(ld_all).kept)
    if ld.p >= ds.n:
        raise ValidationError(
            f"chi-square reference needs n > p* (n={ds.n}, p*={ld.p}); use the permutation test"
        )
    d = lrt_statistic(ld, ds.groups, 0.0, 0.0)
    df = wilks_df(ld.p, ds.K)
    pv = float(stats.chi2.sf(d, df))
    return WilksResult(d, pv, df, pv <= alpha)


@dataclass(frozen=True)
class HomogeneityResult:
    statistic: float
    p_value: float
    df: int
    strata: list = field(default_factory=list)

    @property
    def inconclusive(self) -> bool:
        return self.df == 0


MIN_STRATUM = 5


def count_homogeneity_diagnostic(ds: SemicontDataset) -> HomogeneityResult:
    """Chi-square check that presence patterns depend only on their count.

    Within each group and each count stratum ``0 < s < p`` holding at
    least ``MIN_STRATUM`` observations, per-variable presence totals are
    compared with the uniform expectation ``m s / p``. Each variable
    total is Binomial(m, s/p) under the hypothesis and the totals sum to
    ``m s``, so the statistic uses the exact covariance and has ``p - 1``
    degrees of freedom per stratum. Strata are pooled by summing.
    Returns an inconclusive result (``df == 0``) when no stratum
    qualifies.
    """
    present = ds.values > 0
    p = ds.p
    counts = present.sum(axis=1)
    codes, K = group_codes(ds.groups)
    total, df, strata = 0.0, 0, []
    for k in range(K):
        for s in range(1, p):
            rows = (codes == k) & (counts == s)
            m = int(rows.sum())
            if m < MIN_STRATUM:
                continue
            observed = present[rows].sum(axis=0)
            expected = m * s / p
            var = m * s * (p - s) / p**2
            stat = (p - 1) / (p * var) * float(np.sum((observed - expected) ** 2))
            total += stat
            df += p - 1
            strata.append((k + 1, s, m, stat))
    if df == 0:
        return HomogeneityResult(math.nan, math.nan, 0, [])
    return HomogeneityResult(total, float(stats.chi2.sf(total, df)), df, strata)
