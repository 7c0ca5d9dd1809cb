from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from scmanova.data import LogData, ingest, to_log_data
from scmanova.estimation import (
    PenaltyVector,
    as_penalty,
    estimate_mu,
    estimate_pi,
    estimate_sigma,
    fit,
    pairwise_scatter,
)
from scmanova.exceptions import InternalInvariantError, ValidationError

from conftest import copresent_log_data, random_dataset


def _ld_from_counts(counts, p):
    """One observation per count, with the first ``s`` variables present."""
    mask = np.array([[j < s for j in range(p)] for s in counts])
    return LogData(np.ma.MaskedArray(np.ones(mask.shape), mask=~mask))


def test_pi_two_pattern_case():
    pi = estimate_pi(_ld_from_counts([0, 0, 2, 2], 2), [1, 1, 1, 1])
    assert pi[0].tolist() == [0.5, 0.0, 0.5]


def test_pi_full_presence():
    pi = estimate_pi(_ld_from_counts([2, 2, 2], 2), [1, 1, 1])
    assert pi[0].tolist() == [0.0, 0.0, 1.0]


def test_pi_matches_simplex_maximizer():
    counts = [1, 1, 2, 3]
    p = 3
    pi = estimate_pi(_ld_from_counts(counts, p), [1] * 4)[0]
    tally = np.bincount(counts, minlength=p + 1)
    comb = np.array([math.comb(p, s) for s in range(p + 1)], dtype=float)
    seen = tally > 0

    def neg(x):
        return -float(tally[seen] @ np.log(np.maximum(x[seen], 1e-300)))

    res = minimize(
        neg,
        np.full(p + 1, 1.0 / comb.sum()),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * (p + 1),
        constraints=[{"type": "eq", "fun": lambda x: comb @ x - 1.0}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    assert res.success
    np.testing.assert_allclose(pi, res.x, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(2, 4))
def test_pi_binomial_sum(seed, p, K):
    ds = random_dataset(np.random.default_rng(seed), sizes=(5,) * K, p=p, absent=0.4)
    ld = to_log_data(ds)
    for pooled in (False, True):
        pi = estimate_pi(ld, ds.groups, pooled)
        comb = np.array([math.comb(p, s) for s in range(p + 1)], dtype=float)
        assert np.all((pi >= 0) & (pi <= 1))
        np.testing.assert_allclose(pi @ comb, 1.0, rtol=0, atol=1e-12)


def test_mu_examples():
    e = math.e
    ld = to_log_data(ingest([[e**2, e], [0.0, e**3]], [1, 1]))
    mu = estimate_mu(ld, [1, 1])
    assert mu[0, 0] == pytest.approx(2.0)
    assert mu[0, 1] == pytest.approx(2.0)


def test_mu_undefined_in_group_without_presence():
    e = math.e
    ld = to_log_data(ingest([[e, 1.0], [e**3, 1.0], [0.0, 1.0]], [1, 1, 2]))
    mu = estimate_mu(ld, [1, 1, 2])
    assert np.ma.is_masked(mu[1, 0])
    assert not np.ma.is_masked(mu[0, 0])
    pooled = estimate_mu(ld, [1, 1, 2], pooled=True)
    assert pooled[0, 0] == pytest.approx(mu[0, 0])


def test_sigma_fully_observed_is_mle(rng):
    x = np.exp(rng.normal(size=(12, 4)))
    ld = to_log_data(ingest(x, np.ones(12)))
    sigma = estimate_sigma(ld, estimate_mu(ld, np.ones(12)), 0.0, np.ones(12))
    np.testing.assert_allclose(sigma, np.cov(np.log(x), rowvar=False, bias=True), atol=1e-13)


def test_sigma_constant_groups_gives_lambda():
    x = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [4.0, 0.0, 6.0]])
    g = [1, 1, 2, 2]
    # rows within a group agree wherever both are present
    ld = to_log_data(ingest(x, g))
    sigma = estimate_sigma(ld, estimate_mu(ld, g), 0.7, g)
    np.testing.assert_allclose(sigma, 0.7 * np.eye(3), atol=1e-15)


def test_sigma_is_exactly_symmetric(rng):
    ld, g = copresent_log_data(rng, (7, 7), 5)
    sigma = estimate_sigma(ld, estimate_mu(ld, g), 0.3, g)
    assert np.array_equal(sigma, sigma.T)


def test_sigma_shift_identity(rng):
    ld, g = copresent_log_data(rng, (6, 6), 4)
    mu = estimate_mu(ld, g)
    lam = np.array([0.1, 0.2, 0.0, 3.0])
    diff = estimate_sigma(ld, mu, lam, g) - pairwise_scatter(ld, mu, g)
    np.testing.assert_allclose(diff, np.diag(lam), atol=1e-15)


def test_sigma_requires_copresence():
    ld = to_log_data(ingest([[1.0, 0.0], [0.0, 2.0]], [1, 1]))
    with pytest.raises(InternalInvariantError, match="never co-present"):
        pairwise_scatter(ld, estimate_mu(ld, [1, 1]), [1, 1])


def _neg_penalized(theta, x, y, lam, p):
    mu = theta[:p]
    chol = np.zeros((p, p))
    chol[np.tril_indices(p)] = theta[p:]
    chol[np.diag_indices(p)] = np.exp(np.diag(chol))
    sigma = chol @ chol.T
    total = 0.0
    for i in range(x.shape[0]):
        v = np.flatnonzero(y[i])
        if v.size == 0:
            continue
        s = sigma[np.ix_(v, v)]
        inv = np.linalg.inv(s)
        r = x[i, v] - mu[v]
        total += -0.5 * (np.linalg.slogdet(s)[1] + r @ inv @ r + lam * np.trace(inv))
    return -total


@pytest.mark.xfail(
    strict=True,
    raises=AssertionError,
    reason="pairwise-available closed form is not the joint maximizer when patterns are mixed",
)
def test_sigma_mixed_patterns_matches_numerical_maximizer():
    y = np.array([[1, 1], [1, 1], [1, 0], [0, 1]], dtype=bool)
    x = np.where(y, np.log([[1.3, 0.4], [2.2, 1.7], [0.6, 1.0], [1.0, 3.1]]), 0.0)
    ld = LogData(np.ma.MaskedArray(x, mask=~y))
    g = np.ones(4)
    lam, p = 0.3, 2
    mu = estimate_mu(ld, g)
    sigma = estimate_sigma(ld, mu, lam, g)
    chol = np.linalg.cholesky(sigma)
    theta0 = np.r_[mu.filled(0.0)[0], np.log(chol[0, 0]), chol[1, 0], np.log(chol[1, 1])]
    res = minimize(_neg_penalized, theta0, args=(x, y, lam, p), method="BFGS", options={"gtol": 1e-10})
    c = np.array([[np.exp(res.x[2]), 0.0], [res.x[3], np.exp(res.x[4])]])
    np.testing.assert_allclose(c @ c.T, sigma, atol=1e-5)


def test_single_variable_closed_form_is_maximizer(rng):
    x = rng.normal(size=(7, 1))
    y = np.array([[1], [0], [1], [1], [0], [1], [1]], dtype=bool)
    ld = LogData(np.ma.MaskedArray(np.where(y, x, 0.0), mask=~y))
    g = np.ones(7)
    lam = 0.4
    mu = estimate_mu(ld, g).filled(0.0)[0]
    sigma = estimate_sigma(ld, estimate_mu(ld, g), lam, g)
    theta0 = np.r_[mu, 0.5 * np.log(sigma[0, 0])]
    res = minimize(_neg_penalized, theta0 + 0.3, args=(x, y, lam, 1), method="BFGS", options={"gtol": 1e-10})
    assert res.x[0] == pytest.approx(mu[0], abs=1e-5)
    assert np.exp(2 * res.x[1]) == pytest.approx(sigma[0, 0], abs=1e-5)


def test_fit_identical_groups_coincide(rng):
    ld, g = copresent_log_data(rng, (8,), 4)
    values = np.vstack([ld.logs.filled(-np.inf)] * 2)
    ds = ingest(np.exp(values), [1] * 8 + [2] * 8)
    ld2 = to_log_data(ds)
    alt, null = fit(ld2, ds.groups, 0.5, 0.5)
    assert alt.null_model is False and null.null_model is True
    np.testing.assert_array_equal(alt.pi[0], alt.pi[1])
    np.testing.assert_allclose(alt.pi[0], null.pi[0], rtol=1e-15)
    np.testing.assert_allclose(alt.mu[0], null.mu[0], rtol=1e-14)
    np.testing.assert_allclose(alt.sigma, null.sigma, rtol=1e-13)


def test_fit_unpenalized_matches_reference(rng):
    ld, g = copresent_log_data(rng, (15, 15), 3, absent=0.2)
    alt, null = fit(ld, g, 0.0, 0.0)
    x, y = ld.logs.filled(np.nan), ld.present
    for k, gid in enumerate((1, 2)):
        rows = g == gid
        for j in range(3):
            assert alt.mu[k, j] == pytest.approx(np.nanmean(np.where(y[rows, j], x[rows, j], np.nan)))
    # reference pairwise covariance with an explicit double loop
    centre = alt.mu.filled(0.0)[g - 1]
    ref = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            both = y[:, a] & y[:, b]
            ref[a, b] = np.mean((x[both, a] - centre[both, a]) * (x[both, b] - centre[both, b]))
    np.testing.assert_allclose(alt.sigma, ref, atol=1e-13)
    pooled = np.nanmean(np.where(y, x, np.nan), axis=0)
    np.testing.assert_allclose(null.mu[0], pooled, atol=1e-13)


def test_penalty_vector_validation():
    with pytest.raises(ValidationError):
        PenaltyVector(np.array([-1.0]), True)
    with pytest.raises(ValidationError):
        PenaltyVector(np.array([1.0, 2.0]), True)
    assert as_penalty(0.5, 3).value == 0.5
    assert not as_penalty([1.0, 2.0], 2).scalar_mode
    with pytest.raises(ValidationError):
        as_penalty([1.0, 2.0], 3)
