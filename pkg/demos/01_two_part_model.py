"""Fitting the two-part model by hand.

Walks through the pieces the test is built from: presence patterns,
co-presence filtering, the closed-form estimates and the penalty search.
Run with ``python demos/01_two_part_model.py``.
"""

# %%
from __future__ import annotations

import math

import numpy as np

from scmanova import (
    LambdaGrid,
    Scenario,
    default_grid,
    filter_variables,
    fit_model,
    generate_dataset,
    information_criterion,
    select_lambda,
    to_log_data,
)

np.set_printoptions(precision=3, suppress=True)

# %% [markdown]
# Draw one replicate with 12 variables, 6 observations per group and a
# 50% chance that any given component is zero.

# %%
sc = Scenario(K=2, n_k=6, p=12, pi_j1=0.5, c1=1.0)
ds = generate_dataset(sc, np.random.default_rng(4))
print(f"n = {ds.n}, p = {ds.p}, group sizes = {ds.group_sizes}")
print("fraction of zeros:", float(np.mean(ds.values == 0)))

# %% [markdown]
# Absent components are masked on the log scale. Each row's presence
# pattern decides which covariance submatrix it contributes to.

# %%
ld_all = to_log_data(ds)
print("distinct presence patterns:", len(ld_all.pattern_groups))
print("presences per row:", ld_all.counts)

# %% [markdown]
# Pairs of variables that are never observed together leave holes in
# the covariance estimate, so variables are dropped (most absences
# first) until every remaining pair has been co-observed.

# %%
outcome = filter_variables(ld_all)
print("kept:", outcome.kept)
print("removed (column, absences):", outcome.removed)
ld = ld_all.select(outcome.kept)

# %% [markdown]
# Closed-form estimates. ``pi[k, s]`` is the probability of one specific
# pattern with ``s`` presences in group ``k``; weighting by the number of
# such patterns gives a proper distribution over counts.

# %%
alt = fit_model(ld, ds.groups, 0.5, null_model=False)
weights = np.array([math.comb(ld.p, s) for s in range(ld.p + 1)])
print("count distribution, group 1:", alt.pi[0] * weights)
print("binomial sums:", alt.binomial_sums())
print("group means (masked where a variable never appears):")
print(alt.mu)

# %% [markdown]
# Without a penalty the pairwise-available covariance need not be
# positive definite on every pattern. The ridge term fixes that, and the
# information criterion picks its size.

# %%
grid = default_grid(ld, size=25)
sel = select_lambda(ld, ds.groups, grid)
for lam, m in sel.trace_path[:: max(1, len(sel.trace_path) // 8)]:
    print(f"lambda = {lam:9.4g}   M = {'infeasible' if m is None else f'{m:.3f}'}")
print(f"selected lambda = {sel.lambda_hat.value:.4g}, M = {sel.criterion_value:.3f}")
print("recomputed M:", information_criterion(ld, ds.groups, sel.params))

# %%
null_sel = select_lambda(ld, ds.groups, grid, null_model=True)
print(f"null-model lambda = {null_sel.lambda_hat.value:.4g}")

# %% [markdown]
# A custom grid works the same way; zero is kept as the first candidate.

# %%
custom = LambdaGrid.logspace(0.05, 20.0, 10)
print(select_lambda(ld, ds.groups, custom).lambda_hat.value)
