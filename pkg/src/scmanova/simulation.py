"""Monte Carlo harness for level and power studies.

Each scenario draws zero-inflated log-normal data: independent absence
indicators with group-specific probability, and equicorrelated Gaussian
logs with a group-specific mean shift. Replicates use independent
counter-based streams, so results do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .data import SemicontDataset, filter_variables, ingest, to_log_data
from .exceptions import ScmanovaError, ValidationError
from .inference import PermutationConfig, permutation_test

__all__ = [
    "Scenario",
    "ScenarioResult",
    "absence_probabilities",
    "generate_dataset",
    "run_scenario",
    "retained_dimension",
    "paper_grid",
    "read_scenarios",
    "parse_scenarios",
    "write_results",
]

PI_CAP = 1.0 - 1e-6


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation design.

    ``pi_j1`` is the probability that a component is *absent* (zero) in
    group 1; group k adds ``c2 (k-1)/(K-1)``. Means shift by
    ``c1 (k-1)/(K-1)`` on the log scale.
    """

    K: int = 2
    n_k: int = 10
    p: int = 50
    rho: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    pi_j1: float = 0.2
    replicates: int = 200
    B: int = 199
    alpha: float = 0.05
    seed: int = 0
    reselect_lambda: bool = True

    def validate(self) -> list[str]:
        """Return a list of problems (empty when valid)."""
        errs = []
        if self.K < 2:
            errs.append(f"K={self.K} must be >= 2")
        if self.n_k < 1:
            errs.append(f"n_k={self.n_k} must be >= 1")
        if self.p < 2:
            errs.append(f"p={self.p} must be >= 2")
        if not 0 <= self.rho < 1:
            errs.append(f"rho={self.rho} must lie in [0, 1)")
        if not 0 < self.pi_j1 < 1:
            errs.append(f"pi_j1={self.pi_j1} must lie in (0, 1)")
        if self.c2 < 0:
            errs.append(f"c2={self.c2} must be >= 0")
        if self.replicates < 1:
            errs.append(f"replicates={self.replicates} must be >= 1")
        if self.B < 1:
            errs.append(f"B={self.B} must be >= 1")
        if not 0 < self.alpha <= 1:
            errs.append(f"alpha={self.alpha} must lie in (0, 1]")
        return errs


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    rejection_rate: float
    mc_error: float
    mean_p_star: float
    mean_lambda: float
    mean_lambda0: float
    runtime: float
    completed: int
    failed: int = 0

    def row(self) -> dict:
        out = asdict(self.scenario)
        out.update({k: v for k, v in asdict(self).items() if k != "scenario"})
        return out


def absence_probabilities(sc: Scenario) -> np.ndarray:
    """Per-group absence probability, capped just below 1."""
    k = np.arange(sc.K)
    return np.minimum(sc.pi_j1 + sc.c2 * k / (sc.K - 1), PI_CAP)


def generate_dataset(sc: Scenario, rng: np.random.Generator) -> SemicontDataset:
    """Draw one replicate of the scenario."""
    pis = absence_probabilities(sc)
    n = sc.K * sc.n_k
    groups = np.repeat(np.arange(1, sc.K + 1), sc.n_k)
    means = sc.c1 * np.arange(sc.K) / (sc.K - 1)
    absent = rng.random((n, sc.p)) < pis[groups - 1, None]
    # equicorrelation: sqrt(1-rho) * idiosyncratic + sqrt(rho) * shared factor
    shared = rng.standard_normal((n, 1))
    own = rng.standard_normal((n, sc.p))
    logs = math.sqrt(1.0 - sc.rho) * own + math.sqrt(sc.rho) * shared + means[groups - 1, None]
    values = np.where(absent, 0.0, np.exp(logs))
    return ingest(values, groups)


def _streams(sc: Scenario, r: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([sc.seed, r])
    data_ss, perm_ss = ss.spawn(2)
    rng = np.random.Generator(np.random.Philox(data_ss))
    return rng, int(perm_ss.generate_state(1)[0])


def _replicate(sc: Scenario, r: int):
    rng, perm_seed = _streams(sc, r)
    ds = generate_dataset(sc, rng)
    config = PermutationConfig(B=sc.B, seed=perm_seed, reselect_lambda=sc.reselect_lambda)
    try:
        rep = permutation_test(ds, config)
    except ScmanovaError as exc:
        return None, type(exc).__name__
    return (rep.p_value, rep.p_star, rep.lambda_hat, rep.lambda0_hat), None


def run_scenario(sc: Scenario, n_jobs: int = 1) -> ScenarioResult:
    """Run all replicates and summarise rejection rate and fitted sizes.

    Replicates that raise a package error (e.g. too few variables left
    after filtering) are excluded and counted in ``failed``.
    """
    errs = sc.validate()
    if errs:
        raise ValidationError("; ".join(errs))
    start = time.perf_counter()
    if n_jobs == 1:
        out = [_replicate(sc, r) for r in range(sc.replicates)]
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(_replicate)(sc, r) for r in range(sc.replicates))
    ok = np.array([o for o, _ in out if o is not None], dtype=float).reshape(-1, 4)
    done = ok.shape[0]
    rate = float(np.mean(ok[:, 0] <= sc.alpha)) if done else math.nan
    means = ok.mean(axis=0) if done else np.full(4, math.nan)
    return ScenarioResult(
        scenario=sc,
        rejection_rate=rate,
        mc_error=math.sqrt(rate * (1 - rate) / done) if done else math.nan,
        mean_p_star=float(means[1]),
        mean_lambda=float(means[2]),
        mean_lambda0=float(means[3]),
        runtime=time.perf_counter() - start,
        completed=done,
        failed=sc.replicates - done,
    )


def retained_dimension(sc: Scenario) -> np.ndarray:
    """Number of variables kept by filtering in each replicate (0 if fewer than 2)."""
    dims = np.zeros(sc.replicates, dtype=np.int64)
    for r in range(sc.replicates):
        rng, _ = _streams(sc, r)
        ld = to_log_data(generate_dataset(sc, rng))
        try:
            dims[r] = filter_variables(ld).p_star
        except ScmanovaError:
            dims[r] = 0
    return dims


def paper_grid(replicates: int = 1000, B: int = 1000, seed: int = 0, alpha: float = 0.05) -> list[Scenario]:
    """Full published design: 448 scenarios.

    Mean shifts and absence shifts are varied one at a time; designs in
    which some group would have absence probability >= 1 are left out.
    """
    effects = [(c1, 0.0) for c1 in (0.0, 1.0, 5.0)] + [(0.0, c2) for c2 in (0.15, 0.3)]
    out = []
    for K, n_k, p, (c1, c2), pi, rho in itertools.product(
        (2, 4), (5, 10), (50, 100, 150, 200), effects, (0.2, 0.5, 0.8), (0.0, 0.4)
    ):
        if pi + c2 >= 1:
            continue
        out.append(Scenario(K, n_k, p, rho, c1, c2, pi, replicates, B, alpha, seed))
    return out


_TYPES = {f.name: f.type for f in fields(Scenario)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    return int(raw) if kind == "int" else float(raw)


def parse_scenarios(text: str, defaults: Scenario = Scenario()) -> list[Scenario]:
    """Parse ``key = value`` blocks separated by blank lines.

    ``#`` starts a comment. Unknown keys and unparsable values raise
    :class:`ValidationError` listing every offender.
    """
    blocks, current = [], {}
    errs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            if current:
                blocks.append(current)
                current = {}
            continue
        if "=" not in line:
            errs.append(f"line {lineno}: expected key = value")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            errs.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            current[key] = _coerce(key, val)
        except ValueError:
            errs.append(f"line {lineno}: bad value {val!r} for {key}")
    if current:
        blocks.append(current)
    scenarios = [replace(defaults, **b) for b in blocks]
    for i, sc in enumerate(scenarios, 1):
        errs.extend(f"scenario {i}: {e}" for e in sc.validate())
    if errs:
        raise ValidationError("invalid scenario file:\n  " + "\n  ".join(errs))
    return scenarios


def read_scenarios(path, defaults: Scenario = Scenario()) -> list[Scenario]:
    with open(path) as fh:
        return parse_scenarios(fh.read(), defaults)


def write_results(results: Iterable, fh, fmt: str = "csv") -> None:
    """Write results (or bare scenarios for a dry run) as CSV or JSON."""
    rows = [r.row() if isinstance(r, ScenarioResult) else asdict(r) for r in results]
    if fmt == "json":
        json.dump(rows, fh, indent=2)
        fh.write("\n")
        return
    if not rows:
        return
    writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def results_to_csv(results: Sequence) -> str:
    buf = io.StringIO()
    write_results(results, buf, "csv")
    return buf.getvalue()
