"""Command-line front end: ``scmanova test | fit | simulate``.

Exit codes: 0 success, 2 input error, 3 numerical infeasibility,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .data import SemicontDataset, filter_variables, ingest, to_log_data
from .estimation import fit_model
from .exceptions import (
    InfeasibleGridError,
    InternalInvariantError,
    NotPositiveDefiniteError,
    ValidationError,
)
from .inference import PermutationConfig, permutation_test
from .likelihood import information_criterion, log_likelihood
from .selection import LambdaGrid, default_grid, select_lambda
from .simulation import Scenario, paper_grid, read_scenarios, run_scenario, write_results

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4

logger = logging.getLogger("scmanova")


def read_csv(path: str, group_col: str) -> SemicontDataset:
    """Load a CSV with a header row, one group column and numeric columns.

    Empty cells are rejected rather than read as zero.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if group_col not in header:
            raise ValidationError(f"group column {group_col!r} not found in header")
        gi = header.index(group_col)
        names = [h for i, h in enumerate(header) if i != gi]
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for i, cell in enumerate(rec):
                if i == gi:
                    continue
                cell = cell.strip()
                if not cell:
                    raise ValidationError(
                        f"line {lineno}, column {header[i]!r}: empty cell (write 0 for absence)"
                    )
                try:
                    v = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"line {lineno}, column {header[i]!r}: not a number: {cell!r}"
                    ) from None
                if not math.isfinite(v) or v < 0:
                    raise ValidationError(
                        f"line {lineno}, column {header[i]!r}: value must be finite and >= 0, got {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
            labels.append(rec[gi].strip())
    if not rows:
        raise ValidationError(f"{path} has no data rows")
    ds = ingest(np.array(rows, dtype=float).reshape(len(rows), len(names)), labels, names)
    if ds.K < 2:
        raise ValidationError("need at least two groups")
    return ds


@dataclass(frozen=True)
class RunConfig:
    """Validated settings shared by the ``test`` and ``fit`` commands."""

    input: str
    group_col: str = "group"
    B: int = 999
    seed: int = 0
    alpha: float = 0.05
    grid_min: float | None = None
    grid_max: float | None = None
    grid_size: int | None = None
    reselect_lambda: bool = True
    output: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.B < 1:
            raise ValidationError("--permutations must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValidationError("--alpha must lie in (0, 1)")
        if self.grid_min is not None and not self.grid_min > 0:
            raise ValidationError("--grid-min must be > 0 (zero is always a candidate)")
        if self.grid_min is not None and self.grid_max is not None and not self.grid_min < self.grid_max:
            raise ValidationError("--grid-min must be below --grid-max")
        if self.grid_size is not None and self.grid_size < 2:
            raise ValidationError("--grid-size must be >= 2")

    @classmethod
    def from_args(cls, args) -> RunConfig:
        return cls(
            input=args.input,
            group_col=args.group_col,
            B=getattr(args, "permutations", 999),
            seed=getattr(args, "seed", 0),
            alpha=getattr(args, "alpha", 0.05),
            grid_min=args.grid_min,
            grid_max=args.grid_max,
            grid_size=args.grid_size,
            reselect_lambda=not getattr(args, "freeze_lambda", False),
            output=args.output,
            threads=_threads(args.threads),
        )


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("SCMANOVA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"SCMANOVA_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _grid(cfg: RunConfig, ld) -> LambdaGrid:
    base = default_grid(ld)
    if cfg.grid_min is None and cfg.grid_max is None and cfg.grid_size is None:
        return base
    lo = cfg.grid_min if cfg.grid_min is not None else base.candidates[1]
    hi = cfg.grid_max if cfg.grid_max is not None else base.candidates[-1]
    size = cfg.grid_size if cfg.grid_size is not None else len(base) - 1
    return LambdaGrid.logspace(lo, hi, size)


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_test(args) -> int:
    start = time.perf_counter()
    cfg = RunConfig.from_args(args)
    ds = read_csv(cfg.input, cfg.group_col)
    ld_all = to_log_data(ds)
    ld = ld_all.select(filter_variables(ld_all).kept)
    config = PermutationConfig(
        B=cfg.B,
        seed=cfg.seed,
        reselect_lambda=cfg.reselect_lambda,
        grid=_grid(cfg, ld),
        n_jobs=cfg.threads,
    )
    report = permutation_test(ds, config)
    payload = report.to_dict()
    payload["elapsed_seconds"] = time.perf_counter() - start
    _emit(payload, cfg.output)
    verdict = "reject" if report.p_value <= cfg.alpha else "do not reject"
    # keep stdout pure JSON when the report goes there
    print(
        f"D = {report.statistic:.4f}, p = {report.p_value:.4g} (B = {report.permutations}), "
        f"p* = {report.p_star}: {verdict} H0 at alpha = {cfg.alpha}",
        file=sys.stdout if cfg.output else sys.stderr,
    )
    return EXIT_OK


def _model_json(params, label_rows) -> dict:
    if not np.allclose(params.binomial_sums(), 1.0, rtol=0, atol=1e-12):
        raise InternalInvariantError("pattern probabilities violate the binomial-sum constraint")
    mu = [[None if m else float(v) for v, m in zip(row.data, np.ma.getmaskarray(row))] for row in params.mu]
    return {
        "groups": label_rows,
        "pi": params.pi.tolist(),
        "mu": mu,
        "sigma_diagonal": np.diag(params.sigma).tolist(),
        "sigma": params.sigma.tolist(),
    }


def cmd_fit(args) -> int:
    cfg = RunConfig.from_args(args)
    ds = read_csv(cfg.input, cfg.group_col)
    ld_all = to_log_data(ds)
    outcome = filter_variables(ld_all)
    ld = ld_all.select(outcome.kept)
    groups = ds.groups
    grid = _grid(cfg, ld)
    out = {
        "variables": [ds.variable_names[j] for j in outcome.kept],
        "removed_variables": [ds.variable_names[j] for j, _ in outcome.removed],
        "p_star": ld.p,
        "n": ds.n,
    }
    for key, null_model, forced in (("alternative", False, args.lam), ("null", True, args.lam0)):
        if forced is None:
            sel = select_lambda(ld, groups, grid, null_model=null_model)
            params, lam, crit, ll = sel.params, sel.lambda_hat.value, sel.criterion_value, sel.log_likelihood
        else:
            params = fit_model(ld, groups, forced, null_model)
            lam = float(forced)
            crit = information_criterion(ld, groups, params)
            ll = log_likelihood(ld, groups, params)
        labels = ["pooled"] if null_model else [str(g) for g in ds.group_labels]
        block = _model_json(params, labels)
        block.update({"lambda": lam, "criterion": crit, "log_likelihood": ll})
        out[key] = block
    _emit(out, cfg.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.permutations is not None:
        overrides["B"] = args.permutations
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.paper_grid:
        scenarios = paper_grid(**{k: v for k, v in overrides.items()})
    elif args.scenarios:
        try:
            scenarios = read_scenarios(args.scenarios, Scenario(**overrides))
        except OSError as exc:
            raise ValidationError(f"cannot read {args.scenarios}: {exc.strerror}") from None
    else:
        raise ValidationError("give --scenarios FILE or --paper-grid")
    bad = [f"scenario {i}: {e}" for i, sc in enumerate(scenarios, 1) for e in sc.validate()]
    if bad:
        raise ValidationError("invalid scenarios:\n  " + "\n  ".join(bad))

    if args.dry_run:
        results = scenarios
    else:
        n_jobs = _threads(args.threads)
        results = []
        for i, sc in enumerate(scenarios, 1):
            res = run_scenario(sc, n_jobs=n_jobs)
            logger.info("scenario %d/%d: rejection rate %.3f", i, len(scenarios), res.rejection_rate)
            results.append(res)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_results(results, fh, args.format)
    else:
        write_results(results, sys.stdout, args.format)
    return EXIT_OK


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--group-col", default="group", help="name of the group column")
    p.add_argument("--grid-min", type=float, help="smallest positive penalty candidate")
    p.add_argument("--grid-max", type=float, help="largest penalty candidate")
    p.add_argument("--grid-size", type=int, help="number of positive candidates (0 is always included)")
    p.add_argument("--output", help="write JSON here instead of stdout")
    p.add_argument("--threads", type=int, help="worker threads (default: $SCMANOVA_THREADS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scmanova", description="Regularized MANOVA for high-dimensional semicontinuous data."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="permutation test of equal groups")
    _add_data_args(p)
    p.add_argument("--permutations", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--freeze-lambda", action="store_true", help="do not reselect penalties per permutation")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("fit", help="penalized estimates under both hypotheses")
    _add_data_args(p)
    p.add_argument("--lambda", dest="lam", type=float, help="force the alternative penalty")
    p.add_argument("--lambda0", dest="lam0", type=float, help="force the null penalty")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo level/power study")
    p.add_argument("--scenarios", help="key = value scenario file (blank line between scenarios)")
    p.add_argument("--paper-grid", action="store_true", help="use the full 448-scenario design")
    p.add_argument("--replicates", type=int)
    p.add_argument("--permutations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dry-run", action="store_true", help="list scenarios without running them")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output")
    p.add_argument("--threads", type=int, help="worker processes (default: $SCMANOVA_THREADS or all cores)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleGridError, NotPositiveDefiniteError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InternalInvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
