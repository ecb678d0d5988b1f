"""Command-line experiment driver.

Generates a synthetic sparse-precision dataset, tunes the graphical lasso
penalty by the selected mode, and writes machine-readable results into an
output directory:

* ``grid_curve.csv``     level, criterion, relative error per grid point
                         (modes grid and compare)
* ``trajectory.csv``     one row per outer descent iteration
                         (modes scalar, matrix, compare)
* ``summary.json``       the full config echoed back plus final levels,
                         criteria, errors, iteration counts, and timings
* ``lambda_opt.csv``, ``theta_true.csv``, ``theta_hat.csv``
                         with ``--emit-matrices``
* ``error.json``         written instead of summary.json when a numerical
                         failure propagates

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 size cap hit.

Seeds are derived from ``--seed`` as seed (ground truth), seed+1 (samples),
seed+2 (train/test split), so every artifact is reproducible from the
config alone; wall-clock timings are the only nondeterministic outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .bilevel import (
    BilevelConfig,
    GridPoint,
    Trajectory,
    default_grid,
    grid_search,
    lambda_init,
    starting_level,
    tune_matrix,
    tune_scalar,
)
from .datagen import (
    FLOAT_FORMAT,
    Dataset,
    GroundTruth,
    make_sparse_spd,
    sample_gaussian,
    save_matrix_csv,
    split_samples,
)
from .exceptions import GlassoTuneError, ResourceLimit
from .glasso import Regularization, SolverConfig, solve

MODES = ("grid", "scalar", "matrix", "compare")
INIT_POLICIES = ("offdiag-max", "max-entry")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully determined experiment; every run artifact derives from it."""

    mode: str = "compare"
    p: int = 100
    n: int = 2000
    density: float = 0.05
    seed: int = 0
    split_ratio: float = 0.5
    rho: float = 0.1
    max_outer_iter: int = 200
    inner_tol: float = 1e-8
    grid_points: int = 100
    output_dir: str = "."
    emit_matrices: bool = False
    lambda_init_policy: str = "offdiag-max"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split-ratio must lie strictly between 0 and 1")
        if not self.rho > 0.0:
            raise ValueError("rho must be > 0")
        if self.max_outer_iter < 1:
            raise ValueError("max-outer-iter must be >= 1")
        if not self.inner_tol > 0.0:
            raise ValueError("inner-tol must be > 0")
        if self.grid_points < 1:
            raise ValueError("grid-points must be >= 1")
        if self.lambda_init_policy not in INIT_POLICIES:
            raise ValueError(
                f"lambda-init-policy must be one of {INIT_POLICIES}, "
                f"got {self.lambda_init_policy!r}"
            )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.inner_tol)

    def bilevel_config(self, init: Optional[Regularization]) -> BilevelConfig:
        return BilevelConfig(
            step_size=self.rho,
            max_outer_iter=self.max_outer_iter,
            init=init,
            solver=self.solver_config(),
        )


_INT_FIELDS = {"p", "n", "seed", "max_outer_iter", "grid_points"}
_FLOAT_FIELDS = {"density", "split_ratio", "rho", "inner_tol"}
_BOOL_FIELDS = {"emit_matrices"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glassotune",
        description=(
            "Tune graphical lasso regularization on synthetic Gaussian data "
            "by grid search or hypergradient descent, writing CSV/JSON results."
        ),
    )
    parser.add_argument("--mode", choices=MODES, default=None,
                        help="what to run (default: compare)")
    parser.add_argument("--p", type=int, default=None, help="dimension")
    parser.add_argument("--n", type=int, default=None, help="number of samples")
    parser.add_argument("--density", type=float, default=None,
                        help="nonzero fraction in the ground-truth factor")
    parser.add_argument("--seed", type=int, default=None, help="base seed")
    parser.add_argument("--split-ratio", type=float, default=None,
                        help="train fraction of the sample split")
    parser.add_argument("--rho", type=float, default=None,
                        help="outer descent step size")
    parser.add_argument("--max-outer-iter", type=int, default=None,
                        help="outer iteration budget")
    parser.add_argument("--inner-tol", type=float, default=None,
                        help="inner solver fixed-point tolerance")
    parser.add_argument("--grid-points", type=int, default=None,
                        help="points in the log-spaced grid")
    parser.add_argument("--output-dir", default=None,
                        help="directory for result files")
    parser.add_argument("--emit-matrices", action="store_true", default=None,
                        help="also write lambda_opt/theta_true/theta_hat CSVs")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="key=value file; flags override its values")
    parser.add_argument("--lambda-init-policy", choices=INIT_POLICIES,
                        default=None, help="how to pick the starting level")
    return parser


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _read_config_file(path: str, parser: argparse.ArgumentParser) -> dict:
    # keys match flag names with dashes/underscores ignored, case-insensitive
    canonical = {
        f.name.replace("_", ""): f.name for f in fields(ExperimentConfig)
    }
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        parser.error(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        normalized = key.strip().lower().replace("-", "").replace("_", "")
        if normalized not in canonical:
            parser.error(f"{path}:{lineno}: unknown config key {key.strip()!r}")
        name = canonical[normalized]
        value = value.strip()
        try:
            if name in _INT_FIELDS:
                values[name] = int(value)
            elif name in _FLOAT_FIELDS:
                values[name] = float(value)
            elif name in _BOOL_FIELDS:
                values[name] = _parse_bool(value)
            else:
                values[name] = value
        except ValueError as exc:
            parser.error(f"{path}:{lineno}: bad value for {name}: {exc}")
    return values


def parse_config(argv: Optional[List[str]] = None) -> ExperimentConfig:
    """Resolve flags over config-file values over defaults."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    values: dict = {}
    if args.config is not None:
        values.update(_read_config_file(args.config, parser))
    for f in fields(ExperimentConfig):
        flag_value = getattr(args, f.name)
        if flag_value is not None:
            values[f.name] = flag_value
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        parser.error(str(exc))
        raise AssertionError("unreachable")


def _write_grid_curve(path: Path, curve: List[GridPoint]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("lambda,criterion,rel_error\n")
        for g in curve:
            fh.write(
                ",".join(FLOAT_FORMAT % v for v in (g.lam, g.criterion, g.rel_error))
                + "\n"
            )


def _trajectory_summary(traj: Trajectory) -> dict:
    final = traj.final
    return {
        "criterion": final.criterion,
        "rel_error": final.rel_error,
        "outer_iterations": len(traj),
        "inner_iterations_total": int(sum(r.inner_iterations for r in traj.records)),
        "converged": traj.converged,
        "stop_reason": traj.stop_reason,
    }


def _emit_matrices(out: Path, truth: GroundTruth, data: Dataset,
                   reg: Regularization, config: ExperimentConfig) -> None:
    est = solve(data.cov_train, reg, config.solver_config())
    lam_opt = (
        np.array([[reg.lam]]) if reg.is_scalar else reg.as_matrix(config.p)
    )
    save_matrix_csv(lam_opt, out / "lambda_opt.csv")
    save_matrix_csv(truth.theta_true, out / "theta_true.csv")
    save_matrix_csv(est.theta, out / "theta_hat.csv")


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit code."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"config": asdict(config)}

    try:
        t0 = time.perf_counter()
        truth = make_sparse_spd(config.p, config.density, config.seed)
        samples = sample_gaussian(truth, config.n, config.seed + 1)
        data = split_samples(samples, config.split_ratio, config.seed + 2)
        lam0 = lambda_init(data.cov_train, config.lambda_init_policy)
        lam_start = starting_level(data.cov_train, config.lambda_init_policy)
        summary["lambda_init"] = lam0
        summary["lambda_start"] = lam_start
        summary["seconds_data"] = time.perf_counter() - t0
        print(f"data: p={config.p} n={config.n} seed={config.seed} "
              f"lambda_init={lam0:.6g}")

        final_reg: Optional[Regularization] = None

        if config.mode in ("grid", "compare"):
            t0 = time.perf_counter()
            grid = default_grid(lam0, config.grid_points)
            best, curve = grid_search(
                data.cov_train, data.cov_test, grid,
                solver=config.solver_config(), theta_true=truth.theta_true,
            )
            _write_grid_curve(out / "grid_curve.csv", curve)
            at_best = next(g for g in curve if g.lam == best)
            summary["grid"] = {
                "lambda_best": best,
                "criterion": at_best.criterion,
                "rel_error": at_best.rel_error,
                "points": len(curve),
                "failed_points": int(sum(g.failed for g in curve)),
                "seconds": time.perf_counter() - t0,
            }
            final_reg = Regularization.scalar(best)
            print(f"grid: best lambda={best:.6g} criterion={at_best.criterion:.9g}")

        if config.mode in ("scalar", "matrix", "compare"):
            t0 = time.perf_counter()
            scalar_cfg = config.bilevel_config(Regularization.scalar(lam_start))
            lam_opt, straj = tune_scalar(
                data.cov_train, data.cov_test, scalar_cfg,
                theta_true=truth.theta_true,
            )
            scalar_summary = {"lambda_opt": lam_opt}
            scalar_summary.update(_trajectory_summary(straj))
            scalar_summary["seconds"] = time.perf_counter() - t0
            summary["scalar"] = scalar_summary
            final_reg = Regularization.scalar(lam_opt)
            print(f"scalar: lambda={lam_opt:.6g} "
                  f"criterion={straj.final.criterion:.9g} "
                  f"iters={len(straj)} converged={straj.converged}")
            if config.mode == "scalar":
                straj.to_csv(out / "trajectory.csv")

        if config.mode == "matrix":
            t0 = time.perf_counter()
            matrix_cfg = config.bilevel_config(Regularization.scalar(lam_opt))
            weights, mtraj = tune_matrix(
                data.cov_train, data.cov_test, matrix_cfg,
                theta_true=truth.theta_true,
            )
            mtraj.to_csv(out / "trajectory.csv")
            matrix_summary = {
                "lambda_min": float(weights.min()),
                "lambda_max": float(weights.max()),
                "lambda_mean": float(weights.mean()),
            }
            matrix_summary.update(_trajectory_summary(mtraj))
            matrix_summary["seconds"] = time.perf_counter() - t0
            summary["matrix"] = matrix_summary
            final_reg = Regularization.matrix(weights)
            print(f"matrix: criterion={mtraj.final.criterion:.9g} "
                  f"iters={len(mtraj)} converged={mtraj.converged}")

        if config.mode == "compare":
            straj.to_csv(out / "trajectory.csv")
            lam_grid = summary["grid"]["lambda_best"]
            # multiplicative width of one grid cell
            ratio = (
                (lam0 / (lam0 * 1e-3)) ** (1.0 / (config.grid_points - 1))
                if config.grid_points > 1
                else float("inf")
            )
            summary["compare"] = {
                "lambda_grid": lam_grid,
                "lambda_descent": lam_opt,
                "lambda_gap": abs(lam_grid - lam_opt),
                "grid_ratio": ratio,
                "within_one_cell": lam_grid / ratio <= lam_opt <= lam_grid * ratio,
            }
            print(f"compare: grid={lam_grid:.6g} descent={lam_opt:.6g} "
                  f"within_one_cell={summary['compare']['within_one_cell']}")

        if config.emit_matrices and final_reg is not None:
            _emit_matrices(out, truth, data, final_reg, config)

    except ResourceLimit as exc:
        _write_error(out, exc, summary)
        return 4
    except GlassoTuneError as exc:
        _write_error(out, exc, summary)
        return 3

    with open(out / "summary.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _write_error(out: Path, exc: GlassoTuneError, summary: dict) -> None:
    record = {
        "error": type(exc).__name__,
        "message": str(exc),
        "partial_summary": summary,
    }
    with open(out / "error.json", "w", encoding="ascii") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> None:
    config = parse_config(argv)
    sys.exit(run(config))


if __name__ == "__main__":
    main()
