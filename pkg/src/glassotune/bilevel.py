"""Outer-loop penalty tuning by hypergradient descent, plus a grid baseline.

Penalties are positive by construction: the descent runs in alpha with
lam = exp(alpha) for a single level and weights_kl = exp(alpha_kl)
entrywise for a weight matrix, so a plain fixed-step gradient update never
leaves the feasible cone.  Each outer iteration solves the training
problem (warm-started from the previous solution), evaluates the hold-out
criterion, assembles the exact hypergradient through the implicit
derivative of the solution map, and steps.  The chain rule through the
exponential turns a derivative in lam into lam times it in alpha.

Zero entries in a matrix initialization stay exactly zero: the exponential
parametrization moves weights multiplicatively, which is what makes an
unpenalized diagonal stay unpenalized.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .datagen import FLOAT_FORMAT
from .exceptions import (
    DegenerateInput,
    DegenerateSupport,
    NotConverged,
    NotPositiveDefinite,
    SingularSystem,
)
from .glasso import Regularization, SolverConfig, solve
from .implicit import (
    criterion_holdout,
    hypergradient_scalar,
    hypergradient_weighted,
    jacobian_scalar,
    relative_error,
    support_from_estimate,
)
from .linalg import symmetrize

# Failures that a halved outer step may walk around; anything else aborts.
RETRYABLE = (DegenerateSupport, SingularSystem, NotConverged)

# At exactly lambda_init the largest off-diagonal covariance entry sits on
# the soft-threshold kink (zero slack), so the solution map has no
# derivative there.  Descents start this factor above it: same diagonal
# solution, strictly positive slack.
INIT_BACKOFF = 1.0 + 1e-3


@dataclass(frozen=True)
class BilevelConfig:
    """Outer-loop budget and step size.

    ``outer_tol`` bounds the hypergradient in alpha (absolute value for the
    scalar tuner, sup-norm for the matrix tuner) below which the run counts
    as converged.  ``init`` is a Regularization holding strictly positive
    starting levels (zeros allowed in the matrix case and stay pinned);
    None picks :func:`starting_level` for the scalar tuner, and the scalar
    optimum for the matrix tuner.
    """

    step_size: float = 0.1
    max_outer_iter: int = 200
    outer_tol: float = 1e-6
    init: Optional[Regularization] = None
    warm_start: bool = True
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if not self.step_size > 0.0:
            raise ValueError("step_size must be > 0")
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be >= 1")
        if self.outer_tol < 0.0:
            raise ValueError("outer_tol must be >= 0")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One outer iteration: the penalty tried and what it cost."""

    iteration: int
    reg: Regularization
    criterion: float
    hypergrad_norm: float
    inner_iterations: int
    rel_error: Optional[float]
    seconds: float


@dataclass
class Trajectory:
    """Append-only record of an outer run with its termination status."""

    scalar: bool
    records: List[TrajectoryRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    def criterion_values(self) -> np.ndarray:
        return np.array([r.criterion for r in self.records])

    def to_csv(self, path) -> None:
        """One row per outer iteration.

        Scalar runs carry a single lambda column; matrix runs carry
        lambda_min/lambda_max/lambda_mean summaries of the weight matrix.
        A missing relative error is written as nan.  The seconds column is
        wall-clock and is the only nondeterministic field.
        """
        if self.scalar:
            header = "iter,lambda,criterion,hypergrad_norm,inner_iters,rel_error,seconds"
        else:
            header = (
                "iter,lambda_min,lambda_max,lambda_mean,"
                "criterion,hypergrad_norm,inner_iters,rel_error,seconds"
            )
        with open(path, "w", encoding="ascii") as fh:
            fh.write(header + "\n")
            for r in self.records:
                if self.scalar:
                    lam_cols = [r.reg.lam]
                else:
                    w = r.reg.weights
                    lam_cols = [float(w.min()), float(w.max()), float(w.mean())]
                re_val = float("nan") if r.rel_error is None else r.rel_error
                cols = (
                    [str(r.iteration)]
                    + [FLOAT_FORMAT % v for v in lam_cols]
                    + [
                        FLOAT_FORMAT % r.criterion,
                        FLOAT_FORMAT % r.hypergrad_norm,
                        str(r.inner_iterations),
                        FLOAT_FORMAT % re_val,
                        FLOAT_FORMAT % r.seconds,
                    ]
                )
                fh.write(",".join(cols) + "\n")


def lambda_init(cov_train: np.ndarray, policy: str = "offdiag-max") -> float:
    """Starting level for the scalar tuner.

    ``offdiag-max`` (default) returns the largest absolute off-diagonal
    entry of the training covariance: the smallest level at which the
    solution is exactly diagonal, so the descent starts from the sparsest
    informative point.  ``max-entry`` returns the largest absolute entry,
    diagonal included (an upper bound on the former).

    Raises DegenerateInput when the chosen maximum is zero, since no
    positive starting level can be derived from it.
    """
    cov = np.asarray(cov_train, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("cov_train must be a square matrix")
    if policy == "offdiag-max":
        off = ~np.eye(cov.shape[0], dtype=bool)
        val = float(np.max(np.abs(cov[off]))) if off.any() else 0.0
    elif policy == "max-entry":
        val = float(np.max(np.abs(cov)))
    else:
        raise ValueError(f"unknown lambda-init policy {policy!r}")
    if not np.isfinite(val) or val <= 0.0:
        raise DegenerateInput(
            f"lambda_init policy {policy!r} found no positive entry to scale from"
        )
    return val


def starting_level(cov_train: np.ndarray, policy: str = "offdiag-max") -> float:
    """Differentiable starting level for descent: lambda_init nudged up.

    :func:`lambda_init` itself is the kink where the worst entry has zero
    slack; one step of INIT_BACKOFF above it the solution is still diagonal
    but strictly inside the threshold, so the hypergradient exists.
    """
    return lambda_init(cov_train, policy) * INIT_BACKOFF


def default_grid(lam_init: float, points: int = 100, span: float = 1e-3) -> np.ndarray:
    """Log-spaced grid over [lam_init * span, lam_init]."""
    if points < 1:
        raise ValueError("points must be >= 1")
    if not 0.0 < span <= 1.0:
        raise ValueError("span must lie in (0, 1]")
    if points == 1:
        return np.array([float(lam_init)])
    return np.geomspace(lam_init * span, lam_init, points)


@dataclass(frozen=True)
class GridPoint:
    """One grid evaluation; criterion and rel_error are nan when failed."""

    lam: float
    criterion: float
    rel_error: float
    failed: bool


def grid_search(
    cov_train: np.ndarray,
    cov_test: np.ndarray,
    grid: Sequence[float],
    solver: Optional[SolverConfig] = None,
    theta_true: Optional[np.ndarray] = None,
) -> Tuple[float, List[GridPoint]]:
    """Evaluate the hold-out criterion on a grid of scalar levels.

    The sweep runs from the largest level down, warm-starting each solve
    from the previous solution (solutions vary continuously in the level,
    so the previous one is close).  Solver failures mark their point as
    failed instead of aborting the sweep.  Returns the level minimizing
    the criterion and the curve sorted by increasing level.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any(grid <= 0.0) or not np.all(np.isfinite(grid)):
        raise ValueError("grid levels must be positive and finite")
    if solver is None:
        solver = SolverConfig()

    points: dict = {}
    warm = None
    for i in np.argsort(grid)[::-1]:
        lam = float(grid[i])
        try:
            est = solve(cov_train, Regularization.scalar(lam), solver, warm_start=warm)
        except (NotConverged, NotPositiveDefinite):
            points[int(i)] = GridPoint(lam, float("nan"), float("nan"), True)
            continue
        warm = est.theta
        crit = criterion_holdout(est.theta, cov_test).value
        re_val = (
            relative_error(est.theta, theta_true)
            if theta_true is not None
            else float("nan")
        )
        points[int(i)] = GridPoint(lam, crit, re_val, False)

    curve = [points[int(i)] for i in np.argsort(grid)]
    solved = [g for g in curve if not g.failed]
    if not solved:
        raise DegenerateInput("every grid point failed to solve")
    best = min(solved, key=lambda g: g.criterion)
    return best.lam, curve


def _annotate(exc: Exception, iteration: int) -> None:
    # keep type and attributes, prefix the message with where it happened
    exc.args = (f"outer iteration {iteration}: {exc.args[0]}",) + exc.args[1:]


def tune_scalar(
    cov_train: np.ndarray,
    cov_test: np.ndarray,
    config: Optional[BilevelConfig] = None,
    theta_true: Optional[np.ndarray] = None,
) -> Tuple[float, Trajectory]:
    """Descend the hold-out criterion over a single penalty level.

    Starts at ``config.init`` (or the smallest diagonal-solution level),
    then repeats: solve the training problem, compute the criterion and
    its hypergradient, update alpha = log(lam) by one fixed step.  Stops
    when the alpha-space gradient magnitude falls below ``outer_tol`` or
    the iteration budget runs out; the trajectory records which.

    A retryable failure (degenerate support, singular restricted system,
    inner non-convergence) at the starting point propagates, annotated
    with the iteration index.  Mid-run, the step that led to the failing
    point is retried once at half length; a second failure ends the run
    with the trajectory collected so far.

    Returns the last evaluated level and the full trajectory.
    """
    if config is None:
        config = BilevelConfig()
    cov_train = symmetrize(np.asarray(cov_train, dtype=float))
    cov_test = symmetrize(np.asarray(cov_test, dtype=float))

    if config.init is None:
        lam = starting_level(cov_train)
    else:
        if not config.init.is_scalar:
            raise ValueError("scalar tuner needs a scalar init")
        lam = config.init.lam
        if lam <= 0.0:
            raise ValueError("init must be > 0 for the log parametrization")
    alpha = float(np.log(lam))

    traj = Trajectory(scalar=True)
    warm: Optional[np.ndarray] = None
    prev_alpha: Optional[float] = None
    prev_galpha: Optional[float] = None
    rho = config.step_size

    for k in range(config.max_outer_iter + 1):
        t0 = time.perf_counter()
        lam = float(np.exp(alpha))
        attempt = 0
        while True:
            try:
                est = solve(
                    cov_train,
                    Regularization.scalar(lam),
                    config.solver,
                    warm_start=warm,
                )
                crit = criterion_holdout(est.theta, cov_test)
                support = support_from_estimate(est, cov_train)
                jac = jacobian_scalar(est, support)
                galpha = lam * hypergradient_scalar(jac, crit.gradient)
                break
            except RETRYABLE as exc:
                if prev_galpha is None:
                    _annotate(exc, k)
                    raise
                if attempt >= 1:
                    traj.stop_reason = f"aborted at outer iteration {k}: {exc}"
                    return traj.final.reg.lam, traj
                attempt += 1
                alpha = prev_alpha - 0.5 * rho * prev_galpha
                lam = float(np.exp(alpha))

        seconds = time.perf_counter() - t0
        re_val = (
            relative_error(est.theta, theta_true) if theta_true is not None else None
        )
        traj.records.append(
            TrajectoryRecord(
                iteration=k,
                reg=est.reg,
                criterion=crit.value,
                hypergrad_norm=abs(galpha),
                inner_iterations=est.iterations,
                rel_error=re_val,
                seconds=seconds,
            )
        )
        if config.warm_start:
            warm = est.theta
        if abs(galpha) <= config.outer_tol:
            traj.converged = True
            traj.stop_reason = "hypergradient below tolerance"
            break
        if k == config.max_outer_iter:
            traj.stop_reason = "outer iteration budget exhausted"
            break
        prev_alpha, prev_galpha = alpha, galpha
        alpha = alpha - rho * galpha

    return lam, traj


def tune_matrix(
    cov_train: np.ndarray,
    cov_test: np.ndarray,
    config: Optional[BilevelConfig] = None,
    theta_true: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Trajectory]:
    """Descend the hold-out criterion over a full matrix of penalty weights.

    Same loop as :func:`tune_scalar` with one alpha per entry.  The
    hypergradient matrix is symmetrized before the update so the weights
    stay symmetric, and its zero off-support pattern freezes those entries
    for the step.  When no init is given the scalar tuner runs first and
    its optimum fills the starting weight matrix, making the matrix run a
    pure refinement.

    Returns the last evaluated weight matrix and the trajectory.
    """
    if config is None:
        config = BilevelConfig()
    cov_train = symmetrize(np.asarray(cov_train, dtype=float))
    cov_test = symmetrize(np.asarray(cov_test, dtype=float))
    p = cov_train.shape[0]

    if config.init is None:
        lam_opt, _ = tune_scalar(cov_train, cov_test, config)
        weights = np.full((p, p), lam_opt)
    elif config.init.is_scalar:
        if config.init.lam <= 0.0:
            raise ValueError("init must be > 0 for the log parametrization")
        weights = np.full((p, p), config.init.lam)
    else:
        weights = config.init.as_matrix(p)
    with np.errstate(divide="ignore"):
        alpha = np.log(weights)  # zero weights pin their alpha at -inf

    traj = Trajectory(scalar=False)
    warm: Optional[np.ndarray] = None
    prev_alpha: Optional[np.ndarray] = None
    prev_galpha: Optional[np.ndarray] = None
    rho = config.step_size

    for k in range(config.max_outer_iter + 1):
        t0 = time.perf_counter()
        weights = np.exp(alpha)
        attempt = 0
        while True:
            try:
                est = solve(
                    cov_train,
                    Regularization.matrix(weights),
                    config.solver,
                    warm_start=warm,
                )
                crit = criterion_holdout(est.theta, cov_test)
                support = support_from_estimate(est, cov_train)
                hyper = hypergradient_weighted(est, support, crit.gradient)
                galpha = weights * symmetrize(hyper.values)
                break
            except RETRYABLE as exc:
                if prev_galpha is None:
                    _annotate(exc, k)
                    raise
                if attempt >= 1:
                    traj.stop_reason = f"aborted at outer iteration {k}: {exc}"
                    return traj.final.reg.weights, traj
                attempt += 1
                alpha = prev_alpha - 0.5 * rho * prev_galpha
                weights = np.exp(alpha)

        seconds = time.perf_counter() - t0
        norm = float(np.max(np.abs(galpha)))
        re_val = (
            relative_error(est.theta, theta_true) if theta_true is not None else None
        )
        traj.records.append(
            TrajectoryRecord(
                iteration=k,
                reg=est.reg,
                criterion=crit.value,
                hypergrad_norm=norm,
                inner_iterations=est.iterations,
                rel_error=re_val,
                seconds=seconds,
            )
        )
        if config.warm_start:
            warm = est.theta
        if norm <= config.outer_tol:
            traj.converged = True
            traj.stop_reason = "hypergradient below tolerance"
            break
        if k == config.max_outer_iter:
            traj.stop_reason = "outer iteration budget exhausted"
            break
        prev_alpha, prev_galpha = alpha, galpha
        alpha = alpha - rho * galpha

    return est.reg.weights, traj
