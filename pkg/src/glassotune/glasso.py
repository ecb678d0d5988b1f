"""Weighted graphical lasso solver by proximal gradient descent.

Minimizes, over SPD matrices theta,

    -logdet(theta) + <S, theta> + sum_kl T_kl |theta_kl|

where S is an empirical covariance and T is either a constant level lam or
an entrywise nonnegative symmetric weight matrix.  Each iteration takes a
gradient step on the smooth part, whose gradient is S - theta^{-1}, and
applies entrywise soft-thresholding, with backtracking on the step gamma.
A converged iterate satisfies the fixed-point equation

    theta = soft_threshold(theta - gamma * (S - theta^{-1}), gamma * T)

for any gamma > 0, and the solver's residual is the sup-norm defect of that
equation at the step in effect when it stopped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .exceptions import NotConverged, NotPositiveDefinite
from .linalg import SupportSet, cholesky, logdet, spd_inverse, symmetrize

# Backtracking gives up after this many step reductions; at factor 0.5 the
# step has then shrunk by 2**60, so a failure signals pathological input.
MAX_BACKTRACKS = 60

# Relative slack on the sufficient-decrease test, needed once the candidate
# step is so small that the two objective values agree to round-off.
DECREASE_SLACK = 1e-12


@dataclass(frozen=True)
class Regularization:
    """Penalty weights: one level for every entry, or a full weight matrix.

    The matrix form keeps only the symmetric part of what is passed in,
    since the penalty over symmetric theta cannot see the antisymmetric
    part.  All entries must be nonnegative.  A zero diagonal leaves the
    diagonal unpenalized.
    """

    lam: Optional[float] = None
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if (self.lam is None) == (self.weights is None):
            raise ValueError("exactly one of lam and weights must be given")
        if self.lam is not None:
            lam = float(self.lam)
            if not np.isfinite(lam) or lam < 0.0:
                raise ValueError("scalar regularization must be finite and >= 0")
            object.__setattr__(self, "lam", lam)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ValueError("weights must be a square matrix")
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")
            if np.any(w < 0.0):
                raise ValueError("weights must be entrywise >= 0")
            object.__setattr__(self, "weights", symmetrize(w))

    @classmethod
    def scalar(cls, lam: float) -> "Regularization":
        return cls(lam=lam)

    @classmethod
    def matrix(cls, weights: np.ndarray) -> "Regularization":
        return cls(weights=weights)

    @property
    def is_scalar(self) -> bool:
        return self.lam is not None

    @property
    def dim(self) -> Optional[int]:
        """Dimension pinned by a weight matrix, None for the scalar form."""
        return None if self.weights is None else self.weights.shape[0]

    def as_matrix(self, p: int) -> np.ndarray:
        """Materialize the p x p threshold matrix."""
        if self.is_scalar:
            return np.full((p, p), self.lam)
        if self.weights.shape[0] != p:
            raise ValueError(
                f"weights are {self.weights.shape[0]} x {self.weights.shape[0]}, need {p} x {p}"
            )
        return self.weights.copy()


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget and tolerances for :func:`solve`.

    ``tol`` bounds the sup-norm fixed-point residual at termination.
    ``gamma_init`` of None picks 1 over the largest row 2-norm of S, an
    upper proxy for 1/||S||_2 that backtracking then corrects.
    ``support_tol`` is the magnitude below which an entry of the solution
    counts as zero.
    """

    max_iter: int = 10000
    tol: float = 1e-8
    gamma_init: Optional[float] = None
    backtrack_factor: float = 0.5
    support_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be > 0")
        if self.gamma_init is not None and not self.gamma_init > 0.0:
            raise ValueError("gamma_init must be > 0")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not self.support_tol > 0.0:
            raise ValueError("support_tol must be > 0")


@dataclass(frozen=True)
class PrecisionEstimate:
    """Solver output: the SPD estimate plus everything needed to audit it.

    ``gamma`` is the prox step in effect when the solver stopped, and
    ``fixed_point_residual`` was measured with exactly that step.
    ``support`` holds the entries with ``|theta| > support_tol``, diagonal
    included.  ``iterations`` counts accepted proximal steps.
    """

    theta: np.ndarray = field(repr=False)
    reg: Regularization
    gamma: float
    support: SupportSet
    fixed_point_residual: float
    iterations: int

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def soft_threshold(z: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Entrywise sign(z) * max(|z| - t, 0).  Thresholds must be >= 0."""
    return np.sign(z) * np.maximum(np.abs(z) - thresholds, 0.0)


def objective(theta: np.ndarray, cov: np.ndarray, reg: Regularization) -> float:
    """Penalized objective -logdet(theta) + <cov, theta> + sum T|theta|.

    Raises NotPositiveDefinite when theta is not SPD.
    """
    theta = np.asarray(theta, dtype=float)
    lower = cholesky(theta)
    thr = reg.as_matrix(theta.shape[0])
    return float(
        -logdet(lower) + np.sum(cov * theta) + np.sum(thr * np.abs(theta))
    )


def _default_gamma(cov: np.ndarray) -> float:
    largest_row = float(np.max(np.sum(cov * cov, axis=1)))
    if largest_row <= 0.0:
        return 1.0
    return 1.0 / np.sqrt(largest_row)


def _initial_iterate(cov: np.ndarray, thr: np.ndarray) -> np.ndarray:
    # Stationary point of the decoupled diagonal problem; exact whenever the
    # penalty is large enough to zero out every off-diagonal entry.
    d = np.diagonal(cov) + np.diagonal(thr)
    if np.all(d > 0.0):
        return np.diag(1.0 / d)
    return np.eye(cov.shape[0])


def solve(
    cov: np.ndarray,
    reg: Regularization,
    config: Optional[SolverConfig] = None,
    warm_start: Optional[np.ndarray] = None,
) -> PrecisionEstimate:
    """Solve the weighted graphical lasso for one covariance and penalty.

    Parameters
    ----------
    cov : ndarray
        Symmetric PSD empirical covariance S.
    reg : Regularization
        Penalty level or weight matrix.
    config : SolverConfig, optional
        Budget and tolerances; defaults are suitable for p up to a few
        hundred.
    warm_start : ndarray, optional
        SPD starting point, e.g. the solution at a nearby penalty.  When
        omitted the diagonal stationary point 1 / (S_ii + T_ii) is used.

    Returns
    -------
    PrecisionEstimate

    Raises
    ------
    NotConverged
        After max_iter accepted steps with the residual still above tol.
        Carries the iteration count and last residual.
    NotPositiveDefinite
        If the penalty is identically zero and cov is singular (the
        unpenalized problem has no minimizer), if the warm start is not
        SPD, or if backtracking exhausts MAX_BACKTRACKS reductions without
        producing an SPD sufficient-decrease step.

    Notes
    -----
    The residual scales roughly linearly in gamma near the solution, so
    termination requires ``residual <= tol * min(1, gamma)``; this keeps the
    stationarity violation of the result on the order of tol even after
    heavy backtracking.  The step never grows back, and each iterate is
    re-symmetrized to scrub round-off drift.
    """
    if config is None:
        config = SolverConfig()
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("cov must be a square matrix")
    cov = symmetrize(cov)
    p = cov.shape[0]
    thr = reg.as_matrix(p)

    if not np.any(thr > 0.0):
        try:
            cholesky(cov)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(
                "unpenalized problem with a singular covariance has no minimizer"
            ) from exc

    if warm_start is not None:
        theta = symmetrize(np.asarray(warm_start, dtype=float))
        lower = cholesky(theta)
    else:
        theta = _initial_iterate(cov, thr)
        lower = cholesky(theta)
    theta_inv = spd_inverse(lower)
    f_theta = -logdet(lower) + float(np.sum(cov * theta))

    gamma = config.gamma_init if config.gamma_init is not None else _default_gamma(cov)

    for it in range(config.max_iter + 1):
        grad = cov - theta_inv
        target = soft_threshold(theta - gamma * grad, gamma * thr)
        residual = float(np.max(np.abs(theta - target)))
        if residual <= config.tol * min(1.0, gamma):
            return _finalize(theta, reg, gamma, residual, it, config)
        if it == config.max_iter:
            raise NotConverged(
                f"no fixed point after {it} iterations, residual {residual:.3e}",
                iterations=it,
                residual=residual,
            )

        accepted = False
        for _ in range(MAX_BACKTRACKS):
            cand = symmetrize(soft_threshold(theta - gamma * grad, gamma * thr))
            delta = cand - theta
            try:
                lower = cholesky(cand)
            except NotPositiveDefinite:
                gamma *= config.backtrack_factor
                continue
            f_cand = -logdet(lower) + float(np.sum(cov * cand))
            quad = (
                f_theta
                + float(np.sum(grad * delta))
                + float(np.sum(delta * delta)) / (2.0 * gamma)
            )
            if f_cand <= quad + DECREASE_SLACK * max(1.0, abs(f_theta)):
                accepted = True
                break
            gamma *= config.backtrack_factor
        if not accepted:
            raise NotPositiveDefinite(
                f"no positive definite sufficient-decrease step after "
                f"{MAX_BACKTRACKS} backtracking reductions of gamma"
            )
        theta = cand
        f_theta = f_cand
        theta_inv = spd_inverse(lower)

    raise AssertionError("unreachable")


def _finalize(
    theta: np.ndarray,
    reg: Regularization,
    gamma: float,
    residual: float,
    iterations: int,
    config: SolverConfig,
) -> PrecisionEstimate:
    mask = np.abs(theta) > config.support_tol
    return PrecisionEstimate(
        theta=theta,
        reg=reg,
        gamma=gamma,
        support=SupportSet.from_matrix_mask(mask),
        fixed_point_residual=residual,
        iterations=iterations,
    )


def check_optimality(est: PrecisionEstimate, cov: np.ndarray) -> float:
    """Largest violation of the stationarity conditions of the solved problem.

    With R = theta^{-1} - S and thresholds T, a minimizer satisfies
    R_ij = T_ij * sign(theta_ij) wherever theta_ij is nonzero and
    |R_ij| <= T_ij elsewhere.  Returns the max over entries of the distance
    to those conditions; near zero certifies the estimate independently of
    how it was computed.
    """
    r = spd_inverse(cholesky(est.theta)) - symmetrize(np.asarray(cov, dtype=float))
    thr = est.reg.as_matrix(est.dim)
    on = est.support.as_matrix_mask()
    violation = np.where(
        on,
        np.abs(r - thr * np.sign(est.theta)),
        np.maximum(np.abs(r) - thr, 0.0),
    )
    return float(np.max(violation))


def check_nondegeneracy(
    est: PrecisionEstimate, cov: np.ndarray, margin: float
) -> Tuple[bool, float]:
    """Whether every zero entry is strictly inside its threshold interval.

    For each off-support entry the slack is T_ij - |theta^{-1} - S|_ij; the
    estimate is non-degenerate at the given margin when every slack is at
    least margin.  Returns (ok, worst slack); an empty off-support set is
    vacuously non-degenerate with infinite slack.
    """
    if not margin > 0.0:
        raise ValueError("margin must be > 0")
    off = ~est.support.as_matrix_mask()
    if not off.any():
        return True, float("inf")
    r = spd_inverse(cholesky(est.theta)) - symmetrize(np.asarray(cov, dtype=float))
    thr = est.reg.as_matrix(est.dim)
    worst = float(np.min(thr[off] - np.abs(r[off])))
    return worst >= margin, worst
