"""Exact penalty derivatives of graphical lasso solutions.

At a non-degenerate solution the soft-threshold fixed point is locally
smooth in the penalty, and differentiating it on the support of theta
yields a linear system whose coefficient matrix is the Kronecker square of
theta^{-1} restricted to support coordinates.  The derivative with respect
to a scalar penalty solves that system against -sign(theta) on the support;
per-entry weight derivatives share the same coefficient matrix, so their
contraction against a criterion gradient collapses into a single adjoint
solve.  Off-support derivatives are exactly zero.

Also provides the hold-out validation criterion (unpenalized Gaussian
negative log-likelihood on left-out data) and a Frobenius relative error
against a known ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateSupport, ResourceLimit
from .glasso import PrecisionEstimate
from .linalg import (
    SupportSet,
    cholesky,
    kron_restricted,
    logdet,
    solve_symmetric,
    spd_inverse,
    symmetrize,
    unvec,
    vec,
)

# Support entries whose fixed-point argument sits within this relative
# distance of its threshold are flagged as degenerate: the derivative does
# not exist there.
BOUNDARY_TOL = 1e-6

# The restricted system is dense |S| x |S|; refuse beyond this size.
SUPPORT_CAP = 20000


@dataclass(frozen=True)
class ScalarJacobian:
    """Entrywise derivative of the solution with respect to a scalar penalty.

    ``values[i, j]`` is d theta_hat[i, j] / d lam; exactly zero off the
    support the Jacobian was built on.
    """

    dim: int
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class WeightedHypergradient:
    """Gradient of an outer criterion with respect to per-entry weights.

    ``values[k, l]`` is d C(theta_hat(weights)) / d weights[k, l], exactly
    zero off-support.  ``y`` keeps the adjoint solve vector (one entry per
    support coordinate) for diagnostics; it is None on the naive path.
    """

    dim: int
    values: np.ndarray = field(repr=False)
    y: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class CriterionValue:
    """Hold-out criterion value and its gradient at the evaluation point."""

    value: float
    gradient: np.ndarray = field(repr=False)


def support_from_estimate(est: PrecisionEstimate, cov: np.ndarray) -> SupportSet:
    """Validated support of a converged estimate.

    Returns the entries of theta with magnitude above the solver's support
    tolerance, after checking that the same set is recovered from the
    fixed-point argument zhat = theta - gamma * (cov - theta^{-1}) compared
    against its thresholds.  ``cov`` must be the covariance the estimate
    was solved against.

    Raises
    ------
    DegenerateSupport
        If any |zhat| entry sits within BOUNDARY_TOL (relative) of its
        threshold, or if the two support readings disagree.  In either
        case the solution is at or near a kink where no derivative exists.
    """
    theta = est.theta
    theta_inv = spd_inverse(cholesky(theta))
    cov = symmetrize(np.asarray(cov, dtype=float))
    thr = est.reg.as_matrix(est.dim)

    zhat = theta - est.gamma * (cov - theta_inv)
    t = est.gamma * thr
    gap = np.abs(np.abs(zhat) - t)
    near = gap < BOUNDARY_TOL * t  # vacuous where the threshold is zero
    if near.any():
        k, l = np.argwhere(near)[0]
        raise DegenerateSupport(
            f"|zhat| within {BOUNDARY_TOL:g} (relative) of its threshold at "
            f"entry ({k}, {l}); the solution map is not differentiable here"
        )

    mask_theta = est.support.as_matrix_mask()
    mask_z = np.abs(zhat) > t
    if not np.array_equal(mask_theta, mask_z):
        raise DegenerateSupport(
            "support read from theta disagrees with the fixed-point "
            "threshold comparison; estimate is too close to a kink"
        )
    return est.support


def _restricted_kron(est: PrecisionEstimate, support: SupportSet) -> np.ndarray:
    if support.dim2 != est.dim * est.dim:
        raise ValueError("support does not match the estimate's dimension")
    if len(support) > SUPPORT_CAP:
        raise ResourceLimit(
            f"restricted system would be {len(support)} x {len(support)}, "
            f"cap is {SUPPORT_CAP}"
        )
    theta_inv = spd_inverse(cholesky(est.theta))
    return kron_restricted(theta_inv, theta_inv, support)


def jacobian_scalar(est: PrecisionEstimate, support: SupportSet) -> ScalarJacobian:
    """Derivative of the solution with respect to its scalar penalty level.

    Solves the support-restricted system K y = -sign(vec theta)_S with
    K the restricted Kronecker square of theta^{-1}, and scatters y back
    to a p x p matrix with zeros off-support.  The result does not depend
    on the prox step gamma: the step scales both sides of the system and
    cancels.

    Raises SingularSystem if the restricted coefficient matrix is not
    invertible and ResourceLimit if the support is larger than SUPPORT_CAP.
    """
    p = est.dim
    k = _restricted_kron(est, support)
    sign_s = np.sign(vec(est.theta))[support.indices]
    y = solve_symmetric(k, -sign_s)
    flat = np.zeros(p * p)
    flat[support.indices] = y
    return ScalarJacobian(dim=p, values=unvec(flat, p))


def hypergradient_scalar(jac: ScalarJacobian, grad_c: np.ndarray) -> float:
    """Chain rule for the scalar penalty: <jacobian, criterion gradient>."""
    grad_c = np.asarray(grad_c, dtype=float)
    if grad_c.shape != jac.values.shape:
        raise ValueError("criterion gradient shape does not match the Jacobian")
    return float(np.sum(jac.values * grad_c))


def hypergradient_weighted(
    est: PrecisionEstimate,
    support: SupportSet,
    grad_c: np.ndarray,
    naive: bool = False,
) -> WeightedHypergradient:
    """Gradient of the outer criterion with respect to every penalty weight.

    The derivative of the solution in weight (k, l) solves the restricted
    system against a one-hot right-hand side -sign(theta_kl) * e_pos(k,l),
    so contracting all of them against grad_c only needs the single adjoint
    solve y = K^{-1} vec(grad_c)_S (K is symmetric):

        out[k, l] = -sign(theta_kl) * y[pos(k, l)]   on support, else 0.

    With ``naive=True`` the per-entry derivatives are materialized by
    extracting columns of the dense restricted inverse and contracted one
    by one; same output, quadratically more work.  Kept as an oracle.
    """
    p = est.dim
    grad_c = symmetrize(np.asarray(grad_c, dtype=float))
    if grad_c.shape != (p, p):
        raise ValueError("criterion gradient shape does not match the estimate")
    k = _restricted_kron(est, support)
    idx = support.indices
    sign_s = np.sign(vec(est.theta))[idx]
    rhs = vec(grad_c)[idx]

    if naive:
        k_inv = solve_symmetric(k, np.eye(len(idx)))
        vals = np.empty(len(idx))
        for m in range(len(idx)):
            jac_m = -sign_s[m] * k_inv[:, m]
            vals[m] = float(rhs @ jac_m)
        y = None
    else:
        y = solve_symmetric(k, rhs)
        vals = -sign_s * y
    flat = np.zeros(p * p)
    flat[idx] = vals
    return WeightedHypergradient(dim=p, values=unvec(flat, p), y=y)


def criterion_holdout(theta: np.ndarray, cov_test: np.ndarray) -> CriterionValue:
    """Unpenalized negative log-likelihood of theta on held-out data.

    value = -logdet(theta) + <cov_test, theta>, gradient = cov_test -
    theta^{-1}.  The gradient vanishes exactly at theta = cov_test^{-1}.
    """
    theta = np.asarray(theta, dtype=float)
    cov_test = symmetrize(np.asarray(cov_test, dtype=float))
    lower = cholesky(theta)
    value = -logdet(lower) + float(np.sum(cov_test * theta))
    gradient = symmetrize(cov_test - spd_inverse(lower))
    return CriterionValue(value=value, gradient=gradient)


def relative_error(theta_hat: np.ndarray, theta_true: np.ndarray) -> float:
    """Frobenius distance to the ground truth, relative to its norm."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_hat.shape != theta_true.shape:
        raise ValueError("shapes differ")
    denom = float(np.linalg.norm(theta_true))
    num = float(np.linalg.norm(theta_true - theta_hat))
    if denom == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / denom
