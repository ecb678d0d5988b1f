import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glassotune.exceptions import NotConverged, NotPositiveDefinite
from glassotune.glasso import (
    PrecisionEstimate,
    Regularization,
    SolverConfig,
    check_nondegeneracy,
    check_optimality,
    objective,
    soft_threshold,
    solve,
)
from glassotune.linalg import SupportSet

from conftest import random_spd


def two_by_two_oracle(cov: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form 2x2 solution with a scalar penalty.

    Stationarity pins the inverse W of the solution: W_ii = S_ii + lam
    (the diagonal of an SPD matrix is positive), and because a 2x2 inverse
    flips the sign of the off-diagonal entry, W_12 = soft_threshold(S_12, lam).
    """
    w = np.array(
        [
            [cov[0, 0] + lam, 0.0],
            [0.0, cov[1, 1] + lam],
        ]
    )
    s12 = cov[0, 1]
    w[0, 1] = w[1, 0] = np.sign(s12) * max(abs(s12) - lam, 0.0)
    return np.linalg.inv(w)


class TestSoftThreshold:
    def test_examples(self):
        z = np.array([3.0, -2.0, 0.5, 0.0])
        np.testing.assert_array_equal(
            soft_threshold(z, np.full(4, 1.0)), [2.0, -1.0, 0.0, 0.0]
        )

    def test_zero_threshold_is_identity(self):
        z = np.array([[1.5, -0.2], [0.0, 3.0]])
        np.testing.assert_array_equal(soft_threshold(z, np.zeros((2, 2))), z)

    def test_entrywise_thresholds(self):
        z = np.array([2.0, 2.0])
        t = np.array([0.5, 3.0])
        np.testing.assert_array_equal(soft_threshold(z, t), [1.5, 0.0])


class TestRegularization:
    def test_requires_exactly_one_form(self):
        with pytest.raises(ValueError):
            Regularization()
        with pytest.raises(ValueError):
            Regularization(lam=0.1, weights=np.ones((2, 2)))

    def test_scalar_validation(self):
        with pytest.raises(ValueError):
            Regularization.scalar(-0.1)
        with pytest.raises(ValueError):
            Regularization.scalar(float("inf"))
        assert Regularization.scalar(0.0).lam == 0.0

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            Regularization.matrix(np.ones((2, 3)))
        with pytest.raises(ValueError):
            Regularization.matrix(np.array([[0.1, -0.2], [-0.2, 0.1]]))
        with pytest.raises(ValueError):
            Regularization.matrix(np.array([[0.1, np.nan], [np.nan, 0.1]]))

    def test_weights_are_symmetrized(self):
        reg = Regularization.matrix(np.array([[0.0, 1.0], [3.0, 0.0]]))
        np.testing.assert_array_equal(reg.weights, [[0.0, 2.0], [2.0, 0.0]])

    def test_scalar_as_matrix(self):
        np.testing.assert_array_equal(
            Regularization.scalar(0.3).as_matrix(2), np.full((2, 2), 0.3)
        )

    def test_matrix_as_matrix_checks_dim(self):
        reg = Regularization.matrix(np.ones((2, 2)))
        with pytest.raises(ValueError):
            reg.as_matrix(3)

    def test_as_matrix_returns_copy(self):
        reg = Regularization.matrix(np.ones((2, 2)))
        out = reg.as_matrix(2)
        out[0, 0] = 99.0
        assert reg.weights[0, 0] == 1.0

    def test_flags(self):
        assert Regularization.scalar(0.1).is_scalar
        assert Regularization.scalar(0.1).dim is None
        assert not Regularization.matrix(np.ones((3, 3))).is_scalar
        assert Regularization.matrix(np.ones((3, 3))).dim == 3


class TestSolverConfig:
    def test_defaults_valid(self):
        cfg = SolverConfig()
        assert cfg.max_iter == 10000
        assert cfg.gamma_init is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_iter": 0},
            {"tol": 0.0},
            {"gamma_init": 0.0},
            {"backtrack_factor": 1.0},
            {"backtrack_factor": 0.0},
            {"support_tol": 0.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestObjective:
    def test_hand_computed(self):
        val = objective(np.eye(2), np.eye(2), Regularization.scalar(0.5))
        assert val == pytest.approx(3.0)  # 0 + 2 + 0.5 * 2

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            objective(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2), Regularization.scalar(0.1))


class TestSolveDiagonal:
    # Above the largest off-diagonal covariance entry the penalty zeroes
    # every off-diagonal entry and the solution is diag(1 / (S_ii + lam)).

    @pytest.mark.parametrize("scale", [1.0, 1.5, 10.0])
    def test_closed_form(self, rng, scale):
        cov = random_spd(rng, 4)
        lam = scale * np.max(np.abs(cov - np.diag(np.diagonal(cov))))
        est = solve(cov, Regularization.scalar(lam))
        off = ~np.eye(4, dtype=bool)
        assert np.max(np.abs(est.theta[off])) <= 1e-12
        np.testing.assert_allclose(
            np.diagonal(est.theta), 1.0 / (np.diagonal(cov) + lam), atol=1e-12
        )

    def test_initial_iterate_is_exact(self, rng):
        cov = random_spd(rng, 3)
        lam = 2.0 * np.max(np.abs(cov - np.diag(np.diagonal(cov))))
        est = solve(cov, Regularization.scalar(lam))
        assert est.iterations == 0
        assert est.support.as_matrix_mask().tolist() == np.eye(3, dtype=bool).tolist()


class TestSolveTwoByTwo:
    @pytest.mark.parametrize("lam", [0.05, 0.3, 0.7])
    def test_matches_closed_form_active(self, lam):
        cov = np.array([[2.0, 0.8], [0.8, 1.5]])
        est = solve(cov, Regularization.scalar(lam), SolverConfig(tol=1e-10))
        np.testing.assert_allclose(est.theta, two_by_two_oracle(cov, lam), atol=1e-8)

    def test_matches_closed_form_inactive(self):
        cov = np.array([[2.0, 0.8], [0.8, 1.5]])
        est = solve(cov, Regularization.scalar(0.9), SolverConfig(tol=1e-10))
        np.testing.assert_allclose(est.theta, two_by_two_oracle(cov, 0.9), atol=1e-8)
        assert est.support.as_matrix_mask().tolist() == [[True, False], [False, True]]

    def test_negative_coupling(self):
        cov = np.array([[1.2, -0.6], [-0.6, 2.0]])
        est = solve(cov, Regularization.scalar(0.2), SolverConfig(tol=1e-10))
        np.testing.assert_allclose(est.theta, two_by_two_oracle(cov, 0.2), atol=1e-8)
        assert est.theta[0, 1] > 0  # inverse flips the off-diagonal sign


class TestSolveProperties:
    def test_unpenalized_recovers_inverse(self, rng):
        cov = random_spd(rng, 3)
        est = solve(cov, Regularization.scalar(0.0), SolverConfig(tol=1e-10))
        np.testing.assert_allclose(est.theta, np.linalg.inv(cov), atol=1e-7)

    def test_residual_within_tolerance(self, rng):
        cov = random_spd(rng, 5)
        cfg = SolverConfig(tol=1e-8)
        est = solve(cov, Regularization.scalar(0.1), cfg)
        assert est.fixed_point_residual <= cfg.tol * min(1.0, est.gamma)

    def test_optimality_certificate(self, rng):
        for p, lam in [(5, 0.1), (8, 0.25)]:
            cov = random_spd(rng, p)
            est = solve(cov, Regularization.scalar(lam))
            assert check_optimality(est, cov) <= 1e-6

    def test_scalar_matches_constant_matrix(self, rng):
        cov = random_spd(rng, 4)
        a = solve(cov, Regularization.scalar(0.2))
        b = solve(cov, Regularization.matrix(np.full((4, 4), 0.2)))
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_step_size_does_not_change_solution(self, rng):
        cov = random_spd(rng, 4)
        thetas = [
            solve(
                cov,
                Regularization.scalar(0.15),
                SolverConfig(tol=1e-10, gamma_init=g),
            ).theta
            for g in (0.05, 0.5, 5.0)
        ]
        np.testing.assert_allclose(thetas[0], thetas[1], atol=1e-8)
        np.testing.assert_allclose(thetas[0], thetas[2], atol=1e-8)

    def test_step_never_grows(self, rng):
        cov = random_spd(rng, 4)
        cfg = SolverConfig(gamma_init=10.0)
        est = solve(cov, Regularization.scalar(0.1), cfg)
        assert est.gamma <= cfg.gamma_init

    def test_warm_start_at_solution_returns_immediately(self, rng):
        cov = random_spd(rng, 4)
        est = solve(cov, Regularization.scalar(0.1))
        again = solve(cov, Regularization.scalar(0.1), warm_start=est.theta)
        assert again.iterations == 0
        np.testing.assert_array_equal(again.theta, est.theta)

    def test_entrywise_weights_respected(self, rng):
        # A huge weight on one off-diagonal entry zeroes exactly that entry.
        cov = random_spd(rng, 3)
        weights = np.full((3, 3), 0.01)
        weights[0, 1] = weights[1, 0] = 100.0
        est = solve(cov, Regularization.matrix(weights), SolverConfig(tol=1e-10))
        assert est.theta[0, 1] == 0.0
        assert check_optimality(est, cov) <= 1e-6

    @settings(max_examples=20, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=10**6),
        lam=st.floats(min_value=0.05, max_value=1.0),
    )
    def test_random_instances_satisfy_stationarity(self, seed, lam):
        cov = random_spd(np.random.default_rng(seed), 3)
        est = solve(cov, Regularization.scalar(lam))
        assert check_optimality(est, cov) <= 1e-6
        assert np.all(np.diagonal(est.support.as_matrix_mask()))


class TestSolveErrors:
    def test_rejects_nonsquare_cov(self):
        with pytest.raises(ValueError):
            solve(np.ones((2, 3)), Regularization.scalar(0.1))

    def test_rejects_mismatched_weights(self, rng):
        cov = random_spd(rng, 3)
        with pytest.raises(ValueError):
            solve(cov, Regularization.matrix(np.ones((2, 2))))

    def test_unpenalized_singular_covariance(self):
        with pytest.raises(NotPositiveDefinite, match="no minimizer"):
            solve(np.ones((2, 2)), Regularization.scalar(0.0))

    def test_rejects_indefinite_warm_start(self, rng):
        cov = random_spd(rng, 2)
        with pytest.raises(NotPositiveDefinite):
            solve(
                cov,
                Regularization.scalar(0.1),
                warm_start=np.array([[1.0, 2.0], [2.0, 1.0]]),
            )

    def test_not_converged_carries_state(self, rng):
        cov = random_spd(rng, 4)
        with pytest.raises(NotConverged) as info:
            solve(cov, Regularization.scalar(0.01), SolverConfig(max_iter=1))
        assert info.value.iterations == 1
        assert info.value.residual > 0.0


class TestCheckOptimality:
    def test_hand_computed_violation(self):
        # theta = cov = I with lam = 0.5: the residual theta^{-1} - S is
        # zero, so each diagonal (on-support) entry misses its condition
        # by exactly lam.
        est = PrecisionEstimate(
            theta=np.eye(2),
            reg=Regularization.scalar(0.5),
            gamma=1.0,
            support=SupportSet.from_matrix_mask(np.eye(2, dtype=bool)),
            fixed_point_residual=0.0,
            iterations=0,
        )
        assert check_optimality(est, np.eye(2)) == pytest.approx(0.5)


class TestCheckNondegeneracy:
    def test_full_support_is_vacuous(self):
        theta = np.array([[2.0, 0.3], [0.3, 1.0]])
        est = PrecisionEstimate(
            theta=theta,
            reg=Regularization.scalar(0.1),
            gamma=1.0,
            support=SupportSet.from_matrix_mask(np.ones((2, 2), dtype=bool)),
            fixed_point_residual=0.0,
            iterations=0,
        )
        ok, slack = check_nondegeneracy(est, np.eye(2), margin=1e-6)
        assert ok and slack == float("inf")

    def test_diagonal_solution_has_positive_slack(self, rng):
        cov = random_spd(rng, 3)
        lam = 2.0 * np.max(np.abs(cov - np.diag(np.diagonal(cov))))
        est = solve(cov, Regularization.scalar(lam))
        ok, slack = check_nondegeneracy(est, cov, margin=lam / 4)
        assert ok and slack >= lam / 2 - 1e-12
        ok_strict, _ = check_nondegeneracy(est, cov, margin=10.0 * lam)
        assert not ok_strict

    def test_rejects_bad_margin(self, rng):
        cov = random_spd(rng, 2)
        est = solve(cov, Regularization.scalar(1.0))
        with pytest.raises(ValueError):
            check_nondegeneracy(est, cov, margin=0.0)
