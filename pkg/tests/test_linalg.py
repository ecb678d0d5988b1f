"""Dense symmetric linear algebra primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glassotune.exceptions import NotPositiveDefinite, SingularSystem
from glassotune.linalg import (
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

from conftest import random_spd


def brute_force_det(a: np.ndarray) -> float:
    """Cofactor expansion along the first row; oracle for p <= 4."""
    p = a.shape[0]
    if p == 1:
        return float(a[0, 0])
    total = 0.0
    for j in range(p):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        total += (-1.0) ** j * a[0, j] * brute_force_det(minor)
    return total


def dense_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(A kron B)[r, c] = A[r//p, c//p] * B[r%p, c%p], by double loop."""
    p = a.shape[0]
    out = np.empty((p * p, p * p))
    for r in range(p * p):
        for c in range(p * p):
            out[r, c] = a[r // p, c // p] * b[r % p, c % p]
    return out


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))

    def test_reconstructs(self):
        a = np.array([[4.0, 2.0], [2.0, 3.0]])
        lower = cholesky(a)
        assert np.max(np.abs(lower @ lower.T - a)) <= 1e-12

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.diag([1.0, -1.0]))

    def test_lower_triangular_positive_diagonal(self, rng):
        a = random_spd(rng, 6)
        lower = cholesky(a)
        assert np.allclose(lower, np.tril(lower))
        assert np.all(np.diag(lower) > 0)


class TestLogdet:
    def test_identity(self):
        assert logdet(cholesky(np.eye(5))) == 0.0

    def test_diagonal(self):
        assert logdet(cholesky(np.diag([2.0, 2.0]))) == pytest.approx(2 * np.log(2))

    def test_two_by_two(self):
        a = np.array([[4.0, 2.0], [2.0, 3.0]])
        assert logdet(cholesky(a)) == pytest.approx(np.log(8.0))

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_against_cofactor_expansion(self, p, rng):
        a = random_spd(rng, p)
        expected = np.log(brute_force_det(a))
        assert abs(logdet(cholesky(a)) - expected) <= 1e-10


class TestSpdInverse:
    def test_identity(self):
        np.testing.assert_allclose(spd_inverse(cholesky(np.eye(4))), np.eye(4))

    def test_diagonal(self):
        inv = spd_inverse(cholesky(np.diag([2.0, 4.0])))
        np.testing.assert_allclose(inv, np.diag([0.5, 0.25]))

    def test_multiply_back(self, rng):
        a = random_spd(rng, 5)
        x = spd_inverse(cholesky(a))
        assert np.max(np.abs(a @ x - np.eye(5))) <= 1e-10

    def test_involution(self, rng):
        a = random_spd(rng, 5)
        twice = spd_inverse(cholesky(spd_inverse(cholesky(a))))
        assert np.max(np.abs(twice - a)) <= 1e-8

    def test_output_symmetric(self, rng):
        a = random_spd(rng, 7)
        x = spd_inverse(cholesky(a))
        np.testing.assert_array_equal(x, x.T)


class TestVec:
    def test_column_major(self):
        a = np.array([[1.0, 3.0], [2.0, 4.0]])
        np.testing.assert_array_equal(vec(a), [1.0, 2.0, 3.0, 4.0])

    def test_identity(self):
        np.testing.assert_array_equal(vec(np.eye(2)), [1.0, 0.0, 0.0, 1.0])

    def test_round_trip(self, rng):
        a = rng.standard_normal((5, 5))
        np.testing.assert_array_equal(unvec(vec(a), 5), a)

    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=25, deadline=None)
    def test_round_trip_bitwise(self, p, seed):
        a = np.random.default_rng(seed).standard_normal((p, p))
        assert np.array_equal(unvec(vec(a), p), a)


class TestSupportSet:
    def test_from_mask_round_trip(self):
        mask = np.array([True, False, False, True])
        s = SupportSet.from_mask(mask)
        assert list(s.indices) == [0, 3]
        assert len(s) == 2
        np.testing.assert_array_equal(s.mask, mask)

    def test_matrix_mask_round_trip(self, rng):
        m = rng.random((4, 4)) > 0.5
        s = SupportSet.from_matrix_mask(m)
        np.testing.assert_array_equal(s.as_matrix_mask(), m)

    def test_column_major_indexing(self):
        # entry (i, j) lives at flat index i + j*p
        m = np.zeros((3, 3), dtype=bool)
        m[1, 2] = True
        s = SupportSet.from_matrix_mask(m)
        assert list(s.indices) == [1 + 2 * 3]

    def test_rejects_unsorted_indices(self):
        with pytest.raises(ValueError):
            SupportSet(
                dim2=4,
                indices=np.array([3, 0]),
                mask=np.array([True, False, False, True]),
            )

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SupportSet.from_mask(np.array([True] * 3))  # length not a square


class TestKronRestricted:
    def test_identity_pair(self):
        s = SupportSet.from_mask(np.array([True, False, False, True]))
        np.testing.assert_array_equal(
            kron_restricted(np.eye(2), np.eye(2), s), np.eye(2)
        )

    def test_full_support_equals_dense(self, rng):
        a, b = random_spd(rng, 3), random_spd(rng, 3)
        s = SupportSet.from_mask(np.ones(9, dtype=bool))
        np.testing.assert_array_equal(kron_restricted(a, b, s), dense_kron(a, b))

    def test_single_index(self, rng):
        a, b = random_spd(rng, 3), random_spd(rng, 3)
        for k in range(9):
            s = SupportSet.from_mask(np.eye(9, dtype=bool)[k])
            expected = a[k // 3, k // 3] * b[k % 3, k % 3]
            assert kron_restricted(a, b, s)[0, 0] == expected

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_arbitrary_support_matches_extraction(self, p, rng):
        a, b = random_spd(rng, p), random_spd(rng, p)
        full = dense_kron(a, b)
        for _ in range(5):
            mask = rng.random(p * p) > 0.4
            if not mask.any():
                mask[0] = True
            s = SupportSet.from_mask(mask)
            idx = s.indices
            np.testing.assert_array_equal(
                kron_restricted(a, b, s), full[np.ix_(idx, idx)]
            )

    def test_matches_kron_vec_identity(self, rng):
        # vec(B X A^T) == (A kron B) vec(X) under the column-major vec
        a, b = random_spd(rng, 3), random_spd(rng, 3)
        x = rng.standard_normal((3, 3))
        s = SupportSet.from_mask(np.ones(9, dtype=bool))
        left = vec(b @ x @ a.T)
        right = kron_restricted(a, b, s) @ vec(x)
        np.testing.assert_allclose(left, right, atol=1e-12)


class TestSolveSymmetric:
    def test_identity(self):
        b = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(solve_symmetric(np.eye(3), b), b)

    def test_diagonal(self):
        x = solve_symmetric(np.diag([2.0, 5.0]), np.array([4.0, 10.0]))
        np.testing.assert_allclose(x, [2.0, 2.0])

    def test_residual(self, rng):
        m = random_spd(rng, 6)
        b = rng.standard_normal(6)
        x = solve_symmetric(m, b)
        assert np.max(np.abs(m @ x - b)) <= 1e-10

    def test_multiple_rhs(self, rng):
        m = random_spd(rng, 5)
        b = rng.standard_normal((5, 3))
        x = solve_symmetric(m, b)
        assert x.shape == (5, 3)
        assert np.max(np.abs(m @ x - b)) <= 1e-10

    def test_singular_raises(self):
        m = np.ones((3, 3))  # rank one
        with pytest.raises(SingularSystem):
            solve_symmetric(m, np.array([1.0, 1.0, 1.0]))

    def test_symmetric_indefinite_falls_back(self):
        # not PD, still solvable: exercises the LU fallback path
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        x = solve_symmetric(m, np.array([3.0, 4.0]))
        np.testing.assert_allclose(x, [4.0, 3.0])


def test_symmetrize(rng):
    a = rng.standard_normal((4, 4))
    s = symmetrize(a)
    np.testing.assert_array_equal(s, s.T)
    np.testing.assert_allclose(s, (a + a.T) / 2)
