"""Dense symmetric linear algebra primitives.

Conventions, fixed package-wide:

* Matrices are dense float64 ``numpy`` arrays of shape ``(p, p)``.
  Symmetry is maintained by symmetrizing writes, ``A <- (A + A.T) / 2``,
  after any operation that could break it.
* ``vec`` is column-major: matrix entry ``(i, j)`` maps to flat index
  ``k = i + j * p`` and back via ``i = k % p``, ``j = k // p``.  This is
  the single place the index map is defined; every support set and
  Kronecker computation in the package uses it.
* The Kronecker product uses the standard block layout,
  ``(A kron B)[r, c] = A[r // p, c // p] * B[r % p, c % p]``, so that
  ``vec(B @ X @ A.T) == (A kron B) @ vec(X)`` under the column-major
  ``vec`` above.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import NotPositiveDefinite, SingularSystem

# Relative pivot threshold below which a symmetric solve is declared
# singular: pivot < SINGULARITY_RTOL * max |diagonal of the system|.
SINGULARITY_RTOL = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(a + a.T) / 2`` as a new array."""
    a = np.asarray(a, dtype=float)
    return (a + a.T) / 2.0


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square 2-d array, got shape {a.shape}")
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == a`` up to round-off.

    Parameters
    ----------
    a : ndarray, shape (p, p)
        Symmetric matrix; only its lower triangle is read.

    Returns
    -------
    ndarray
        Lower-triangular factor with strictly positive diagonal.

    Raises
    ------
    NotPositiveDefinite
        If a pivot <= 0 is encountered, i.e. ``a`` is not SPD.
    """
    a = _as_square(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"matrix is not positive definite: {exc}") from exc


def logdet(lower: np.ndarray) -> float:
    """Log-determinant of the matrix factored by a lower Cholesky factor.

    ``logdet(cholesky(A)) == log det A`` for SPD ``A``, computed as
    ``2 * sum_i log lower[i, i]``.
    """
    return float(2.0 * np.sum(np.log(np.diag(lower))))


def spd_inverse(lower: np.ndarray) -> np.ndarray:
    """Inverse of the SPD matrix factored by a lower Cholesky factor.

    Returns a symmetric matrix ``X`` with ``A @ X == I`` up to round-off,
    where ``A = lower @ lower.T``.
    """
    p = lower.shape[0]
    inv = scipy.linalg.cho_solve((lower, True), np.eye(p), check_finite=False)
    return symmetrize(inv)


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization: entry ``(i, j)`` lands at ``i + j * p``."""
    return np.asarray(a, dtype=float).ravel(order="F")


def unvec(v: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`vec`; exact round trip: ``unvec(vec(A), p) == A``."""
    return np.asarray(v, dtype=float).reshape((p, p), order="F")


@dataclass(frozen=True)
class SupportSet:
    """Ordered subset of ``[p**2)`` indexing nonzero entries of a vectorized
    symmetric matrix.

    ``indices`` is sorted and unique; ``mask`` is a dense boolean array of
    length ``dim2`` for O(1) membership, with ``mask[k]`` true iff
    ``k in indices``.
    """

    dim2: int
    indices: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = int(round(np.sqrt(self.dim2)))
        if p * p != self.dim2 or self.dim2 < 1:
            raise ValueError(f"dim2 must be a positive perfect square, got {self.dim2}")
        idx = np.asarray(self.indices, dtype=np.intp)
        if idx.ndim != 1:
            raise ValueError("indices must be 1-d")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dim2):
            raise ValueError("indices out of range")
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "SupportSet":
        """Build from a flat boolean mask of length ``p**2``."""
        mask = np.asarray(mask, dtype=bool).ravel()
        return cls(dim2=mask.size, indices=np.flatnonzero(mask), mask=mask)

    @classmethod
    def from_matrix_mask(cls, mask2d: np.ndarray) -> "SupportSet":
        """Build from a ``(p, p)`` boolean mask, vectorized column-major."""
        return cls.from_mask(np.asarray(mask2d, dtype=bool).ravel(order="F"))

    def as_matrix_mask(self) -> np.ndarray:
        """The ``(p, p)`` boolean mask this set vectorizes."""
        p = int(round(np.sqrt(self.dim2)))
        return self.mask.reshape((p, p), order="F")

    def __len__(self) -> int:
        return int(self.indices.size)


def kron_restricted(a: np.ndarray, b: np.ndarray, support: SupportSet) -> np.ndarray:
    """Rows and columns ``support`` of ``a kron b``, without materializing it.

    Entry ``(r, c)`` of the result equals
    ``(a kron b)[support.indices[r], support.indices[c]]``, computed directly
    by index arithmetic, so it matches extraction from the dense Kronecker
    product bit for bit (same floating-point products).
    """
    a = _as_square(a, "a")
    b = _as_square(b, "b")
    p = a.shape[0]
    if b.shape[0] != p:
        raise ValueError("a and b must share the same dimension")
    if support.dim2 != p * p:
        raise ValueError("support dimension does not match the matrices")
    idx = support.indices
    outer = idx // p
    inner = idx % p
    return a[np.ix_(outer, outer)] * b[np.ix_(inner, inner)]


def solve_symmetric(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m @ x = rhs`` for symmetric ``m``.

    Tries a Cholesky factorization first (the restricted Kronecker blocks
    this serves are SPD when the precision estimate is), falling back to a
    pivoted LU when a pivot fails.  Multiple right-hand sides share one
    factorization.

    Raises
    ------
    SingularSystem
        When a factorization pivot falls below
        ``SINGULARITY_RTOL * max |diag(m)|``.
    """
    m = _as_square(m, "system matrix")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != m.shape[0]:
        raise ValueError("rhs rows must match the system dimension")
    diag_scale = np.max(np.abs(np.diag(m))) if m.size else 0.0
    threshold = SINGULARITY_RTOL * max(diag_scale, np.finfo(float).tiny)
    try:
        c, low = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        return _solve_lu(m, rhs, threshold)
    # Cholesky pivots are the squared factor diagonal.
    if np.min(np.diag(c)) ** 2 < threshold:
        raise SingularSystem(
            "symmetric system is numerically singular (Cholesky pivot below "
            f"{threshold:.3e})"
        )
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)


def _solve_lu(m: np.ndarray, rhs: np.ndarray, threshold: float) -> np.ndarray:
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # scipy warns on exact singularity; the pivot check below handles it
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < threshold:
        raise SingularSystem(
            f"symmetric system is numerically singular (LU pivot below {threshold:.3e})"
        )
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
