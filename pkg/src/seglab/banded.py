"""Banded matrix storage, LU factorization, and linear solves.

Thin wrapper around the LAPACK band routines (dgbtrf/dgbtrs via scipy).
Storage follows the LAPACK convention: a matrix with lower bandwidth kl and
upper bandwidth ku is held in a (kl+ku+1, n) array ``bands`` with entry
A[i, j] at bands[ku + i - j, j].  Factorization needs kl extra rows of
workspace for pivoting fill-in; that array is kept separately.
"""

import numpy as np
from scipy.linalg import lapack
from scipy.sparse import dia_matrix

from .errors import SingularMatrixError

# Relative pivot threshold below which a factorization is declared singular.
_PIVOT_TOL = 1e-14


class BandedMatrix:
    """Square banded matrix with packed storage and cached LU factors."""

    def __init__(self, n, kl, ku):
        if n < 1 or kl < 0 or ku < 0:
            raise ValueError("need n >= 1 and nonnegative bandwidths")
        self.n = n
        self.kl = kl
        self.ku = ku
        self.bands = np.zeros((kl + ku + 1, n))
        self._lu = None
        self._piv = None

    @classmethod
    def from_dense(cls, A):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("matrix must be square")
        nz = np.nonzero(A)
        kl = int(np.max(nz[0] - nz[1], initial=0))
        ku = int(np.max(nz[1] - nz[0], initial=0))
        M = cls(n, kl, ku)
        for i, j in zip(*nz):
            M.set(i, j, A[i, j])
        return M

    def _band_row(self, i, j):
        if abs(i - j) > (self.kl if i > j else self.ku):
            raise IndexError(
                f"entry ({i},{j}) outside band (kl={self.kl}, ku={self.ku})"
            )
        return self.ku + i - j

    def set(self, i, j, value):
        self.bands[self._band_row(i, j), j] = value
        self._lu = None

    def add(self, i, j, value):
        self.bands[self._band_row(i, j), j] += value
        self._lu = None

    def get(self, i, j):
        if abs(i - j) > (self.kl if i > j else self.ku):
            return 0.0
        return self.bands[self.ku + i - j, j]

    def set_row(self, i, cols, values):
        """Overwrite row i: zero all representable entries, then set the
        given columns."""
        for j in range(max(0, i - self.kl), min(self.n, i + self.ku + 1)):
            self.bands[self.ku + i - j, j] = 0.0
        for j, v in zip(cols, values):
            self.set(i, j, v)

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(max(0, i - self.kl), min(self.n, i + self.ku + 1)):
                A[i, j] = self.bands[self.ku + i - j, j]
        return A

    def to_sparse(self):
        offsets = np.arange(self.ku, -self.kl - 1, -1)
        return dia_matrix((self.bands, offsets), shape=(self.n, self.n)).tocsr()

    def matvec(self, x):
        return self.to_sparse() @ x

    def norm_inf(self):
        return float(np.max(np.abs(self.to_sparse()).sum(axis=1)))

    def factor(self):
        """LU-factor with partial pivoting; cached until the matrix changes."""
        if self._lu is not None:
            return
        ab = np.zeros((2 * self.kl + self.ku + 1, self.n))
        ab[self.kl :, :] = self.bands
        lu, piv, info = lapack.dgbtrf(ab, self.kl, self.ku)
        if info < 0:
            raise ValueError(f"illegal argument {-info} to dgbtrf")
        if info > 0:
            raise SingularMatrixError(
                f"zero pivot at index {info - 1} in banded LU",
                pivot_index=info - 1,
            )
        # Guard against pivots that are nonzero but negligible relative to
        # the matrix scale; LAPACK only flags exact zeros.
        diag = np.abs(lu[self.kl + self.ku, :])
        scale = np.max(np.abs(self.bands))
        small = np.flatnonzero(diag <= _PIVOT_TOL * max(scale, 1e-300))
        if small.size:
            raise SingularMatrixError(
                f"pivot {diag[small[0]]:.3e} at index {int(small[0])} below "
                f"tolerance (matrix scale {scale:.3e})",
                pivot_index=int(small[0]),
            )
        self._lu = lu
        self._piv = piv

    def solve(self, rhs, transpose=False):
        self.factor()
        b = np.asarray(rhs, dtype=float)
        flat = b.ndim == 1
        if flat:
            b = b[:, None]
        x, info = lapack.dgbtrs(
            self._lu, self.kl, self.ku, b, self._piv, trans=1 if transpose else 0
        )
        if info != 0:
            raise SingularMatrixError(f"dgbtrs failed with info={info}")
        return x[:, 0] if flat else x


def banded_solve(A, rhs):
    """Solve A x = rhs with one step of iterative refinement.

    Meets the residual contract ||Ax - rhs||_inf <= 1e-10 (||A|| ||x|| + ||rhs||)
    for well-scaled systems; raises SingularMatrixError (with the pivot
    index) when the factorization detects singularity to tolerance.
    """
    x = A.solve(rhs)
    r = np.asarray(rhs, dtype=float) - A.matvec(x)
    x = x + A.solve(r)
    return x
