"""Damped Newton iteration for discretized boundary value problems.

The Jacobian callback may return a BandedMatrix, a scipy sparse matrix, or a
dense array; the appropriate factorization is dispatched on type.  Damping is
plain backtracking: the step is halved until the sup-norm of the residual
decreases or the step fraction underflows.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .banded import BandedMatrix
from .errors import SingularMatrixError

_MAX_HALVINGS = 30


@dataclass
class NewtonReport:
    converged: bool = False
    iterations: int = 0
    final_residual: float = np.inf
    damping_history: list = field(default_factory=list)

    def __str__(self):
        state = "converged" if self.converged else "NOT converged"
        return (
            f"Newton {state}: {self.iterations} iterations, "
            f"residual {self.final_residual:.3e}"
        )


def _linear_solve(J, rhs):
    if isinstance(J, BandedMatrix):
        return J.solve(rhs)
    if sp.issparse(J):
        x = spla.spsolve(J.tocsc(), rhs)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("sparse LU produced non-finite solution")
        return x
    return np.linalg.solve(np.asarray(J, dtype=float), rhs)


def newton_solve(residual, jacobian, x0, tol=1e-10, max_iter=50,
                 check_jacobian=False):
    """Solve residual(x) = 0 starting from x0.

    Returns (x, NewtonReport).  Non-convergence is reported, not raised;
    a singular Jacobian raises SingularMatrixError.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if check_jacobian:
        _probe_jacobian(residual, jacobian, x)
    report = NewtonReport()
    r = np.atleast_1d(residual(x))
    rnorm = float(np.max(np.abs(r)))
    for it in range(1, max_iter + 1):
        if rnorm <= tol:
            report.converged = True
            break
        J = jacobian(x)
        try:
            step = _linear_solve(J, -r)
        except (np.linalg.LinAlgError, SingularMatrixError) as exc:
            if it == 1:
                if isinstance(exc, SingularMatrixError):
                    raise
                raise SingularMatrixError(str(exc)) from exc
            # Singular Jacobian reached mid-iteration (e.g. a rootless
            # residual funneling the iterate into a critical point): report
            # non-convergence instead of raising.
            report.final_residual = rnorm
            return x, report
        frac = 1.0
        for _ in range(_MAX_HALVINGS):
            x_try = x + frac * step
            r_try = np.atleast_1d(residual(x_try))
            rnorm_try = float(np.max(np.abs(r_try)))
            if np.isfinite(rnorm_try) and rnorm_try < rnorm:
                break
            frac *= 0.5
        else:
            # Step underflow: no decrease found; stop with current iterate.
            report.iterations = it
            report.damping_history.append(frac)
            report.final_residual = rnorm
            return x, report
        x, r, rnorm = x_try, r_try, rnorm_try
        report.iterations = it
        report.damping_history.append(frac)
    report.final_residual = rnorm
    if rnorm <= tol:
        report.converged = True
    return x, report


def _probe_jacobian(residual, jacobian, x, n_probe=5, rtol=1e-4):
    """Finite-difference consistency check of the Jacobian at x along a few
    random directions (diagnostics only)."""
    rng = np.random.default_rng(0)
    J = jacobian(x)
    r0 = np.atleast_1d(residual(x))
    h = 1e-6 * max(1.0, float(np.max(np.abs(x))))
    for _ in range(n_probe):
        v = rng.standard_normal(x.size)
        v /= np.max(np.abs(v))
        fd = (np.atleast_1d(residual(x + h * v)) - r0) / h
        if isinstance(J, BandedMatrix):
            Jv = J.matvec(v)
        elif sp.issparse(J):
            Jv = J @ v
        else:
            Jv = np.asarray(J) @ v
        scale = max(np.max(np.abs(Jv)), np.max(np.abs(fd)), 1.0)
        if np.max(np.abs(Jv - fd)) > rtol * scale * 100:
            raise ValueError(
                "jacobian inconsistent with residual under finite-difference "
                f"probe (error {np.max(np.abs(Jv - fd)):.3e})"
            )
