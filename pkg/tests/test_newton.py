import numpy as np
import pytest

from seglab.banded import BandedMatrix
from seglab.newton import newton_solve


def test_linear_problem_one_iteration():
    x, rep = newton_solve(
        lambda x: x, lambda x: np.eye(1), np.array([7.3]), tol=1e-12
    )
    assert rep.converged
    assert rep.iterations == 1
    assert abs(x[0]) < 1e-12


def test_scalar_sqrt_quadratic_tail():
    residuals = []

    def residual(x):
        r = x**2 - 4.0
        residuals.append(abs(r[0]))
        return r

    x, rep = newton_solve(
        residual, lambda x: np.array([[2.0 * x[0]]]), np.array([3.0]),
        tol=1e-13, max_iter=30,
    )
    assert rep.converged
    assert abs(x[0] - 2.0) < 1e-12
    # quadratic convergence: r_{k+1} <= C r_k^2 on the tail
    tail = [r for r in residuals if 0 < r < 1e-1]
    for a, b in zip(tail, tail[1:]):
        assert b <= 1.0 * a**2 + 1e-15


def test_no_real_root_reports_failure():
    x, rep = newton_solve(
        lambda x: x**2 + 1.0, lambda x: np.array([[2.0 * x[0]]]),
        np.array([1.0]), tol=1e-12, max_iter=20,
    )
    assert not rep.converged
    assert rep.final_residual > 1e-12


def test_banded_jacobian_vector_problem():
    # discrete -u'' + u^3 = s(x) with manufactured solution sin(pi x)
    n = 80
    h = 1.0 / (n + 1)
    xs = np.linspace(h, 1.0 - h, n)
    u_star = np.sin(np.pi * xs)
    source = np.pi**2 * u_star + u_star**3

    def residual(u):
        r = np.empty(n)
        upad = np.concatenate(([0.0], u, [0.0]))
        r = -(upad[2:] - 2.0 * upad[1:-1] + upad[:-2]) / h**2 + u**3 - source
        return r

    def jacobian(u):
        J = BandedMatrix(n, 1, 1)
        for i in range(n):
            J.set(i, i, 2.0 / h**2 + 3.0 * u[i] ** 2)
            if i > 0:
                J.set(i, i - 1, -1.0 / h**2)
            if i < n - 1:
                J.set(i, i + 1, -1.0 / h**2)
        return J

    u, rep = newton_solve(residual, jacobian, np.zeros(n), tol=1e-10)
    assert rep.converged
    assert np.max(np.abs(u - u_star)) < 5.0 * h**2


def test_damping_history_recorded():
    # steep residual forces at least one full-step iteration record
    _, rep = newton_solve(
        lambda x: np.tanh(10.0 * x), lambda x: np.array([[10.0 / np.cosh(10.0 * x[0]) ** 2]]),
        np.array([0.2]), tol=1e-12,
    )
    assert rep.converged
    assert len(rep.damping_history) == rep.iterations
    assert all(0 < f <= 1.0 for f in rep.damping_history)


def test_jacobian_probe_catches_mismatch():
    with pytest.raises(ValueError):
        newton_solve(
            lambda x: x**2 - 4.0, lambda x: np.array([[500.0]]),
            np.array([3.0]), check_jacobian=True,
        )
