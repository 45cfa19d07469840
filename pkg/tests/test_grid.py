import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seglab.errors import GeometryError
from seglab.grid import (
    Grid,
    apply_radial_laplacian,
    build_grid,
    d1_apply,
    d2_apply,
    mean_curvature_coefficient,
)


def test_uniform_grid_spacing():
    g = build_grid(R=1.0, r0=0.5, n=101, dim=1)
    assert g.n == 101
    assert np.allclose(np.diff(g.nodes), 0.01)
    assert g.refinement == "uniform"


def test_clustered_grid_resolves_layer():
    g = build_grid(R=1.0, r0=0.5, n=400, dim=2, layer_eps=0.05)
    in_layer = np.abs(g.nodes - 0.5) <= 0.05
    assert np.count_nonzero(in_layer) >= 10
    assert np.max(np.diff(g.nodes[in_layer])) <= 0.05 / 10


def test_invalid_geometry_rejected():
    with pytest.raises(GeometryError):
        build_grid(R=1.0, r0=1.2, n=100, dim=1)
    with pytest.raises(GeometryError):
        build_grid(R=1.0, r0=0.5, n=4, dim=1)
    with pytest.raises(GeometryError):
        Grid(nodes=np.array([0.0, 0.5, 0.4, 1.0]), r0=0.5, R=1.0, dim=1)


def test_signed_distance():
    g = build_grid(R=2.0, r0=0.75, n=50, dim=1)
    assert np.allclose(g.signed_distance, g.nodes - 0.75)


def test_laplacian_of_quadratic_dim3():
    g = build_grid(R=1.0, r0=0.5, n=200, dim=3)
    out = apply_radial_laplacian(g.nodes**2, g)
    assert np.allclose(out[1:-1], 6.0, atol=1e-9)


def test_laplacian_of_constant():
    g = build_grid(R=1.0, r0=0.5, n=100, dim=2)
    out = apply_radial_laplacian(np.ones(g.n), g)
    assert np.allclose(out[1:-1], 0.0, atol=1e-10)


def test_laplacian_of_log_dim2():
    nodes = np.linspace(0.5, 1.5, 400)
    g = Grid(nodes=nodes, r0=1.0, R=1.5, dim=2)
    out = apply_radial_laplacian(np.log(nodes), g)
    h = nodes[1] - nodes[0]
    assert np.max(np.abs(out[1:-1])) < 50.0 * h**2


def test_radial_equals_fermi_form():
    # d_rhorho + (dim-1)/rho d_rho == d_rr - H(r) d_r with r = rho - r0 is an
    # algebraic identity; check the coefficient H at every node to rounding.
    g = build_grid(R=1.0, r0=0.4, n=77, dim=3)
    r = g.signed_distance
    H = mean_curvature_coefficient(r[1:], g.r0, g.dim)
    assert np.max(np.abs(-H - (g.dim - 1) / g.nodes[1:])) < 1e-12
    assert abs(mean_curvature_coefficient(0.0, g.r0, g.dim) + (g.dim - 1) / g.r0) < 1e-14


def test_derivative_ops_on_polynomial():
    x = np.sort(np.random.default_rng(1).uniform(0, 1, 60))
    u = 3.0 * x**2 - 2.0 * x + 1.0
    du = d1_apply(u, x)
    d2u = d2_apply(u, x)
    assert np.allclose(du, 6.0 * x - 2.0, atol=1e-9)
    assert np.allclose(d2u[1:-1], 6.0, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(
    r0=st.floats(0.1, 0.9),
    n=st.integers(30, 120),
    dim=st.integers(1, 3),
)
def test_build_grid_invariants(r0, n, dim):
    g = build_grid(R=1.0, r0=r0, n=n, dim=dim)
    assert g.nodes[0] == 0.0
    assert g.nodes[-1] == 1.0
    assert np.all(np.diff(g.nodes) > 0)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(0.02, 0.1))
def test_clustering_meets_contract(eps):
    g = build_grid(R=1.0, r0=0.5, n=600, dim=1, layer_eps=eps)
    in_layer = np.abs(g.nodes - 0.5) <= eps
    assert np.max(np.diff(g.nodes[in_layer])) <= eps / 10
