"""Radial grids with interface-adapted refinement and signed-distance bookkeeping.

The interface is the sphere (or point, in 1D) rho = r0.  The signed distance
r = rho - r0 is exact in radial geometry; the exterior subdomain is
{rho > r0}.  Curvature bookkeeping follows the convention that the unit
normal points outward, so every principal curvature of the interface equals
-1/r0 and the mean-curvature coefficient of the normal-coordinate Laplacian
is H(r) = -(dim-1)/(r0 + r).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

# Minimum node count accepted by build_grid.
_MIN_NODES = 16

# Required resolution of a declared layer: at least this many nodes per
# layer width on each side of the interface.
_NODES_PER_LAYER = 10


@dataclass(frozen=True)
class Grid:
    """1D radial mesh on [first node, R] with interface at rho = r0."""

    nodes: np.ndarray
    r0: float
    R: float
    dim: int
    refinement: str = "uniform"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise GeometryError("grid needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise GeometryError("grid nodes must be strictly increasing")
        if nodes[0] < 0:
            raise GeometryError("first node must be >= 0")
        if abs(nodes[-1] - self.R) > 1e-13 * max(1.0, abs(self.R)):
            raise GeometryError("last node must equal R")
        if not (0.0 < self.r0 < self.R):
            raise GeometryError(
                f"interface radius r0={self.r0} must lie in (0, R={self.R})"
            )
        if self.dim < 1:
            raise GeometryError("spatial dimension must be >= 1")

    @property
    def n(self):
        return self.nodes.size

    @property
    def signed_distance(self):
        """r(rho) = rho - r0, exact for radial geometry."""
        return self.nodes - self.r0

    def spacing(self):
        return np.diff(self.nodes)


def build_grid(R, r0, n, dim, layer_eps=None):
    """Build a radial grid on [0, R], optionally clustered near rho = r0.

    When ``layer_eps`` is given, node spacing inside the window
    |rho - r0| <= layer_eps is at most layer_eps/10, guaranteeing at least
    10 nodes per layer width on each side.
    """
    if not (0.0 < r0 < R):
        raise GeometryError(f"interface radius r0={r0} must lie in (0, R={R})")
    if n < _MIN_NODES:
        raise GeometryError(f"n={n} too small; need at least {_MIN_NODES} nodes")
    if dim < 1:
        raise GeometryError("spatial dimension must be >= 1")
    if layer_eps is not None and layer_eps <= 0:
        raise GeometryError("layer_eps must be positive")

    if layer_eps is None:
        nodes = np.linspace(0.0, R, n)
        return Grid(nodes=nodes, r0=r0, R=R, dim=dim, refinement="uniform")

    # Cluster by equidistributing the density 1 + gamma*sech^2((rho-r0)/w).
    w = min(2.0 * layer_eps, 0.5 * min(r0, R - r0))
    gamma = 1.0
    for _ in range(60):
        nodes = _equidistribute(R, r0, n, w, gamma)
        if _layer_resolved(nodes, r0, layer_eps):
            return Grid(
                nodes=nodes,
                r0=r0,
                R=R,
                dim=dim,
                refinement=f"sech2-cluster(w={w:.3g}, gamma={gamma:.3g})",
            )
        gamma *= 2.0
    raise GeometryError(
        f"cannot resolve layer_eps={layer_eps} with n={n} nodes; increase n"
    )


def _equidistribute(R, r0, n, w, gamma):
    """Nodes equidistributing rho + gamma*w*tanh((rho-r0)/w) on [0, R]."""
    psi = lambda rho: rho + gamma * w * np.tanh((rho - r0) / w)
    targets = np.linspace(psi(0.0), psi(R), n)
    fine = np.linspace(0.0, R, 40 * n)
    nodes = np.interp(targets, psi(fine), fine)
    nodes[0], nodes[-1] = 0.0, R
    return nodes


def _layer_resolved(nodes, r0, layer_eps):
    mask = np.abs(nodes - r0) <= layer_eps
    if np.count_nonzero(mask) < 2 * _NODES_PER_LAYER + 1:
        return False
    idx = np.flatnonzero(mask)
    lo, hi = max(idx[0] - 1, 0), min(idx[-1] + 1, nodes.size - 1)
    return np.max(np.diff(nodes[lo : hi + 1])) <= layer_eps / _NODES_PER_LAYER


# ----------------------------------------------------------------------
# Finite-difference machinery (second order on smoothly graded grids)
# ----------------------------------------------------------------------

def d1_weights(x):
    """Three-point first-derivative weights (w_left, w_center, w_right)
    at every interior node of the 1D mesh ``x``."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    wl = -hp / (hm * (hm + hp))
    wc = (hp - hm) / (hm * hp)
    wr = hm / (hp * (hm + hp))
    return wl, wc, wr


def d2_weights(x):
    """Three-point second-derivative weights at every interior node."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    wl = 2.0 / (hm * (hm + hp))
    wc = -2.0 / (hm * hp)
    wr = 2.0 / (hp * (hm + hp))
    return wl, wc, wr


def d1_apply(u, x):
    """First derivative of samples ``u`` on mesh ``x``; one-sided second-order
    formulas at the two endpoints."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    wl, wc, wr = d1_weights(x)
    out[1:-1] = wl * u[:-2] + wc * u[1:-1] + wr * u[2:]
    out[0] = _onesided_d1(u[0], u[1], u[2], x[0], x[1], x[2])
    out[-1] = _onesided_d1(u[-1], u[-2], u[-3], x[-1], x[-2], x[-3])
    return out


def d2_apply(u, x):
    """Second derivative of samples ``u`` on mesh ``x``; endpoint values are
    copied from the adjacent interior node (second derivatives are only used
    in sup-norms over regions that contain interior nodes)."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    wl, wc, wr = d2_weights(x)
    out[1:-1] = wl * u[:-2] + wc * u[1:-1] + wr * u[2:]
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def _onesided_d1(u0, u1, u2, x0, x1, x2):
    h1 = x1 - x0
    h2 = x2 - x0
    # Lagrange derivative of the quadratic through the three samples, at x0.
    l0 = -(h1 + h2) / (h1 * h2)
    l1 = h2 / (h1 * (h2 - h1))
    l2 = -h1 / (h2 * (h2 - h1))
    return l0 * u0 + l1 * u1 + l2 * u2


def mean_curvature_coefficient(r, r0, dim):
    """H(r) in the normal-coordinate identity Laplacian = d_rr - H(r) d_r,
    for the sphere rho = r0 with outward normal: H(r) = -(dim-1)/(r0+r)."""
    kappa = -1.0 / r0
    return (dim - 1) * kappa / (1.0 - r * kappa)


def apply_radial_laplacian(field, grid):
    """Second-order discrete radial Laplacian d_rhorho + (dim-1)/rho d_rho.

    Interior nodes only; endpoint entries are set to 0.  A node at rho = 0
    (dim >= 2) uses the regularity closure dim * d_rhorho with the symmetric
    two-point second difference.
    """
    u = np.asarray(field, dtype=float)
    if u.shape != grid.nodes.shape:
        raise GeometryError(
            f"field length {u.size} does not match grid size {grid.n}"
        )
    x = grid.nodes
    out = np.zeros_like(u)
    w2l, w2c, w2r = d2_weights(x)
    out[1:-1] = w2l * u[:-2] + w2c * u[1:-1] + w2r * u[2:]
    if grid.dim > 1:
        w1l, w1c, w1r = d1_weights(x)
        coef = (grid.dim - 1) / x[1:-1]
        out[1:-1] += coef * (w1l * u[:-2] + w1c * u[1:-1] + w1r * u[2:])
    if grid.dim >= 2 and x[0] == 0.0:
        h = x[1] - x[0]
        out[0] = 2.0 * grid.dim * (u[1] - u[0]) / h**2
    return out
