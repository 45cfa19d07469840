"""Newton continuation of the coupled system in the competition strength.

The system solved at each branch point is

    -Lap u1 = f(u1) - beta u1 u2^2,
    -Lap u2 = f(u2) - beta u2 u1^2,

with zero Dirichlet data on the outer boundary (and on the left end in
dim 1; the regularity closure at the origin otherwise).  The branch is
seeded by an assembled ansatz at beta = eps^-4 and marched through an
increasing beta schedule with warm starts.  A failed Newton solve first
triggers geometric bisection of the step (up to 3 levels); if the refined
steps still fail, the branch is truncated and the failure is recorded on
the branch instead of raising.

Positivity is monitored, not enforced: Newton iterates may dip negative
transiently, and the converged fields are clamped at the rounding level
with a warning so quadratic convergence is never destroyed by projection.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .banded import BandedMatrix, banded_solve
from .errors import (
    GeometryError,
    NewtonError,
    SingularMatrixError,
    ValidationError,
)
from .grid import Grid, build_grid, d1_weights, d2_weights

# Final nonnegativity clamp threshold, relative to the field amplitude.
_CLAMP_TOL = 1e-12

# Newton iteration budget per branch point.
_MAX_NEWTON = 25

# Damping ladder for the line search.
_DAMPING = (1.0, 0.5, 0.25, 0.125, 0.0625)

# Full steps allowed when no damping factor reduces the residual.  The
# discrete layer position is pinned to the mesh at the truncation-error
# level, and the residual landscape has folds along the translation
# direction where every damped step stalls; an occasional full step hops
# over the fold, after which damped Newton resumes.
_MAX_HOPS = 8

# Maximum levels of geometric step bisection after a Newton failure.
_MAX_BISECTION = 3

# Minimum nodes inside one layer width; below this the grid is
# re-clustered before the solve.
_NODES_PER_LAYER = 10

# Fraction of the product-peak height defining the interface width.
_WIDTH_LEVEL = 0.1


@dataclass
class BranchPoint:
    beta: float
    u1: np.ndarray
    u2: np.ndarray
    newton_iters: int
    residual: float
    min_value: float
    # The mesh this point was solved on; earlier points keep their own
    # mesh when the branch re-clusters for a narrower layer.
    grid: Grid = None


@dataclass
class SolutionBranch:
    grid: Grid
    points: list = field(default_factory=list)
    truncated: bool = False
    diagnostic: str = ""

    def __post_init__(self):
        betas = [pt.beta for pt in self.points]
        if betas != sorted(betas) or len(set(betas)) != len(betas):
            raise ValidationError("branch betas must be strictly increasing")


def _system_residual(u1, u2, beta, fcfg, grid):
    """Strong-form residual on interior nodes plus the closure rows."""
    x = grid.nodes
    n = x.size
    F1 = np.zeros(n)
    F2 = np.zeros(n)
    w1l, w1c, w1r = d1_weights(x)
    w2l, w2c, w2r = d2_weights(x)
    for u, F in ((u1, F1), (u2, F2)):
        lap = (w2l * u[:-2] + w2c * u[1:-1] + w2r * u[2:])
        if grid.dim > 1:
            du = (w1l * u[:-2] + w1c * u[1:-1] + w1r * u[2:])
            lap = lap + (grid.dim - 1) / x[1:-1] * du
        F[1:-1] = -lap
    F1[1:-1] -= fcfg.f(u1[1:-1]) - beta * u1[1:-1] * u2[1:-1] ** 2
    F2[1:-1] -= fcfg.f(u2[1:-1]) - beta * u2[1:-1] * u1[1:-1] ** 2
    if grid.dim >= 2 and x[0] == 0.0:
        h0 = x[1] - x[0]
        c0 = 2.0 * grid.dim / h0**2
        F1[0] = c0 * (u1[0] - u1[1]) - fcfg.f(u1[0]) + beta * u1[0] * u2[0] ** 2
        F2[0] = c0 * (u2[0] - u2[1]) - fcfg.f(u2[0]) + beta * u2[0] * u1[0] ** 2
    else:
        F1[0] = u1[0]
        F2[0] = u2[0]
    F1[-1] = u1[-1]
    F2[-1] = u2[-1]
    return F1, F2


def _system_jacobian(u1, u2, beta, fcfg, grid):
    """Banded Jacobian with interleaved unknowns, bandwidth 2."""
    x = grid.nodes
    n = x.size
    A = BandedMatrix(2 * n, 2, 2)
    w1l, w1c, w1r = d1_weights(x)
    w2l, w2c, w2r = d2_weights(x)
    drift = (grid.dim - 1) / x[1:-1] if grid.dim > 1 else np.zeros(n - 2)
    diag1 = -fcfg.fu(u1) + beta * u2**2
    diag2 = -fcfg.fu(u2) + beta * u1**2
    cross = 2.0 * beta * u1 * u2
    for k in range(1, n - 1):
        j = k - 1
        ll = -(w2l[j] + drift[j] * w1l[j])
        cc = -(w2c[j] + drift[j] * w1c[j])
        rr = -(w2r[j] + drift[j] * w1r[j])
        r1 = 2 * k
        A.set(r1, 2 * (k - 1), ll)
        A.set(r1, r1, cc + diag1[k])
        A.set(r1, 2 * (k + 1), rr)
        A.set(r1, r1 + 1, cross[k])
        r2 = 2 * k + 1
        A.set(r2, 2 * (k - 1) + 1, ll)
        A.set(r2, r2, cc + diag2[k])
        A.set(r2, 2 * (k + 1) + 1, rr)
        A.set(r2, r2 - 1, cross[k])
    if grid.dim >= 2 and x[0] == 0.0:
        h0 = x[1] - x[0]
        c0 = 2.0 * grid.dim / h0**2
        A.set(0, 0, c0 + diag1[0])
        A.set(0, 2, -c0)
        A.set(0, 1, cross[0])
        A.set(1, 1, c0 + diag2[0])
        A.set(1, 3, -c0)
        A.set(1, 0, cross[0])
    else:
        A.set(0, 0, 1.0)
        A.set(1, 1, 1.0)
    A.set(2 * (n - 1), 2 * (n - 1), 1.0)
    A.set(2 * (n - 1) + 1, 2 * (n - 1) + 1, 1.0)
    return A


def _residual_scale(u1, u2, beta, fcfg):
    return max(
        float(np.max(np.abs(fcfg.f(u1)))),
        float(np.max(np.abs(fcfg.f(u2)))),
        beta * float(np.max(u1 * u2**2)) if beta > 0.0 else 0.0,
        1.0,
    )


def _newton_solve(u1, u2, beta, fcfg, grid, tol):
    """Damped Newton from (u1, u2); returns (u1, u2, iters, residual)."""
    scale = _residual_scale(u1, u2, beta, fcfg)
    target = tol * scale

    def res_norm(a, b):
        F1, F2 = _system_residual(a, b, beta, fcfg, grid)
        return max(float(np.max(np.abs(F1))), float(np.max(np.abs(F2))))

    rnorm = res_norm(u1, u2)
    hops = 0
    for it in range(1, _MAX_NEWTON + 1):
        if rnorm <= target:
            return u1, u2, it - 1, rnorm
        F1, F2 = _system_residual(u1, u2, beta, fcfg, grid)
        rhs = np.empty(2 * grid.n)
        rhs[0::2] = -F1
        rhs[1::2] = -F2
        try:
            A = _system_jacobian(u1, u2, beta, fcfg, grid)
            step = banded_solve(A, rhs)
        except SingularMatrixError as exc:
            raise NewtonError(
                f"singular Jacobian at beta={beta:g}: {exc}"
            ) from exc
        d1 = step[0::2]
        d2 = step[1::2]
        for lam in _DAMPING:
            trial = res_norm(u1 + lam * d1, u2 + lam * d2)
            if trial < rnorm:
                break
        else:
            if hops >= _MAX_HOPS:
                raise NewtonError(
                    f"Newton stalled at beta={beta:g}: residual "
                    f"{rnorm:.3e} not reduced by any damping factor"
                )
            hops += 1
            lam = 1.0
            trial = res_norm(u1 + d1, u2 + d2)
        u1 = u1 + lam * d1
        u2 = u2 + lam * d2
        rnorm = trial
    if rnorm <= target:
        return u1, u2, _MAX_NEWTON, rnorm
    raise NewtonError(
        f"Newton did not converge at beta={beta:g} within {_MAX_NEWTON} "
        f"iterations (residual {rnorm:.3e}, target {target:.3e})"
    )


def _clamp_point(beta, u1, u2, iters, rnorm, grid):
    worst = float(min(np.min(u1), np.min(u2)))
    amp = max(float(np.max(np.abs(u1))), float(np.max(np.abs(u2))), 1.0)
    if worst < 0.0:
        if worst < -_CLAMP_TOL * amp:
            warnings.warn(
                f"branch point beta={beta:g} clamped from {worst:.3e}; "
                "value exceeds the rounding-level threshold"
            )
        else:
            warnings.warn(
                f"branch point beta={beta:g}: rounding-level negative "
                f"value {worst:.3e} clamped"
            )
    return BranchPoint(
        beta=float(beta),
        u1=np.maximum(u1, 0.0),
        u2=np.maximum(u2, 0.0),
        newton_iters=int(iters),
        residual=float(rnorm),
        min_value=worst,
        grid=grid,
    )


def _interface_position(u1, u2, grid):
    prod = u1 * u2
    if np.max(prod) <= 0.0:
        return None
    return float(grid.nodes[int(np.argmax(prod))])


def _recluster(grid, u1, u2, beta, b0=None):
    """New grid clustered at the current interface for the layer width
    implied by beta; fields carried over by cubic interpolation."""
    eps = beta ** -0.25
    pos = _interface_position(u1, u2, grid)
    if pos is None or not (0.0 < pos < grid.R):
        return grid, u1, u2
    layer = eps if b0 is None else eps / b0
    in_layer = int(np.count_nonzero(np.abs(grid.nodes - pos) <= layer))
    if in_layer >= _NODES_PER_LAYER:
        return grid, u1, u2
    fresh = build_grid(grid.R, pos, grid.n, grid.dim, layer_eps=layer)
    # Shape-preserving interpolation: cubic splines overshoot below zero
    # on the steep layer flanks, which corrupts the warm start.  The
    # errstate guard silences spurious overflow warnings from slope
    # ratios over the denormal far tails.
    with np.errstate(all="ignore"):
        s1 = PchipInterpolator(grid.nodes, u1)
        s2 = PchipInterpolator(grid.nodes, u2)
        v1 = np.maximum(s1(fresh.nodes), 0.0)
        v2 = np.maximum(s2(fresh.nodes), 0.0)
    return fresh, v1, v2


def continue_in_beta(seed, fcfg, schedule, tol=1e-9):
    """March the coupled system through the increasing beta schedule.

    ``seed`` is an assembled ansatz field; the first schedule entry must
    match its eps through beta = eps^-4 within 10% (a schedule starting
    at beta = 0 solves the decoupled scalar problems instead and skips
    the check).  Newton failures trigger step bisection; persistent
    failure truncates the branch with the diagnostic recorded.
    """
    schedule = [float(b) for b in schedule]
    if len(schedule) == 0:
        raise ValidationError("beta schedule is empty")
    if any(b < 0.0 for b in schedule):
        raise ValidationError("beta values must be nonnegative")
    if schedule != sorted(schedule) or len(set(schedule)) != len(schedule):
        raise ValidationError("beta schedule must be strictly increasing")
    if schedule[0] > 0.0:
        beta_seed = seed.params.eps ** -4
        if abs(schedule[0] - beta_seed) > 0.1 * beta_seed:
            raise ValidationError(
                f"first beta {schedule[0]:g} does not match the seed's "
                f"eps^-4 = {beta_seed:g} within 10%"
            )
    b0 = getattr(seed.params, "b0", None)

    grid = seed.grid
    u1 = np.asarray(seed.U1, dtype=float).copy()
    u2 = np.asarray(seed.U2, dtype=float).copy()
    branch = SolutionBranch(grid=grid)
    prev_beta = None
    for beta in schedule:
        try:
            if beta > 0.0:
                grid, u1, u2 = _recluster(grid, u1, u2, beta, b0)
            u1, u2, iters, rnorm = _solve_with_bisection(
                u1, u2, prev_beta, beta, fcfg, grid, tol, _MAX_BISECTION
            )
        except (NewtonError, GeometryError) as exc:
            branch.truncated = True
            branch.diagnostic = f"beta={beta:g}: {exc}"
            break
        branch.points.append(_clamp_point(beta, u1, u2, iters, rnorm, grid))
        u1 = branch.points[-1].u1
        u2 = branch.points[-1].u2
        prev_beta = beta
    branch.grid = grid
    return branch


def _solve_with_bisection(u1, u2, beta_prev, beta, fcfg, grid, tol, depth):
    try:
        return _newton_solve(u1, u2, beta, fcfg, grid, tol)
    except NewtonError:
        if depth <= 0 or beta_prev is None or beta_prev <= 0.0:
            raise
        mid = float(np.sqrt(beta_prev * beta))
        if not (beta_prev < mid < beta):
            raise
        w1, w2, _, _ = _solve_with_bisection(
            u1, u2, beta_prev, mid, fcfg, grid, tol, depth - 1
        )
        w1 = np.maximum(w1, 0.0)
        w2 = np.maximum(w2, 0.0)
        return _solve_with_bisection(
            w1, w2, mid, beta, fcfg, grid, tol, depth - 1
        )


def compare_to_ansatz(point, U):
    """Sup-norm discrepancies between a branch point and an ansatz field.

    Grids may differ; the ansatz is interpolated onto the point's grid.
    Reports the global sup, the collar sup (|r| < d), and the outer sup.
    """
    grid = point.grid
    if grid is None:
        raise ValidationError("branch point carries no grid")
    u1, u2 = point.u1, point.u2
    if U.grid is grid or (
        U.grid.n == grid.n and np.array_equal(U.grid.nodes, grid.nodes)
    ):
        V1, V2 = U.U1, U.U2
    else:
        V1 = CubicSpline(U.grid.nodes, U.U1)(grid.nodes)
        V2 = CubicSpline(U.grid.nodes, U.U2)(grid.nodes)
    diff1 = np.abs(u1 - V1)
    diff2 = np.abs(u2 - V2)
    r = grid.nodes - U.grid.r0
    collar = np.abs(r) < U.params.d
    out = {
        "sup": float(max(np.max(diff1), np.max(diff2))),
        "sup_u1": float(np.max(diff1)),
        "sup_u2": float(np.max(diff2)),
    }
    if np.any(collar):
        out["collar_sup"] = float(
            max(np.max(diff1[collar]), np.max(diff2[collar]))
        )
    if np.any(~collar):
        out["outer_sup"] = float(
            max(np.max(diff1[~collar]), np.max(diff2[~collar]))
        )
    return out


def segregation_metrics(point):
    """Overlap integral, interface width, and interface position.

    The overlap is the radial integral of u1^2 u2^2 with the measure
    rho^(dim-1) d rho; the width is the distance between the outermost
    crossings of 10% of the peak of u1 u2.
    """
    grid = point.grid
    if grid is None:
        raise ValidationError("branch point carries no grid")
    x = grid.nodes
    u1, u2 = point.u1, point.u2
    measure = x ** (grid.dim - 1) if grid.dim > 1 else np.ones_like(x)
    overlap = float(np.trapezoid(u1**2 * u2**2 * measure, x))
    prod = u1 * u2
    peak = float(np.max(prod))
    if peak <= 0.0:
        return {"overlap": overlap, "width": 0.0, "position": None}
    level = _WIDTH_LEVEL * peak
    above = prod >= level
    idx = np.nonzero(above)[0]
    lo, hi = idx[0], idx[-1]

    def crossing(i, j):
        # linear interpolation of the level crossing between nodes i, j
        if prod[i] == prod[j]:
            return x[i]
        t = (level - prod[i]) / (prod[j] - prod[i])
        return x[i] + t * (x[j] - x[i])

    left = crossing(lo - 1, lo) if lo > 0 else x[0]
    right = crossing(hi + 1, hi) if hi < x.size - 1 else x[-1]
    return {
        "overlap": overlap,
        "width": float(right - left),
        "position": float(x[int(np.argmax(prod))]),
    }


def write_branch_csv(path, point):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "u1", "u2"])
        for rho, a, b in zip(point.grid.nodes, point.u1, point.u2):
            writer.writerow([repr(float(rho)), repr(float(a)),
                             repr(float(b))])


def write_branch_json(path, branch):
    payload = {
        "truncated": branch.truncated,
        "diagnostic": branch.diagnostic,
        "n": int(branch.grid.n),
        "dim": branch.grid.dim,
        "R": branch.grid.R,
        "points": [
            {
                "beta": pt.beta,
                "newton_iters": pt.newton_iters,
                "residual": pt.residual,
                "min_value": pt.min_value,
                "sup_u1": float(np.max(pt.u1)),
                "sup_u2": float(np.max(pt.u2)),
            }
            for pt in branch.points
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
