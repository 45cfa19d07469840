"""Linearization of the coupled system about the assembled ansatz, per
angular Fourier mode, together with the weighted norms and the diagnostic
suite built on top of the solves.

The operator acting on a perturbation (phi1, phi2) is

    -Lap phi1 + eps^-4 U2^2 phi1 + 2 eps^-4 U1 U2 phi2 - f_u(U1) phi1,
    -Lap phi2 + eps^-4 U1^2 phi2 + 2 eps^-4 U1 U2 phi1 - f_u(U2) phi2,

with Dirichlet conditions on the outer boundary.  For radial base states
it block-diagonalizes over angular modes: the mode index m contributes
m^2 / rho^2 (dim 2) or m(m+1) / rho^2 (dim 3) to both diagonal blocks,
and tangential derivatives in the norms become m / rho factors.

Conventions.  The exterior subdomain {rho > r0} is Omega_1 (the outer
scalar field construction places w_1 there), so signed distance r > 0 is
the own domain of the first component.  The solution-side norm weights
collar derivatives with powers of eps; the data-side norm uses the
piecewise weight w(r) = 1 + (r/eps)^(1+alpha) for r >= 0 and e^(2|r|/eps)
for r < 0, applied with argument r for g1 and -r for g2, plus the
eps^-(1+alpha) own-domain and e^(1/eps) cross-domain far-field penalties.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .ansatz import ProfileInterpolant, _blend_profile, unstretched_coordinate
from .banded import BandedMatrix, banded_solve
from .errors import (
    InsufficientDataError,
    NearKernelError,
    SingularMatrixError,
    ValidationError,
)
from .grid import d1_apply, d1_weights, d2_apply, d2_weights

# Required number of nodes inside one layer width |rho - r0| <= eps.
_NODES_PER_EPS = 10

# Relative residual contract for linear solves.
_SOLVE_RTOL = 1e-9

# Smallest-singular-value threshold, relative to the matrix norm, below
# which a solve is declared near-kernel.
_SIGMA_REL_TOL = 1e-13

# Magnitudes below this are treated as identically zero in decay fits.
_DECAY_FLOOR = 1e-13

# Norm blocks larger than this are reported in log space.
_OVERFLOW = 1e300


# ----------------------------------------------------------------------
# Operator assembly and solves
# ----------------------------------------------------------------------

@dataclass
class ModeOperator:
    """Banded two-component operator at a single angular mode.

    Unknowns are interleaved, (phi1_0, phi2_0, phi1_1, phi2_1, ...), so
    the radial stencil plus the local coupling fit in bandwidth 2.
    """

    m: int
    eps: float
    grid: "Grid"  # noqa: F821 - runtime duck type, avoids import cycle
    matrix: BandedMatrix
    dirichlet: tuple = ()

    @property
    def n_unknowns(self):
        return self.matrix.n


def _angular_eigenvalue(m, dim):
    if m == 0:
        return 0.0
    if dim == 2:
        return float(m * m)
    if dim == 3:
        return float(m * (m + 1))
    raise ValidationError(
        f"angular mode m={m} requires dim 2 or 3 (got dim={dim})"
    )


def assemble_linearized(U, fcfg, m=0):
    """Banded operator of the linearization about the field U at mode m.

    The grid must resolve the layer: at least 10 nodes inside
    |rho - r0| <= eps.  Dirichlet rows close the outer boundary (and the
    origin for m >= 1, where regular mode functions vanish); the m = 0
    origin row in dim >= 2 uses the symmetric regularity closure.
    """
    grid = U.grid
    eps = U.params.eps
    x = grid.nodes
    n = x.size
    if m < 0 or int(m) != m:
        raise ValidationError("mode index must be a nonnegative integer")
    m = int(m)
    in_layer = int(np.count_nonzero(np.abs(x - grid.r0) <= eps))
    if in_layer < _NODES_PER_EPS:
        need = int(np.ceil(n * _NODES_PER_EPS / max(in_layer, 1)))
        raise ValidationError(
            f"grid has {in_layer} nodes inside the eps-layer; need at "
            f"least {_NODES_PER_EPS} (roughly n >= {need}, or cluster "
            f"with layer_eps={eps:g})"
        )
    lam = _angular_eigenvalue(m, grid.dim) if (m > 0 or grid.dim > 1) else 0.0

    fu1 = fcfg.fu(U.U1)
    fu2 = fcfg.fu(U.U2)
    cross = 2.0 * eps**-4 * U.U1 * U.U2
    diag1 = eps**-4 * U.U2**2 - fu1
    diag2 = eps**-4 * U.U1**2 - fu2

    A = BandedMatrix(2 * n, 2, 2)
    w1l, w1c, w1r = d1_weights(x)
    w2l, w2c, w2r = d2_weights(x)
    drift = (grid.dim - 1) / x[1:-1] if grid.dim > 1 else np.zeros(n - 2)
    ang = lam / x[1:-1] ** 2 if lam else np.zeros(n - 2)

    for k in range(1, n - 1):
        j = k - 1
        ll = -(w2l[j] + drift[j] * w1l[j])
        cc = -(w2c[j] + drift[j] * w1c[j]) + ang[j]
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

    dirichlet = [2 * (n - 1), 2 * (n - 1) + 1]
    A.set(2 * (n - 1), 2 * (n - 1), 1.0)
    A.set(2 * (n - 1) + 1, 2 * (n - 1) + 1, 1.0)
    if grid.dim >= 2 and x[0] == 0.0 and m == 0:
        h0 = x[1] - x[0]
        c0 = 2.0 * grid.dim / h0**2
        A.set(0, 0, c0 + diag1[0])
        A.set(0, 2, -c0)
        A.set(0, 1, cross[0])
        A.set(1, 1, c0 + diag2[0])
        A.set(1, 3, -c0)
        A.set(1, 0, cross[0])
    else:
        dirichlet = [0, 1] + dirichlet
        A.set(0, 0, 1.0)
        A.set(1, 1, 1.0)

    return ModeOperator(m=m, eps=eps, grid=grid, matrix=A,
                        dirichlet=tuple(dirichlet))


def sigma_min_estimate(op, iters=8, seed=11):
    """Smallest singular value of the mode operator, by inverse power
    iteration on A^T A through the cached banded LU."""
    A = op.matrix
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.n)
    v /= np.linalg.norm(v)
    sigma = np.inf
    for _ in range(iters):
        try:
            u = A.solve(v)
            y = A.solve(u, transpose=True)
        except SingularMatrixError:
            return 0.0
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        sigma = 1.0 / math.sqrt(norm)
        v = y / norm
    return float(sigma)


def _interleave(g1, g2):
    out = np.empty(2 * len(g1))
    out[0::2] = g1
    out[1::2] = g2
    return out


def solve_linearized(op, g):
    """Solve the mode problem L phi = g with Dirichlet data zeroed.

    g is a pair (g1, g2) on the operator's grid.  The discrete relative
    residual must meet 1e-9; otherwise (or on a singular factorization)
    a near-kernel error carrying the smallest-singular-value estimate is
    raised.
    """
    g1, g2 = (np.asarray(c, dtype=float) for c in g)
    n = op.grid.n
    if g1.shape != (n,) or g2.shape != (n,):
        raise ValidationError(
            f"right-hand side length must match grid size {n}"
        )
    rhs = _interleave(g1, g2)
    rhs[list(op.dirichlet)] = 0.0
    try:
        x = banded_solve(op.matrix, rhs)
    except SingularMatrixError as exc:
        raise NearKernelError(
            f"mode m={op.m} operator is singular: {exc}",
            sigma_min=0.0,
            eps=op.eps,
        ) from exc
    res = np.max(np.abs(op.matrix.matvec(x) - rhs))
    scale = op.matrix.norm_inf() * max(np.max(np.abs(x)), 1e-300)
    if res > _SOLVE_RTOL * max(scale, np.max(np.abs(rhs))):
        sigma = sigma_min_estimate(op)
        raise NearKernelError(
            f"mode m={op.m} solve residual {res:.3e} exceeds the relative "
            f"tolerance; smallest singular value estimate {sigma:.3e}",
            sigma_min=sigma,
            eps=op.eps,
        )
    return x[0::2], x[1::2]


# ----------------------------------------------------------------------
# Weighted norms
# ----------------------------------------------------------------------

@dataclass
class WeightedNormReport:
    components: dict
    total: float
    eps: float
    d: float
    alpha: float = None
    log_components: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, val in self.components.items():
            if not (val >= 0.0):
                raise ValidationError(f"norm component {key} is negative")


def _as_mode_dict(fields):
    if isinstance(fields, dict):
        return fields
    return {0: fields}


def _tangential_factor(m, dim, rho):
    """|grad_Gamma| multiplier of mode m at radius rho (0 for m=0)."""
    lam = _angular_eigenvalue(m, dim) if m > 0 else 0.0
    out = np.zeros_like(rho)
    mask = rho > 0.0
    out[mask] = math.sqrt(lam) / rho[mask]
    return out


def _angular_second_terms(phi, dp, rho, m, dim):
    """Regularized angular second-derivative bounds of mode m.

    The raw polar pieces m|phi'|/rho and m^2|phi|/rho^2 diverge at the
    origin even for smooth reconstructed fields (phi ~ rho^m there), so
    the Cartesian-regular combinations m*(phi/rho)' and
    phi'/rho - lam*phi/rho^2 are used instead; both stay bounded for
    regular fields and their discrete noise does not amplify as the
    first node approaches the origin.
    """
    if m == 0:
        z = np.zeros_like(phi)
        return z, z
    lam = _angular_eigenvalue(m, dim)
    mask = rho > 0.0
    ratio = np.empty_like(phi)
    ratio[mask] = phi[mask] / rho[mask]
    if not mask.all():
        ratio[~mask] = dp[~mask]
    mixed = math.sqrt(lam) * np.abs(d1_apply(ratio, rho))
    second = np.zeros_like(phi)
    second[mask] = np.abs(
        dp[mask] / rho[mask] - lam * phi[mask] / rho[mask] ** 2
    )
    return mixed, second


def weight_function(r, eps, alpha):
    """Piecewise data weight: polynomial on r >= 0, exponential on r < 0."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    pos = r >= 0.0
    out[pos] = 1.0 + (r[pos] / eps) ** (1.0 + alpha)
    out[~pos] = np.exp(np.minimum(2.0 * np.abs(r[~pos]) / eps, 700.0))
    return out


def norm0(phi_modes, grid, eps, d):
    """Solution-side norm: global sup, outer C^2 block, and the eps-scaled
    collar derivative blocks; tangential pieces enter through the m/rho
    factors and vanish identically for radial (m=0 only) input."""
    phi_modes = _as_mode_dict(phi_modes)
    x = grid.nodes
    r = grid.signed_distance
    collar = np.abs(r) < d
    outer = ~collar
    comps = {
        "sup": 0.0, "outer_C2": 0.0, "tangential": 0.0,
        "eps_normal": 0.0, "second_tangential": 0.0,
        "eps_mixed": 0.0, "eps2_normal2": 0.0,
    }
    for m, pair in sorted(phi_modes.items()):
        tf = _tangential_factor(m, grid.dim, x)
        for phi in pair:
            phi = np.asarray(phi, dtype=float)
            dp = d1_apply(phi, x)
            ddp = d2_apply(phi, x)
            comps["sup"] += float(np.max(np.abs(phi)))
            if np.any(outer):
                ang_mixed, ang_second = _angular_second_terms(
                    phi, dp, x, m, grid.dim
                )
                # derivative seminorm only: the zeroth-order sup is already
                # counted by the global sup block
                comps["outer_C2"] += float(np.max(
                    (np.abs(dp) + np.abs(ddp)
                     + tf * np.abs(phi) + ang_mixed + ang_second)[outer]
                ))
            comps["tangential"] += float(np.max(tf[collar] * np.abs(phi[collar])))
            comps["eps_normal"] += eps * float(np.max(np.abs(dp[collar])))
            comps["second_tangential"] += float(
                np.max(tf[collar] ** 2 * np.abs(phi[collar]))
            )
            comps["eps_mixed"] += eps * float(
                np.max(tf[collar] * np.abs(dp[collar]))
            )
            comps["eps2_normal2"] += eps**2 * float(np.max(np.abs(ddp[collar])))
    return WeightedNormReport(
        components=comps, total=float(sum(comps.values())), eps=eps, d=d
    )


def norm1(g_modes, grid, eps, d, alpha=0.5):
    """Data-side norm: outer C^1 block, the w(r)-weighted collar blocks
    (argument r for g1, -r for g2), the eps^-(1+alpha) own-domain penalty,
    and the e^(1/eps) cross-domain penalty (accumulated in log space)."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha={alpha} outside (0, 1)")
    g_modes = _as_mode_dict(g_modes)
    x = grid.nodes
    r = grid.signed_distance
    collar2 = np.abs(r) < 2.0 * d
    outer_half = np.abs(r) >= 0.5 * d
    far = ~collar2
    own = [far & (r > 0.0), far & (r < 0.0)]
    w_pos = weight_function(r, eps, alpha)
    w_neg = weight_function(-r, eps, alpha)

    comps = {"outer_C1": 0.0, "collar_g1": 0.0, "collar_g2": 0.0,
             "own_far": 0.0, "cross_far": 0.0}
    cross_sup = 0.0
    for m, pair in sorted(g_modes.items()):
        tf = _tangential_factor(m, grid.dim, x)
        for i, g in enumerate(pair):
            g = np.asarray(g, dtype=float)
            dg = d1_apply(g, x)
            ddg = d2_apply(g, x)
            comps["outer_C1"] += float(np.max(
                (np.abs(g) + np.abs(dg) + tf * np.abs(g))[outer_half]
            ))
            w = w_pos if i == 0 else w_neg
            bundle = (np.abs(g) + np.abs(dg) + np.abs(ddg)
                      + tf * np.abs(dg) + tf * np.abs(g) + tf**2 * np.abs(g))
            comps[f"collar_g{i + 1}"] += float(np.max((w * bundle)[collar2]))
            if np.any(own[i]):
                comps["own_far"] += eps ** (-(1.0 + alpha)) * float(
                    np.max(np.abs(g[own[i]]))
                )
            wrong = own[1 - i]
            if np.any(wrong):
                cross_sup += float(np.max(np.abs(g[wrong])))
    log_components = {}
    if cross_sup > 0.0:
        log_cross = 1.0 / eps + math.log(cross_sup)
        if log_cross < math.log(_OVERFLOW):
            comps["cross_far"] = math.exp(1.0 / eps) * cross_sup
        else:
            mant = math.exp(math.fmod(log_cross, math.log(10.0)))
            log_components["cross_far"] = (log_cross, mant)
            comps["cross_far"] = math.inf
    total = float(sum(comps.values()))
    return WeightedNormReport(
        components=comps, total=total, eps=eps, d=d, alpha=alpha,
        log_components=log_components,
    )


# ----------------------------------------------------------------------
# Theorem-scale estimate sweep
# ----------------------------------------------------------------------

@dataclass
class EstimateReport:
    entries: list
    slope: float
    slope_stderr: float
    constant: float
    seed: int
    m_max: int


def _gaussian_bump(r, center, width):
    return np.exp(-0.5 * ((r - center) / width) ** 2)


def _one_sided_mask(r, eps, side):
    """Septic cutoff confining data to its own side: 1 on side, 0 beyond
    2 eps into the other side."""
    t = -r / (2.0 * eps) if side > 0 else r / (2.0 * eps)
    return _blend_profile(t)


def _random_data(rng, grid, eps, d, kind):
    """One two-component right-hand side: a Gaussian bump per component on
    its own side, width drawn from {eps, d/4, d}, centered in the collar
    or in the outer region according to the stratum."""
    r = grid.signed_distance
    span = [float(grid.R - grid.r0), float(grid.r0)]
    out = []
    for i, side in enumerate((1.0, -1.0)):
        width = rng.choice([eps, d / 4.0, d])
        if kind == "collar":
            center = side * rng.uniform(eps, d)
        else:
            lo = 2.0 * d + width
            hi = max(span[i] - width, lo + 0.1 * width)
            center = side * rng.uniform(lo, hi)
        g = _gaussian_bump(r, center, width) * _one_sided_mask(r, eps, side)
        out.append(g)
    return tuple(out)


def measure_estimate(fields, fcfg, ensemble=32, seed=0, m_max=0, alpha=0.5):
    """Max ratio ||phi||_0 / ||g||_1 over a stratified random ensemble,
    per eps, with the log-log slope across the eps list.

    ``fields`` is a list of assembled ansatz fields (one per eps, at
    least 3 values spanning a factor >= 4).  A near-kernel failure at any
    eps aborts with that eps and the smallest-singular-value estimate.
    """
    if len(fields) < 3:
        raise ValidationError("need at least 3 eps values for a slope fit")
    eps_list = [f.params.eps for f in fields]
    if max(eps_list) < 4.0 * min(eps_list):
        raise ValidationError("eps list must span at least a factor of 4")
    entries = []
    for U in sorted(fields, key=lambda f: -f.params.eps):
        eps = U.params.eps
        d = U.params.d
        ops = [assemble_linearized(U, fcfg, m=m) for m in range(m_max + 1)]
        rng = np.random.default_rng(seed)
        ratios = []
        for k in range(ensemble):
            kind = "collar" if k % 2 == 0 else "outer"
            g_modes = {
                op.m: _random_data(rng, U.grid, eps, d, kind) for op in ops
            }
            phi_modes = {
                op.m: solve_linearized(op, g_modes[op.m]) for op in ops
            }
            n0 = norm0(phi_modes, U.grid, eps, d)
            n1 = norm1(g_modes, U.grid, eps, d, alpha=alpha)
            if not (n1.total > 0.0 and np.isfinite(n1.total)):
                raise ValidationError(
                    f"data norm not positive-finite at eps={eps}"
                )
            ratios.append(n0.total / n1.total)
        entries.append({
            "eps": eps,
            "max_ratio": float(np.max(ratios)),
            "mean_ratio": float(np.mean(ratios)),
            "ensemble": ensemble,
        })
    le = np.log([e["eps"] for e in entries])
    lr = np.log([e["max_ratio"] for e in entries])
    coef, cov = np.polyfit(le, lr, 1, cov=True)
    constant = max(e["max_ratio"] / e["eps"] for e in entries)
    return EstimateReport(
        entries=entries,
        slope=float(coef[0]),
        slope_stderr=float(np.sqrt(max(cov[0, 0], 0.0))),
        constant=float(constant),
        seed=seed,
        m_max=m_max,
    )


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------

def decay_diagnostic(phi, grid, eps, d, component=2, floor=_DECAY_FLOOR):
    """Exponential-decay fit of the cross component on the wrong side.

    Component 2 is fitted in the exterior subdomain (r > 0), component 1
    in the interior one, on the window dist(x, Gamma)/eps in [2, d/(2 eps)].
    Returns slope (= -c), intercept, r2, and the node count used.
    """
    if component not in (1, 2):
        raise ValidationError("component must be 1 or 2")
    vals = np.asarray(phi[component - 1], dtype=float)
    r = grid.signed_distance
    dist = r if component == 2 else -r
    mask = (dist >= 2.0 * eps) & (dist <= 0.5 * d) & (np.abs(vals) > floor)
    if np.count_nonzero(mask) < 10:
        raise InsufficientDataError(
            f"decay window holds {np.count_nonzero(mask)} usable nodes; "
            "need at least 10 above the floor"
        )
    t = dist[mask] / eps
    y = np.log(np.abs(vals[mask]))
    coef = np.polyfit(t, y, 1)
    fit = np.polyval(coef, t)
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    return {
        "slope": float(coef[0]),
        "c": float(-coef[0]),
        "intercept": float(coef[1]),
        "r2": r2,
        "n_points": int(np.count_nonzero(mask)),
        "decaying": bool(coef[0] < -0.05),
    }


def blowup_profile(phi, grid, p, params, window=4.0, n_samples=161):
    """Best scalar multiple of the translation profile V' matching phi on
    the stretched window z in [-window, window].

    phi is a two-component field on grid.nodes.  Returns the coefficient,
    the normalized L2 residual, and the C^1 version that includes first
    differences in the distance.
    """
    ev = ProfileInterpolant(p)
    z = np.linspace(-window, window, n_samples)
    dz = z[1] - z[0]
    rho = grid.r0 + unstretched_coordinate(z, params)
    x = grid.nodes
    f1 = CubicSpline(x, phi[0])(rho)
    f2 = CubicSpline(x, phi[1])(rho)
    h = 1e-6
    v1p = (ev.V1(z + h) - ev.V1(z - h)) / (2.0 * h)
    v2p = (ev.V2(z + h) - ev.V2(z - h)) / (2.0 * h)
    num = float(np.sum(f1 * v1p + f2 * v2p))
    den = float(np.sum(v1p**2 + v2p**2))
    c_p = num / den
    resid = np.sqrt(np.sum((f1 - c_p * v1p) ** 2 + (f2 - c_p * v2p) ** 2))
    scale = np.sqrt(np.sum(f1**2 + f2**2))
    res0 = float(resid / scale) if scale > 0.0 else 0.0
    d_res = np.sqrt(
        np.sum(np.diff(f1 - c_p * v1p) ** 2 + np.diff(f2 - c_p * v2p) ** 2)
    ) / dz
    d_scale = np.sqrt(np.sum(np.diff(f1) ** 2 + np.diff(f2) ** 2)) / dz
    res1 = float(d_res / d_scale) if d_scale > 0.0 else 0.0
    return {"c_p": float(c_p), "residual": res0, "residual_c1": max(res0, res1)}


def reflection_jacobian(r, r0, dim):
    """Radial area Jacobian J(r) = ((r0 + r)/r0)^(dim-1); J(0) = 1."""
    return ((r0 + np.asarray(r, dtype=float)) / r0) ** (dim - 1)


def reflection_check(phi, grid, delta1, delta2, d0):
    """Residuals of the two reflection laws at offsets (delta1, delta2).

    The limit deficiency is proxied by component 1 on the exterior side
    and component 2 on the interior side (the cross components decay
    exponentially there).  Returns both law residuals and their division
    by (delta1 + delta2).
    """
    for delta in (delta1, delta2):
        if not (0.0 < delta < 2.0 * d0):
            raise ValidationError(
                f"delta={delta} outside (0, {2.0 * d0:.4g})"
            )
    x = grid.nodes
    r0 = grid.r0
    p1 = np.asarray(phi[0], dtype=float)
    p2 = np.asarray(phi[1], dtype=float)
    s1 = CubicSpline(x, p1)
    s2 = CubicSpline(x, p2)
    J = lambda r: float(reflection_jacobian(r, r0, grid.dim))
    v_out = float(s1(r0 + delta1))
    v_in = float(s2(r0 - delta2))
    dv_out = float(s1(r0 + delta1, 1))
    dv_in = float(s2(r0 - delta2, 1))
    law1 = abs(J(-delta2) * dv_in + J(delta1) * dv_out)
    law2 = abs(
        J(-delta2) * (v_in - dv_in * delta2)
        + J(delta1) * (v_out - dv_out * delta1)
    )
    denom = delta1 + delta2
    return {
        "law1": law1,
        "law2": law2,
        "law1_scaled": law1 / denom,
        "law2_scaled": law2 / denom,
    }


def schrodinger_estimate_check(sol, eps_list, d1=None, n=2001):
    """Singularly perturbed Schrodinger solves on the boundary collar.

    On S = (R - d1, R), where the limit field w vanishes at R, solve
    -eps^4 Lap phi + w^2 phi = g (variant 1) and the same equation with
    right-hand side dist^2 g (variant 2), g = 1, zero boundary values.
    Reports ratio1 * eps^2 and ratio2 for each eps; PASS when both stay
    within a factor 2 across consecutive halvings.
    """
    grid = sol.grid
    R = grid.R
    if d1 is None:
        d1 = 0.25 * (R - sol.r0)
    if not (0.0 < d1 < R - sol.r0):
        raise ValidationError(f"collar width d1={d1} outside (0, R - r0)")
    x = np.linspace(R - d1, R, n)
    w2 = sol.interp(x) ** 2
    distb = R - x
    rows = {}
    for eps in eps_list:
        A = BandedMatrix(n, 1, 1)
        w2l, w2c, w2r = d2_weights(x)
        drift = (grid.dim - 1) / x[1:-1] if grid.dim > 1 else np.zeros(n - 2)
        w1l, w1c, w1r = d1_weights(x)
        for k in range(1, n - 1):
            j = k - 1
            A.set(k, k - 1, -(eps**4) * (w2l[j] + drift[j] * w1l[j]))
            A.set(k, k, -(eps**4) * (w2c[j] + drift[j] * w1c[j]) + w2[k])
            A.set(k, k + 1, -(eps**4) * (w2r[j] + drift[j] * w1r[j]))
        A.set(0, 0, 1.0)
        A.set(n - 1, n - 1, 1.0)
        g = np.ones(n)
        rhs1 = g.copy()
        rhs2 = distb**2 * g
        rhs1[0] = rhs1[-1] = 0.0
        rhs2[0] = rhs2[-1] = 0.0
        phi1 = banded_solve(A, rhs1)
        phi2 = banded_solve(A, rhs2)
        rows[eps] = {
            "ratio1_eps2": float(np.max(np.abs(phi1)) * eps**2),
            "ratio2": float(np.max(np.abs(phi2))),
        }
    eps_sorted = sorted(rows, reverse=True)
    ok = True
    for a, b in zip(eps_sorted[:-1], eps_sorted[1:]):
        for key in ("ratio1_eps2", "ratio2"):
            hi = max(rows[a][key], rows[b][key])
            lo = min(rows[a][key], rows[b][key])
            if lo <= 0.0 or hi / lo > 2.0:
                ok = False
    return {"rows": rows, "passes": ok, "d1": float(d1)}
