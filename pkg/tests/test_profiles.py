import json

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from seglab.eigen import smallest_eigenpairs
from seglab.errors import InsufficientDataError, ValidationError
from seglab.profiles import (
    apply_M,
    apply_M_perturbed,
    bounded_kernel_operator,
    build_refined_kernel,
    coupling_matrix,
    extract_asymptotics,
    kernel_directions,
    profile_metadata,
    solve_inner_profile,
    solve_kernel_corrections,
    solve_W,
    write_profile_csv,
    write_profile_json,
    _interp_weights,
)


@pytest.fixture(scope="module")
def prof():
    return solve_inner_profile(12.0, 2400, 1e-10)


@pytest.fixture(scope="module")
def wcorr(prof):
    return solve_W(prof)


@pytest.fixture(scope="module")
def hats(prof, wcorr):
    return solve_kernel_corrections(prof, wcorr)


@pytest.fixture(scope="module")
def prof_half():
    # same window, half the resolution; used for refinement comparisons
    return solve_inner_profile(12.0, 1200, 1e-10)


def interp_at(z, u, z0):
    idx, w = _interp_weights(z, z0)
    return float(np.dot(u[idx], w))


class TestInnerProfile:
    def test_normalization(self, prof):
        assert abs(interp_at(prof.z_nodes, prof.V1, 0.0) - 1.0) < 1e-9
        assert abs(interp_at(prof.z_nodes, prof.V2, 0.0) - 1.0) < 1e-9

    def test_symmetry(self, prof):
        assert np.max(np.abs(prof.V1 - prof.V2[::-1])) < 1e-9

    def test_positivity_and_monotonicity(self, prof):
        # positive up to rounding in the deep Gaussian tail
        assert np.all(prof.V1[1:-1] > -1e-12)
        assert np.all(prof.V1[np.abs(prof.z_nodes) < 5] > 0)
        dV1 = prof.dV()[0]
        inner = np.abs(prof.z_nodes) < prof.L - 1
        assert np.all(dV1[inner] > -1e-10)

    def test_constants(self, prof):
        assert prof.A > 0
        assert prof.B > 0
        # far field approaches Az + B
        z = prof.z_nodes
        sel = (z > 8) & (z < 11)
        assert np.max(np.abs(prof.V1[sel] - (prof.A * z[sel] + prof.B))) < 1e-6

    def test_residual_and_runtime_contract(self, prof):
        assert prof.residual <= 1e-10

    def test_constants_stable_under_refinement(self, prof, prof_half):
        assert abs(prof.A - prof_half.A) < 1e-6
        assert abs(prof.B - prof_half.B) < 1e-6

    def test_gaussian_decay_fit(self, prof):
        # the window stops at z = 5 because V1(-z) underflows the rounding
        # noise of the solve (~1e-17) beyond that
        z = prof.z_nodes
        sel = (z >= 2.0) & (z <= 5.0)
        y = np.log(np.abs(prof.V1[::-1][sel]))  # V1(-z) for z in [4, 8]
        x = z[sel] ** 2
        c, b = np.polyfit(x, y, 1)
        fit = c * x + b
        r2 = 1.0 - np.sum((y - fit) ** 2) / np.sum((y - np.mean(y)) ** 2)
        assert c < 0
        assert r2 >= 0.999

    def test_scaling_family_resolves(self, prof_half):
        p = prof_half
        z = p.z_nodes
        h = p.h
        s1 = CubicSpline(z, p.V1)
        s2 = CubicSpline(z, p.V2)
        for lam in (0.9, 1.1):
            zz = z[np.abs(lam * z) <= p.L]
            u1 = lam * s1(lam * zz)
            u2 = lam * s2(lam * zz)
            r1 = -(u1[2:] - 2 * u1[1:-1] + u1[:-2]) / h**2 + (
                u1 * u2**2
            )[1:-1]
            r2 = -(u2[2:] - 2 * u2[1:-1] + u2[:-2]) / h**2 + (
                u2 * u1**2
            )[1:-1]
            # keep away from the truncation skin where the spline tails are
            # extrapolating the affine branch
            core = np.abs(zz[1:-1]) < p.L / lam - 1.0
            sup = max(np.max(np.abs(r1[core])), np.max(np.abs(r2[core])))
            assert sup < 50.0 * h**2

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            solve_inner_profile(4.0, 2400)
        with pytest.raises(ValidationError):
            solve_inner_profile(12.0, 100)


class TestAsymptotics:
    def test_exact_affine_recovery(self, prof):
        p = prof
        z = p.z_nodes
        fake = type(p)(
            z_nodes=z,
            V1=2.5 * z + 0.75,
            V2=p.V2,
            A=p.A,
            B=p.B,
            L=p.L,
            residual=p.residual,
        )
        A, B = extract_asymptotics(fake, (7.0, 10.0))
        assert abs(A - 2.5) < 1e-12
        assert abs(B - 0.75) < 1e-11

    def test_window_validation(self, prof):
        with pytest.raises(ValidationError):
            extract_asymptotics(prof, (0.2, 0.8))
        with pytest.raises(ValidationError):
            extract_asymptotics(prof, (7.0, 11.9))

    def test_too_few_nodes(self):
        p = solve_inner_profile(12.0, 400, 1e-9)
        with pytest.raises(InsufficientDataError):
            extract_asymptotics(p, (7.0, 7.5))


class TestLinearizedOperator:
    def test_coupling_matrix_annihilates_dV(self, prof):
        P11, P12, P22 = coupling_matrix(prof)
        dV1, dV2 = prof.dV()
        d3V1 = np.gradient(
            np.gradient(dV1, prof.z_nodes), prof.z_nodes
        )
        inner = np.abs(prof.z_nodes) < 6.0
        err = np.abs((P11 * dV1 + P12 * dV2 - d3V1)[inner])
        assert np.max(err) < 100.0 * prof.h

    def test_translation_direction_near_kernel(self, prof_half):
        p = prof_half
        dV1, dV2 = p.dV()
        r1, r2 = apply_M(p, dV1, dV2)
        inner = np.abs(p.z_nodes) < p.L - 1.0
        sup = max(np.max(np.abs(r1[inner])), np.max(np.abs(r2[inner])))
        assert sup < 50.0 * p.h**2

    def test_scaling_direction_near_kernel(self, prof_half):
        p = prof_half
        s1, s2 = p.scaling_direction()
        r1, r2 = apply_M(p, s1, s2)
        inner = np.abs(p.z_nodes) < p.L - 1.0
        sup = max(np.max(np.abs(r1[inner])), np.max(np.abs(r2[inner])))
        assert sup < 50.0 * p.h**2

    def test_zero_field(self, prof_half):
        r1, r2 = apply_M(prof_half, np.zeros(prof_half.z_nodes.size),
                         np.zeros(prof_half.z_nodes.size))
        assert np.all(r1 == 0.0)
        assert np.all(r2 == 0.0)

    def test_bvp_kernel_directions_match_derivatives(self, prof):
        q1, q2, s1, s2 = kernel_directions(prof)
        dV1, dV2 = prof.dV()
        assert np.max(np.abs(q1 - dV1)) < 1e-6
        assert np.max(np.abs(q2 - dV2)) < 1e-6
        z = prof.z_nodes
        assert np.max(np.abs(s1 - (z * dV1 + prof.V1))) < 1e-5

    def test_kernel_is_one_dimensional_in_bounded_sector(self, prof):
        M = bounded_kernel_operator(prof)
        pairs = smallest_eigenpairs(M, k=3, shift=0.0, tol=1e-8, seed=0)
        mags = sorted(abs(lam) for lam, _ in pairs)
        assert mags[0] <= 1e-6
        assert mags[1] > 1e-3
        lam0, v0 = min(pairs, key=lambda pr: abs(pr[0]))
        dV1, dV2 = prof.dV()
        ref = np.empty(v0.size)
        ref[0::2] = dV1
        ref[1::2] = dV2
        corr = abs(np.dot(v0, ref)) / (
            np.linalg.norm(v0) * np.linalg.norm(ref)
        )
        assert corr >= 0.999


class TestCorrectionProfile:
    def test_residual(self, wcorr):
        assert wcorr.residual <= 1e-9

    def test_antisymmetry(self, wcorr):
        assert np.max(np.abs(wcorr.W1 + wcorr.W2[::-1])) <= 1e-8

    def test_farfield_gauge(self, prof):
        w = solve_W(prof, gauge="farfield")
        z = prof.z_nodes
        dV1 = prof.dV()[0]
        defect = np.abs(w.W1 + 0.5 * z**2 * dV1)[z >= 8.0]
        assert np.max(defect) <= 1e-6
        assert w.residual <= 1e-9

    def test_gauges_differ_by_kernel_element(self, prof, wcorr):
        wf = solve_W(prof, gauge="farfield")
        q1, q2, s1, s2 = kernel_directions(prof)
        t = wcorr.tilt
        shift1 = t * (s1 - (prof.B / prof.A) * q1)
        shift2 = t * (s2 - (prof.B / prof.A) * q2)
        assert np.max(np.abs(wf.W1 - wcorr.W1 - shift1)) < 1e-7
        assert np.max(np.abs(wf.W2 - wcorr.W2 - shift2)) < 1e-7

    def test_quadratic_far_field_magnitude(self, prof, wcorr):
        # W1 ~ -A z^2 / 2 on the right
        z = prof.z_nodes
        i = np.argmin(np.abs(z - 10.0))
        expected = -0.5 * z[i] ** 2 * prof.A
        assert abs(wcorr.W1[i] - expected) < 0.1 * abs(expected)

    def test_unknown_gauge(self, prof):
        with pytest.raises(ValidationError):
            solve_W(prof, gauge="best")


class TestHatProfiles:
    def test_symmetries(self, hats):
        assert hats.phi_symmetry_residual <= 1e-7
        assert hats.psi_symmetry_residual <= 1e-7
        assert np.max(np.abs(hats.PhiHat1[::-1] - hats.PhiHat2)) <= 1e-7
        assert np.max(np.abs(hats.PsiHat1[::-1] + hats.PsiHat2)) <= 1e-7

    def test_phi_far_field_constant(self, prof, hats):
        z = prof.z_nodes
        sel = (z > 8.5) & (z < 10.5)
        assert np.max(np.abs(hats.PhiHat1[sel] - hats.a)) < 1e-5
        # the other component dies off on that side
        assert np.max(np.abs(hats.PhiHat2[sel])) < 1e-5

    def test_psi_far_field_slope(self, prof, hats):
        z = prof.z_nodes
        sel = (z > 8.5) & (z < 10.5)
        assert np.max(
            np.abs(hats.PsiHat1[sel] - hats.b_const * z[sel])
        ) < 1e-4

    def test_constants_stable_under_mesh_halving(self, prof_half, hats):
        w = solve_W(prof_half, tol=1e-9)
        h2 = solve_kernel_corrections(prof_half, w)
        assert abs(h2.a - hats.a) < 1e-5
        assert abs(h2.b_const - hats.b_const) < 1e-5


class TestRefinedKernel:
    def test_eps_zero_identity(self, prof, wcorr, hats):
        (Phi1, Phi2), (Psi1, Psi2) = build_refined_kernel(
            prof, wcorr, hats, 0.0, 1.0, 1.0
        )
        dV1, dV2 = prof.dV()
        assert np.array_equal(Phi1, dV1)
        assert np.array_equal(Phi2, dV2)

    def test_input_validation(self, prof, wcorr, hats):
        with pytest.raises(ValidationError):
            build_refined_kernel(prof, wcorr, hats, 0.5, 1.0, 1.0)
        with pytest.raises(ValidationError):
            build_refined_kernel(prof, wcorr, hats, 0.1, -1.0, 1.0)

    def test_residual_scales_quadratically(self, prof, wcorr, hats):
        z = prof.z_nodes
        win = np.abs(z) <= 6.0
        sups = {"phi": [], "psi": []}
        for eps in (0.1, 0.05, 0.025):
            Phi, Psi = build_refined_kernel(
                prof, wcorr, hats, eps, 1.0, 1.0
            )
            for name, (u1, u2) in (("phi", Phi), ("psi", Psi)):
                r1, r2 = apply_M_perturbed(
                    prof, wcorr, eps, 1.0, 1.0, u1, u2
                )
                sups[name].append(
                    max(np.max(np.abs(r1[win])), np.max(np.abs(r2[win])))
                )
        for name in ("phi", "psi"):
            s = sups[name]
            for ratio in (s[0] / s[1], s[1] / s[2]):
                assert abs(ratio - 4.0) <= 1.0


class TestExport:
    def test_csv_round_trip(self, tmp_path, prof, wcorr, hats):
        path = tmp_path / "profiles.csv"
        write_profile_csv(path, prof, wcorr, hats)
        data = np.genfromtxt(path, delimiter=",", names=True)
        assert data.shape[0] == prof.z_nodes.size
        assert np.array_equal(data["V1"], prof.V1)
        assert np.array_equal(data["W2"], wcorr.W2)
        assert np.array_equal(data["PsiHat1"], hats.PsiHat1)

    def test_json_metadata_deterministic(self, tmp_path, prof, wcorr, hats):
        p1 = tmp_path / "meta1.json"
        p2 = tmp_path / "meta2.json"
        write_profile_json(p1, prof, wcorr, hats)
        write_profile_json(p2, prof, wcorr, hats)
        assert p1.read_bytes() == p2.read_bytes()
        meta = json.loads(p1.read_text())
        assert meta["A"] == prof.A
        assert meta["a"] == hats.a

    def test_metadata_fields(self, prof):
        meta = profile_metadata(prof)
        assert set(meta) == {"L", "n", "A", "B", "residual"}
