import numpy as np
import pytest

from csspeaks.grid import Grid2D
from csspeaks.ground_state import (
    RadialProfile,
    check_decay_asymptotics,
    load_profile,
    nondegeneracy_spectrum,
    ode_residual,
    save_profile,
    solve_ground_state,
)

# U(0) for p=4, v0=1 from the independent fixed-step RK4 shooting oracle
# below, run at steps 1e-3 and 5e-4 with Richardson extrapolation.
ORACLE_U0_P4 = 2.206200864650804


def rk4_shoot_classify(a, p, v0, h, r_end):
    """Fixed-step RK4 shooting, classifying overshoot vs undershoot."""
    r = 1e-6
    c = v0 * a - a ** (p - 1)
    u, v = a + 0.25 * c * r * r, 0.5 * c * r

    def f(r, u, v):
        return v, -v / r + v0 * u - abs(u) ** (p - 2) * u

    while r < r_end:
        k1u, k1v = f(r, u, v)
        k2u, k2v = f(r + h / 2, u + h / 2 * k1u, v + h / 2 * k1v)
        k3u, k3v = f(r + h / 2, u + h / 2 * k2u, v + h / 2 * k2v)
        k4u, k4v = f(r + h, u + h * k3u, v + h * k3v)
        u2 = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v2 = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        r += h
        if u2 <= 0.0:
            return "over"
        if v2 >= 0.0 and r > 5 * h:
            return "under"
        u, v = u2, v2
    return "under"


def rk4_shoot_u0(p, v0, h, r_end=15.0, iters=48):
    lo = v0 ** (1 / (p - 2)) * 1.000001
    hi = 2.0 * v0 ** (1 / (p - 2))
    while rk4_shoot_classify(hi, p, v0, h, r_end) != "over":
        lo, hi = hi, 2 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if rk4_shoot_classify(mid, p, v0, h, r_end) == "over":
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestSolve:
    def test_height_matches_frozen_oracle(self, townes):
        assert abs(townes.u0 - ORACLE_U0_P4) <= 1e-6 * ORACLE_U0_P4

    def test_oracle_self_consistent(self):
        # coarse re-run of the oracle agrees with its frozen value
        a = rk4_shoot_u0(4.0, 1.0, 5e-3)
        assert abs(a - ORACLE_U0_P4) <= 1e-6 * ORACLE_U0_P4

    def test_scaling_law(self, townes):
        scaled = solve_ground_state(4.0, 2.0)
        rr = np.linspace(0.0, 10.0, 500)
        lhs = scaled.evaluate(rr)
        rhs = np.sqrt(2.0) * townes.evaluate(np.sqrt(2.0) * rr)
        assert np.max(np.abs(lhs - rhs)) <= 1e-5 * scaled.u0

    def test_weak_form_identity_p3(self):
        # multiply the equation by U and integrate: grad + mass = p-power
        prof = solve_ground_state(3.0, 1.0)
        grad2 = 2 * np.pi * np.trapezoid(
            prof.r_nodes * prof.du_values ** 2, prof.r_nodes
        )
        lhs = grad2 + prof.radial_moment(2)
        rhs = prof.radial_moment(3)
        assert abs(lhs - rhs) <= 1e-4 * rhs

    def test_residual_and_monotonicity(self, townes):
        assert ode_residual(townes) <= 1e-6
        assert np.all(townes.du_values <= 0.0)
        assert townes.u_values[-1] < 1e-6 * townes.u0
        assert townes.u_values[0] == townes.u0

    def test_truncation_insensitivity(self, townes, townes_far):
        assert abs(townes_far.u0 - townes.u0) <= 1e-8 * townes.u0

    @pytest.mark.parametrize("p,v0,tol", [(1.5, 1.0, 1e-8), (4.0, -1.0, 1e-8),
                                          (4.0, 1.0, 1e-3)])
    def test_parameter_guards(self, p, v0, tol):
        with pytest.raises(ValueError):
            solve_ground_state(p, v0, tol=tol)

    def test_evaluate_beyond_range_is_zero(self, townes):
        vals = townes.evaluate(np.array([townes.r_max + 1.0, 50.0]))
        assert np.all(vals == 0.0)


class TestDecayAsymptotics:
    def test_townes_tail(self, townes_far):
        rep = check_decay_asymptotics(townes_far)
        assert -1.02 <= rep.slope <= -0.98
        assert rep.c_spread <= 0.05
        assert rep.passed

    def test_synthetic_exponential(self):
        r = np.linspace(0.0, 16.0, 4097)
        u = np.exp(-r)
        prof = RadialProfile(r_max=16.0, r_nodes=r, u_values=u,
                             du_values=-u, p=4.0, v0=1.0, u0=1.0)
        rep = check_decay_asymptotics(prof)
        assert rep.slope == pytest.approx(-1.0, abs=1e-12)
        # the sqrt(r) weight alone drives the amplitude drift
        expected = (np.sqrt(15.0) - np.sqrt(12.0)) / np.sqrt(13.5)
        assert rep.c_spread == pytest.approx(expected, rel=0.01)

    def test_window_requires_range(self):
        r = np.linspace(0.0, 8.0, 1025)
        u = np.exp(-r)
        prof = RadialProfile(r_max=8.0, r_nodes=r, u_values=u,
                             du_values=-u, p=4.0, v0=1.0, u0=1.0)
        with pytest.raises(ValueError, match="tail window"):
            check_decay_asymptotics(prof)

    def test_scaled_decay_rate(self):
        # v0 = 2: U'/U -> -sqrt(2); the normalized slope stays near -1
        prof = solve_ground_state(4.0, 2.0, r_max=24.0)
        rep = check_decay_asymptotics(prof)
        assert abs(rep.slope_normalized + 1.0) <= 2e-2
        assert abs(rep.slope + np.sqrt(2.0)) <= 0.05


class TestSpectrum:
    def test_near_kernel_is_translations(self, townes, grid256):
        rep = nondegeneracy_spectrum(townes, grid256)
        assert rep.near_kernel_dim == 2
        assert rep.alignment >= 0.99
        assert rep.min_eigenvalue < 0.0

    def test_alignment_against_shifted_profiles(self, townes, grid256):
        # independent tangent oracle: difference of shifted embeddings
        rep = nondegeneracy_spectrum(townes, grid256)
        X1, X2 = grid256.meshes()
        h = 1e-4
        t1 = (townes.evaluate(np.hypot(X1 - h, X2))
              - townes.evaluate(np.hypot(X1 + h, X2))) / (2 * h)
        t2 = (townes.evaluate(np.hypot(X1, X2 - h))
              - townes.evaluate(np.hypot(X1, X2 + h))) / (2 * h)
        T = np.column_stack([t1.ravel(), t2.ravel()])
        QT, _ = np.linalg.qr(T)
        near = np.abs(rep.eigenvalues) <= rep.near_kernel_threshold
        QK, _ = np.linalg.qr(rep.eigenvectors[:, near])
        cosines = np.linalg.svd(QT.T @ QK, compute_uv=False)
        assert cosines.min() >= 0.99

    def test_coarse_grid_rejected(self, townes):
        with pytest.raises(ValueError, match="coarse"):
            nondegeneracy_spectrum(townes, Grid2D(16.0, 16))


class TestCache:
    def test_roundtrip(self, townes, tmp_path):
        path = tmp_path / "prof.csv"
        save_profile(path, townes, {"tol": 1e-8})
        back, meta = load_profile(path)
        assert back.p == townes.p and back.v0 == townes.v0
        assert meta["tol"] == 1e-8
        assert np.allclose(back.u_values, townes.u_values, rtol=0, atol=0)
        assert np.allclose(back.du_values, townes.du_values, rtol=0, atol=0)
        assert back.u0 == townes.u0
