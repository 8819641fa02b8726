import numpy as np
import pytest

from conftest import bimodal_state, make_params, rotation_matrix, smooth_state
from nearmaxwell.bounds import mu_of_M, r_of_eps, tail_bound
from nearmaxwell.grids import (
    DistributionField,
    h_functional,
    moments,
    reference_field,
    weighted_sup_norm,
)
from nearmaxwell.kernels import KernelSpec
from nearmaxwell.maxwellian import (
    h_of_maxwellian,
    invariant_moments,
    validate_params,
)
from nearmaxwell.scattering import (
    check_H_decrease,
    check_scatter_conservation,
    extract_asymptote,
    fit_from_field,
    fit_global_maxwellian,
    injectivity_bound,
    lipschitz_report,
    scatter,
    scatter_inverse,
    wave_forward,
    wave_inverse,
)
from nearmaxwell.solver import SolverConfig, solve_cauchy


def small_cfg(**kw):
    base = dict(picard_tol=1e-8, Nt=9, n_omega=8, T=30.0)
    base.update(kw)
    return SolverConfig(**base)


@pytest.fixture(scope="module")
def k2():
    return KernelSpec(beta=0.0, D=2)


@pytest.fixture(scope="module")
def target(p_small, grid_small):
    return smooth_state(grid_small, 0.12, ref=p_small)


class TestExtract:
    def test_reference_asymptote(self, p_small, grid_small, k2):
        traj = solve_cauchy(reference_field(grid_small, p_small), k2,
                            small_cfg())
        for direction in (+1, -1):
            f_inf, bar = extract_asymptote(traj, direction, k2)
            assert float(np.max(np.abs(f_inf.h - 1.0))) == 0.0
            assert bar > 0

    def test_tail_bar_halves_with_T(self, p_small, k2):
        b1 = tail_bound(p_small, k2, 25.0)
        b2 = tail_bound(p_small, k2, 50.0)
        assert b2 == pytest.approx(0.5 * b1, rel=0.02)

    def test_in_ball_asymptote_radius(self, p_small, grid_small, k2,
                                      target):
        cfg = small_cfg()
        traj = solve_cauchy(target, k2, cfg)
        f_inf, _ = extract_asymptote(traj, +1, k2)
        r = r_of_eps(cfg.record["nu_bar"], cfg.record["eps"])
        assert float(np.max(np.abs(f_inf.h - 1.0))) <= r + 1e-6


class TestWaveInverse:
    def test_reference_inverse(self, p_small, grid_small, k2):
        f_in, traj, info = wave_inverse(
            reference_field(grid_small, p_small), +1, k2, small_cfg())
        assert float(np.max(np.abs(f_in.h - 1.0))) == 0.0
        assert info["iterations"] == 1

    @pytest.mark.parametrize("direction", [+1, -1])
    def test_round_trip_through_cauchy(self, p_small, grid_small, k2,
                                       target, direction):
        f_in, _, info = wave_inverse(target, direction, k2, small_cfg())
        traj = solve_cauchy(f_in, k2, small_cfg())
        rt, _ = extract_asymptote(traj, direction, k2)
        assert weighted_sup_norm(rt, target) <= 1e-4
        nb = 0.125
        r = r_of_eps(nb, float(np.max(np.abs(target.h - 1.0))))
        assert float(np.max(np.abs(f_in.h - 1.0))) <= r + 1e-6
        bound = 4 * nb * (1 + r) + 0.05
        assert all(rr <= bound for rr in info["ratios"])

    def test_out_of_ball_target_rejected(self, p_small, grid_small, k2):
        bad = reference_field(grid_small, p_small, scale=3.0)
        with pytest.raises(ValueError, match="admissible ball"):
            wave_inverse(bad, +1, k2, small_cfg())


class TestScatter:
    def test_fixes_reference(self, p_small, grid_small, k2):
        fM = reference_field(grid_small, p_small)
        sM, traj, bar = scatter(fM, k2, small_cfg())
        assert weighted_sup_norm(sM, fM) <= 1e-4

    def test_round_trip_identity(self, p_small, grid_small, k2, target):
        f_minus, _, _ = scatter_inverse(target, k2, small_cfg())
        f_plus, _, _ = scatter(f_minus, k2, small_cfg())
        assert weighted_sup_norm(f_plus, target) <= 1e-4

    def test_image_radius(self, p_small, grid_small, k2, target):
        cfg = small_cfg()
        f_plus, _, _ = scatter(target, k2, cfg)
        r = r_of_eps(cfg.record["nu_bar"],
                     float(np.max(np.abs(target.h - 1.0))))
        assert float(np.max(np.abs(f_plus.h - 1.0))) <= r + 1e-6

    def test_conservation(self, p_small, grid_small, k2, target):
        f_plus, _, _ = scatter(target, k2, small_cfg())
        rep = check_scatter_conservation(target, f_plus)
        assert rep["max_rel"] <= 1e-3

    def test_H_chain(self, p_small, grid_desk, k2):
        f_minus = bimodal_state(grid_desk, 0.24, ref=p_small)
        cfg = SolverConfig(picard_tol=1e-7, Nt=17, n_omega=16, T=40.0)
        f_plus, _, _ = scatter(f_minus, k2, cfg)
        hrep = check_H_decrease(f_minus, f_plus, slack=1e-6)
        assert hrep["ok"]
        assert hrep["decrease"] > 1e-6  # genuinely non-Maxwellian data
        fit = fit_from_field(f_minus)
        assert hrep["H_plus"] >= h_of_maxwellian(fit["params"]) - 1e-6

    def test_H_equality_for_maxwellian_like(self, p_small, grid_small, k2):
        fM = reference_field(grid_small, p_small)
        sM, _, _ = scatter(fM, k2, small_cfg())
        hrep = check_H_decrease(fM, sM, slack=1e-6)
        assert hrep["ok"] and hrep["maxwellian_like"]


class TestFit:
    def test_round_trip_known_params(self):
        p = make_params(m=1.7, a=1.4, b=0.3, c=1.1, B=rotation_matrix(0.5),
                        x0=[0.2, -0.4], v0=[0.1, 0.3])
        out = fit_global_maxwellian(invariant_moments(p), 2)
        q = out["params"]
        for got, want in ((q.m, p.m), (q.a, p.a), (q.b, p.b), (q.c, p.c)):
            assert got == pytest.approx(want, abs=1e-8)
        assert np.max(np.abs(q.B - p.B)) < 1e-8
        assert np.max(np.abs(q.x0 - p.x0)) < 1e-8
        assert np.max(np.abs(q.v0 - p.v0)) < 1e-8
        assert validate_params(q).ok

    def test_round_trip_d3(self):
        B = np.array([[0.0, 0.3, -0.1], [-0.3, 0.0, 0.2], [0.1, -0.2, 0.0]])
        p = make_params(m=0.9, a=1.2, b=-0.2, c=1.4, B=B, D=3,
                        x0=[0.1, 0.0, -0.2], v0=[0.0, 0.15, 0.05])
        out = fit_global_maxwellian(invariant_moments(p), 3)
        q = out["params"]
        assert np.max(np.abs(q.B - p.B)) < 1e-8
        assert q.b == pytest.approx(p.b, abs=1e-8)

    def test_isotropic_even_input(self):
        p = make_params(m=1.1, a=1.3, b=0.2, c=0.9)
        out = fit_global_maxwellian(invariant_moments(p), 2)
        q = out["params"]
        assert np.max(np.abs(q.B)) < 1e-10
        assert np.max(np.abs(q.x0)) < 1e-10
        assert np.max(np.abs(q.v0)) < 1e-10

    def test_unrealizable_rejected(self):
        bad = np.zeros(9)
        bad[0] = -1.0
        with pytest.raises(ValueError, match="mass"):
            fit_global_maxwellian(bad, 2)
        bad2 = invariant_moments(make_params(m=1.0)).copy()
        bad2[3] = 0.0  # energy below the |v0|^2/2 floor
        with pytest.raises(ValueError, match="spread"):
            fit_global_maxwellian(bad2, 2)

    def test_field_moment_fit(self, p_small, grid_desk):
        f = reference_field(grid_desk, p_small)
        out = fit_from_field(f)
        q = out["params"]
        assert q.m == pytest.approx(p_small.m, rel=1e-6)
        assert q.a == pytest.approx(p_small.a, rel=1e-5)


class TestInjectivity:
    def test_identical_asymptotes(self, p_small, grid_small, k2, target):
        cfg = small_cfg()
        traj = solve_cauchy(target, k2, cfg)
        f_inf, _ = extract_asymptote(traj, +1, k2)
        mu_bar, _, _ = mu_of_M(p_small, k2, n_sample=64)
        rep = injectivity_bound(traj, traj, f_inf, f_inf, mu_bar,
                                beta=k2.beta)
        assert rep["ok"] and rep["worst"] == 0.0

    def test_perturbed_pair(self, p_small, grid_small, k2, target):
        t1 = solve_cauchy(target, k2, small_cfg())
        other = DistributionField(grid=grid_small, t=0.0, frame="comoving",
                                  h=target.h * 1.03, ref=p_small)
        t2 = solve_cauchy(other, k2, small_cfg())
        f1, _ = extract_asymptote(t1, +1, k2)
        f2, _ = extract_asymptote(t2, +1, k2)
        mu_bar, _, _ = mu_of_M(p_small, k2, n_sample=64)
        rep = injectivity_bound(t1, t2, f1, f2, mu_bar, beta=k2.beta)
        assert rep["ok"]
        rep_inflated = injectivity_bound(t1, t2, f1, f2, 2 * mu_bar,
                                         beta=k2.beta)
        assert rep_inflated["bound"] > rep["bound"]

    def test_hard_potential_refused(self, p_small, grid_small, k2, target):
        traj = solve_cauchy(target, k2, small_cfg())
        f_inf, _ = extract_asymptote(traj, +1, k2)
        with pytest.raises(ValueError, match="hard"):
            injectivity_bound(traj, traj, f_inf, f_inf, 1.0, beta=0.5)


class TestLipschitz:
    def test_report_formula(self):
        rep = lipschitz_report(0.1, 0.05, nu_bar=0.1, eps=0.0)
        assert rep["bound"] == pytest.approx(0.1 / (1 - 0.4))
        assert rep["ok"]

    def test_forward_map_pair(self, p_small, grid_small, k2, target):
        other = DistributionField(grid=grid_small, t=0.0, frame="comoving",
                                  h=target.h * 1.02, ref=p_small)
        out1, _, _ = wave_forward(target, +1, k2, small_cfg())
        out2, _, _ = wave_forward(other, +1, k2, small_cfg())
        d_in = weighted_sup_norm(target, other)
        d_out = weighted_sup_norm(out1, out2)
        eps = max(float(np.max(np.abs(target.h - 1))),
                  float(np.max(np.abs(other.h - 1))))
        rep = lipschitz_report(d_in, d_out, nu_bar=0.125, eps=eps,
                               tol=1e-6)
        assert rep["ok"]

    def test_eps_too_large(self):
        with pytest.raises(ValueError):
            lipschitz_report(0.1, 0.1, nu_bar=0.2, eps=1.0)
