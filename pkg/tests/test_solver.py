import numpy as np
import pytest
from scipy.integrate import quad

from conftest import bimodal_state, make_params, smooth_state
from nearmaxwell.bounds import eps_max, mu_of_M, r_of_eps
from nearmaxwell.grids import (
    DistributionField,
    PhaseGrid,
    Trajectory,
    reference_field,
)
from nearmaxwell.kernels import KernelSpec
from nearmaxwell.solver import (
    SolverConfig,
    TimeMesh,
    build_time_mesh,
    check_positivity,
    collision_history,
    picard_solve,
    run_diagnostics,
    solve_cauchy,
    stability_pair,
)


def small_cfg(**kw):
    base = dict(picard_tol=1e-7, Nt=9, n_omega=8, T=30.0)
    base.update(kw)
    return SolverConfig(**base)


@pytest.fixture(scope="module")
def k2(k_maxwell):
    return k_maxwell


class TestTimeMesh:
    def test_node_structure(self, p_small):
        mesh = TimeMesh(p_small, 40.0, 17)
        assert mesh.times[0] == -40.0 and mesh.times[-1] == 40.0
        assert np.all(np.diff(mesh.times) > 0)
        assert 0.0 in mesh.times  # odd count, b = 0

    def test_quadrature_additivity(self, p_small):
        mesh = TimeMesh(p_small, 30.0, 9)
        total = mesh.W0 + mesh.Wplus
        # int_0^{t_j} + int_{t_j}^T = int_0^T for every j
        assert np.max(np.abs(total - total[0][None, :])) < 1e-12
        both = mesh.Wminus[-1]  # int over [-T, T]
        assert np.allclose(mesh.Wminus + mesh.Wplus, both[None, :],
                           atol=1e-12)

    def test_zero_row(self, p_small):
        mesh = TimeMesh(p_small, 30.0, 9)
        j0 = int(np.argmin(np.abs(mesh.times)))
        assert np.allclose(mesh.W0[j0], 0.0, atol=1e-15)

    def test_integrates_smooth_profiles(self, p_small):
        # quadrature of theta-shaped node data against adaptive reference
        mesh = TimeMesh(p_small, 30.0, 17)

        def f(t):
            return 1.0 / (1.0 + t * t)

        vals = f(mesh.times)
        for j in (2, 8, 12, 16):
            want, _ = quad(f, 0.0, mesh.times[j], limit=200)
            got = float(mesh.W0[j] @ vals)
            assert got == pytest.approx(want, abs=2e-6)

    def test_interp_weights_nodal(self, p_small):
        mesh = TimeMesh(p_small, 30.0, 9)
        w = mesh.interp_weights(mesh.times[3])
        assert np.allclose(w, np.eye(9)[3], atol=1e-12)


class TestSolveCauchy:
    def test_reference_is_exact_fixed_point(self, p_small, grid_small, k2):
        cfg = small_cfg()
        traj = solve_cauchy(reference_field(grid_small, p_small), k2, cfg)
        assert cfg.record["iterations"] == 1
        assert max(float(np.max(np.abs(f.h - 1.0))) for f in traj.fields) \
            == 0.0

    def test_perturbed_contraction(self, p_small, grid_small, k2):
        cfg = small_cfg()
        f = smooth_state(grid_small, 0.12, ref=p_small)
        traj = solve_cauchy(f, k2, cfg)
        nb = cfg.record["nu_bar"]
        r = r_of_eps(nb, cfg.record["eps"])
        bound = 4 * nb * (1 + r) + 0.05
        assert all(rr <= bound for rr in cfg.record["ratios"])
        assert max(float(np.max(np.abs(g.h - 1.0))) for g in traj.fields) \
            <= r + 10 * cfg.picard_tol

    def test_fixed_point_residual(self, p_small, grid_small, k2):
        from nearmaxwell.solver import _apply_weight, _collision_stack

        cfg = small_cfg()
        f = smooth_state(grid_small, 0.12, ref=p_small)
        traj = solve_cauchy(f, k2, cfg)
        mesh = build_time_mesh(p_small, k2, cfg)
        H = traj.h_stack()
        R = _collision_stack(H, mesh, grid_small, p_small, k2, cfg.n_omega)
        resid = f.h[None] + _apply_weight(mesh.W0, R) - H
        assert np.max(np.abs(resid)) <= 2 * cfg.picard_tol

    def test_uniqueness_wrt_initial_iterate(self, p_small, grid_small, k2):
        cfg = small_cfg()
        f = smooth_state(grid_small, 0.1, ref=p_small)
        mesh = build_time_mesh(p_small, k2, cfg)
        H1, _ = picard_solve(f.h, "cauchy", grid_small, p_small, k2, cfg,
                             mesh)
        H0 = np.broadcast_to(f.h, H1.shape) * 1.05
        H2, _ = picard_solve(f.h, "cauchy", grid_small, p_small, k2, cfg,
                             mesh, H0=H0)
        from nearmaxwell.solver import certified_nu
        nb = certified_nu(p_small, k2, cfg)
        r = r_of_eps(nb, float(np.max(np.abs(f.h - 1.0))))
        denom = 1.0 - 4 * nb * (1 + r)
        assert np.max(np.abs(H1 - H2)) <= 2 * cfg.picard_tol / denom

    def test_out_of_ball_rejected(self, p_small, grid_small, k2):
        cfg = small_cfg()
        bad = reference_field(grid_small, p_small, scale=1.0 + 2.0)
        with pytest.raises(ValueError, match="admissible ball"):
            solve_cauchy(bad, k2, cfg)

    def test_large_mass_rejected(self, grid_small, k2):
        p_big = make_params(m=1.0)
        cfg = small_cfg()
        with pytest.raises(ValueError, match="1/4"):
            solve_cauchy(reference_field(grid_small, p_big), k2, cfg)

    def test_iteration_cap(self, p_small, grid_small, k2):
        cfg = small_cfg(max_iters=1, picard_tol=1e-14)
        f = smooth_state(grid_small, 0.15, ref=p_small)
        with pytest.raises(RuntimeError, match="cap"):
            solve_cauchy(f, k2, cfg)

    def test_degenerate_window(self, p_small, grid_small, k2):
        cfg = small_cfg(T=0.0)
        f = smooth_state(grid_small, 0.1, ref=p_small)
        traj = solve_cauchy(f, k2, cfg)
        assert traj.n_nodes == 1
        assert np.array_equal(traj.fields[0].h, f.h)

    def test_negative_time_nodes_present(self, p_small, grid_small, k2):
        # eternal solutions: the solver runs on both sides of t = 0
        cfg = small_cfg()
        traj = solve_cauchy(smooth_state(grid_small, 0.1, ref=p_small),
                            k2, cfg)
        assert traj.times[0] == -30.0 and traj.times[-1] == 30.0


class TestCollisionHistory:
    def test_reference_history_vanishes(self, p_small, grid_small, k2):
        cfg = small_cfg()
        traj = solve_cauchy(reference_field(grid_small, p_small), k2, cfg)
        C = collision_history(traj, k2, cfg.n_omega)
        assert np.max(np.abs(C)) < 1e-14

    def test_zero_at_time_origin(self, p_small, grid_small, k2):
        cfg = small_cfg()
        traj = solve_cauchy(smooth_state(grid_small, 0.1, ref=p_small),
                            k2, cfg)
        C = collision_history(traj, k2, cfg.n_omega)
        j0 = traj.node_index(0.0)
        assert np.max(np.abs(C[j0])) == 0.0

    def test_lemma_contraction_bound(self, p_small, grid_small, k2):
        cfg = small_cfg()
        fF = smooth_state(grid_small, 0.1, ref=p_small)
        fG = smooth_state(grid_small, 0.08, kv=(0.3, 1.0), kx=(0.4, 0.6),
                          ref=p_small)
        tF = solve_cauchy(fF, k2, small_cfg())
        tG = solve_cauchy(fG, k2, small_cfg())
        CF = collision_history(tF, k2, cfg.n_omega)
        CG = collision_history(tG, k2, cfg.n_omega)
        HF, HG = tF.h_stack(), tG.h_stack()
        nb = cfg.nu_bar or 0.125
        lhs = np.max(np.abs(CF - CG))
        rhs = 2 * nb * np.max(np.abs(HF + HG)) * np.max(np.abs(HF - HG))
        assert lhs <= rhs + 1e-12


class TestPositivity:
    def test_reference_passes_trivially(self, p_small, grid_small, k2):
        traj = solve_cauchy(reference_field(grid_small, p_small), k2,
                            small_cfg())
        rep = check_positivity(traj, r=0.0, tol=1e-12)
        assert rep["ok"]

    def test_in_regime_sandwich(self, p_small, grid_small, k2):
        cfg = small_cfg()
        eps = 0.2  # below 1 - 6 nu = 0.25 at margin 0.5
        f = reference_field(grid_small, p_small, scale=1.0 + eps)
        traj = solve_cauchy(f, k2, cfg)
        r = r_of_eps(cfg.record["nu_bar"], eps)
        assert r <= 1.0
        rep = check_positivity(traj, r=r, tol=1e-5)
        assert rep["ok"]

    def test_corrupted_field_named(self, p_small, grid_small, k2):
        traj = solve_cauchy(reference_field(grid_small, p_small), k2,
                            small_cfg())
        h_bad = traj.fields[2].h.copy()
        h_bad[4, 7] = -0.1
        fields = list(traj.fields)
        fields[2] = DistributionField(grid=grid_small, t=traj.times[2],
                                      frame="comoving", h=h_bad,
                                      ref=p_small)
        bad = Trajectory(times=traj.times, fields=tuple(fields))
        rep = check_positivity(bad, r=0.1)
        assert not rep["ok"]
        assert rep["worst_node"][0] == 2
        assert rep["worst_node"][1] == (4, 7)
        assert "violated" in rep["message"]


class TestStability:
    def test_identical_data(self, p_small, grid_small, k2):
        f = smooth_state(grid_small, 0.1, ref=p_small)
        rep, _, _ = stability_pair(f, f, k2, small_cfg())
        assert rep["measured"] <= 2e-7

    def test_bounds_hold_perturbed_pair(self, p_small, grid_small, k2):
        k = k2
        f1 = smooth_state(grid_small, 0.1, ref=p_small)
        f2 = DistributionField(grid=grid_small, t=0.0, frame="comoving",
                               h=f1.h * (1.0 + 0.02), ref=p_small)
        mu_bar, _, _ = mu_of_M(p_small, k, n_sample=64)
        rep, _, _ = stability_pair(f1, f2, k, small_cfg(), mu_bar=mu_bar)
        assert rep["ok"]
        assert rep["measured"] <= rep["bounds"]["lipschitz"] + 1e-6
        assert rep["measured"] <= rep["bounds"]["gronwall"] + 1e-6


class TestDiagnostics:
    def test_reference_trajectory_flat(self, p_small, grid_small, k2):
        cfg = small_cfg()
        traj = solve_cauchy(reference_field(grid_small, p_small), k2, cfg)
        diag = run_diagnostics(traj, k2, cfg.n_omega)
        assert np.max(diag["moment_drift_rel"]) < 1e-12
        assert np.max(np.abs(np.diff(diag["H"]))) < 1e-12
        assert np.max(diag["entropy_production"]) < 1e-8

    def test_perturbed_trajectory(self, p_small, grid_desk, k2):
        cfg = SolverConfig(picard_tol=1e-6, Nt=17, n_omega=16, T=40.0)
        f = bimodal_state(grid_desk, 0.2, ref=p_small)
        traj = solve_cauchy(f, k2, cfg)
        diag = run_diagnostics(traj, k2, cfg.n_omega)
        assert np.max(diag["moment_drift_rel"]) <= 1e-3
        assert diag["H_monotone_defect"] <= 1e-6
        assert np.max(diag["entropy_production"]) <= 1e-8
        assert np.all(diag["sup_dev"] <= 0.3)


class TestD3Smoke:
    def test_tiny_solve(self):
        p = make_params(m=0.004, D=3)
        grid = PhaseGrid(D=3, Nv=6, Vmax=4.0, Nx=4, Xmax=4.0)
        k = KernelSpec(beta=0.0, D=3)
        cfg = SolverConfig(picard_tol=1e-5, Nt=5, n_omega=8, T=10.0,
                           max_iters=8)
        f = reference_field(grid, p, scale=1.05)
        traj = solve_cauchy(f, k, cfg)
        assert cfg.record["iterations"] <= 8
        assert max(float(np.max(np.abs(g.h - 1.0))) for g in traj.fields) \
            < 0.2
