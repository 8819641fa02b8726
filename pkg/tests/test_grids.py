import numpy as np
import pytest

from conftest import make_params, smooth_state
from nearmaxwell.grids import (
    DistributionField,
    PhaseGrid,
    Trajectory,
    free_stream,
    h_functional,
    load_field,
    moments,
    reference_field,
    save_field,
    suggest_grid,
    to_comoving,
    to_lab,
    weighted_sup_norm,
)
from nearmaxwell.maxwellian import h_of_maxwellian, invariant_moments


class TestPhaseGrid:
    def test_spacings_and_weights(self):
        g = PhaseGrid(D=2, Nv=11, Vmax=5.0, Nx=6, Xmax=3.0)
        assert g.dv == pytest.approx(1.0)
        assert g.dx == pytest.approx(1.2)
        # trapezoid weights integrate 1 to the box measure per axis
        assert np.sum(g.v_weights()) == pytest.approx((2 * g.Vmax) ** 2)
        assert np.sum(g.x_weights()) == pytest.approx((2 * g.Xmax) ** 2)

    def test_minimum_sizes(self):
        with pytest.raises(ValueError):
            PhaseGrid(D=2, Nv=3, Vmax=5.0, Nx=8, Xmax=5.0)

    def test_suggest_grid_tail(self):
        p = make_params(m=1.0)
        g = suggest_grid(p, Nv=20, Nx=20)
        assert g.check_tail(p) < 1e-6

    def test_too_small_grid_rejected(self):
        p = make_params(m=1.0)
        g = PhaseGrid(D=2, Nv=8, Vmax=2.0, Nx=8, Xmax=2.0)
        with pytest.raises(ValueError, match="tail"):
            g.check_tail(p)


class TestField:
    def test_shape_validation(self, grid_small, p_small):
        with pytest.raises(ValueError):
            DistributionField(grid=grid_small, t=0.0, frame="lab",
                              h=np.ones(3), ref=p_small)
        with pytest.raises(ValueError):
            DistributionField(grid=grid_small, t=0.0, frame="weird",
                              h=np.ones((grid_small.n_vnodes,
                                         grid_small.n_xnodes)), ref=p_small)

    def test_F_recovery(self, grid_small, p_small):
        f = reference_field(grid_small, p_small, frame="lab", scale=2.0)
        F = f.F_values()
        from nearmaxwell.maxwellian import eval_maxwellian
        v = grid_small.v_nodes()[:, None, :]
        x = grid_small.x_nodes()[None, :, :]
        M = eval_maxwellian(p_small, v, x, np.zeros((1, 1)))
        assert np.allclose(F, 2.0 * M, rtol=1e-14)


class TestFreeStream:
    def test_zero_shift_identity(self, grid_small, p_small):
        f = smooth_state(grid_small, 0.2, ref=p_small)
        f_lab = to_lab(f)
        g = free_stream(f_lab, 0.0)
        assert np.array_equal(g.h, f_lab.h)

    def test_reference_invariant(self, grid_small, p_small):
        f = reference_field(grid_small, p_small, frame="lab")
        g = free_stream(f, 0.7)
        assert np.allclose(g.h, 1.0, atol=1e-13)
        assert g.t == pytest.approx(0.7)

    @staticmethod
    def _interior(grid, v_cut, x_cut):
        """Mask of (v, x) nodes whose characteristics stay inside the box
        for the shifts used below; outside it the constant boundary
        extension dominates and the comparison is not an interpolation
        test."""
        v = grid.v_nodes()
        x = grid.x_nodes()
        mv = np.max(np.abs(v), axis=1) <= v_cut
        mx = np.max(np.abs(x), axis=1) <= x_cut
        return mv[:, None] & mx[None, :]

    def test_group_property(self, grid_desk, p_small):
        f = smooth_state(grid_desk, 0.2, ref=p_small)
        f = DistributionField(grid=f.grid, t=0.0, frame="lab", h=f.h,
                              ref=p_small)
        g1 = free_stream(free_stream(f, 0.3), 0.4)
        g2 = free_stream(f, 0.7)
        mask = self._interior(grid_desk, 2.5, 2.5)
        assert np.max(np.abs(g1.h - g2.h)[mask]) < 2e-3

    def test_interpolation_order(self, p_small):
        # e^{+d} e^{-d} vs identity shrinks at fourth order in dx
        errs = []
        for Nx in (12, 24):
            g = PhaseGrid(D=2, Nv=8, Vmax=4.0, Nx=Nx, Xmax=5.0)
            f = smooth_state(g, 0.3, ref=p_small)
            f = DistributionField(grid=g, t=0.0, frame="lab", h=f.h,
                                  ref=p_small)
            rt = free_stream(free_stream(f, 0.37), -0.37)
            mask = self._interior(g, 4.0, 3.0)
            errs.append(np.max(np.abs(rt.h - f.h)[mask]))
        order = np.log2(errs[0] / errs[1])
        assert order > 3.0

    def test_frame_round_trip(self, grid_desk, p_small):
        f = smooth_state(grid_desk, 0.2, ref=p_small)
        f = DistributionField(grid=f.grid, t=0.6, frame="comoving", h=f.h,
                              ref=p_small)
        rt = to_comoving(to_lab(f))
        mask = self._interior(grid_desk, 2.5, 2.5)
        assert np.max(np.abs(rt.h - f.h)[mask]) < 2e-3
        # full-grid defect is dominated by boundary extension; report only
        assert np.max(np.abs(rt.h - f.h)) < 1.0


class TestSupNorm:
    def test_zero_and_constant_scale(self, grid_small, p_small):
        f = reference_field(grid_small, p_small)
        g = reference_field(grid_small, p_small, scale=1.25)
        assert weighted_sup_norm(f, f) == 0.0
        assert weighted_sup_norm(g, f) == pytest.approx(0.25, abs=1e-15)

    def test_triangle_inequality(self, grid_small, p_small):
        rng = np.random.default_rng(2)
        shape = (grid_small.n_vnodes, grid_small.n_xnodes)
        for _ in range(20):
            fs = [DistributionField(grid=grid_small, t=0.0, frame="comoving",
                                    h=1.0 + 0.3 * rng.standard_normal(shape),
                                    ref=p_small) for _ in range(3)]
            d01 = weighted_sup_norm(fs[0], fs[1])
            d12 = weighted_sup_norm(fs[1], fs[2])
            d02 = weighted_sup_norm(fs[0], fs[2])
            assert d02 <= d01 + d12 + 1e-15

    def test_grid_mismatch(self, grid_small, p_small):
        other = PhaseGrid(D=2, Nv=12, Vmax=5.0, Nx=8, Xmax=5.0)
        with pytest.raises(ValueError):
            weighted_sup_norm(reference_field(grid_small, p_small),
                              reference_field(other, p_small))


class TestMoments:
    def test_reference_and_linearity(self, p_small):
        g = suggest_grid(p_small, Nv=20, Nx=20)
        f1 = reference_field(g, p_small)
        f2 = reference_field(g, p_small, scale=1.5)
        m1, m2 = moments(f1), moments(f2)
        cf = invariant_moments(p_small)
        assert np.max(np.abs(m1 - cf)) < 1e-8
        assert np.allclose(m2, 1.5 * m1, rtol=1e-13)

    def test_comoving_vs_lab_after_conversion(self, p_small):
        g = suggest_grid(p_small, Nv=20, Nx=20)
        f = smooth_state(g, 0.15, ref=p_small)
        f = DistributionField(grid=g, t=0.4, frame="comoving", h=f.h,
                              ref=p_small)
        m_com = moments(f)
        m_lab = moments(to_lab(f))
        scale = max(np.max(np.abs(m_com)), p_small.m)
        assert np.max(np.abs(m_com - m_lab)) / scale < 5e-4


class TestHFunctional:
    def test_reference_matches_closed_form(self, p_small):
        g = suggest_grid(p_small, Nv=20, Nx=20)
        f = reference_field(g, p_small)
        assert h_functional(f) == pytest.approx(h_of_maxwellian(p_small),
                                                rel=1e-6)

    def test_scaling_identity(self, p_small):
        g = suggest_grid(p_small, Nv=20, Nx=20)
        lam = 1.7
        f = reference_field(g, p_small)
        f2 = reference_field(g, p_small, scale=lam)
        H1, H2 = h_functional(f), h_functional(f2)
        mass = p_small.m
        assert H2 == pytest.approx(lam * H1 + lam * np.log(lam) * mass,
                                   rel=1e-6)

    def test_frame_invariance(self, p_small):
        g = suggest_grid(p_small, Nv=20, Nx=20)
        f = smooth_state(g, 0.15, ref=p_small)
        f = DistributionField(grid=g, t=0.5, frame="comoving", h=f.h,
                              ref=p_small)
        assert h_functional(f) == pytest.approx(h_functional(to_lab(f)),
                                                rel=1e-4)

    def test_negative_h_rejected(self, grid_small, p_small):
        h = np.ones((grid_small.n_vnodes, grid_small.n_xnodes))
        h[0, 0] = -0.1
        f = DistributionField(grid=grid_small, t=0.0, frame="lab", h=h,
                              ref=p_small)
        with pytest.raises(ValueError):
            h_functional(f)


class TestDumps:
    def test_round_trip(self, tmp_path, grid_small, p_small):
        f = smooth_state(grid_small, 0.21, ref=p_small)
        prefix = str(tmp_path / "field")
        manifest = save_field(f, prefix)
        assert manifest["checksum"].startswith("sha256:")
        g = load_field(prefix)
        assert np.array_equal(g.h, f.h)
        assert g.frame == f.frame and g.t == f.t
        assert g.grid == f.grid

    def test_checksum_detects_corruption(self, tmp_path, grid_small, p_small):
        f = reference_field(grid_small, p_small)
        prefix = str(tmp_path / "field")
        save_field(f, prefix)
        raw = bytearray(open(prefix + ".f64", "rb").read())
        raw[13] ^= 0xFF
        open(prefix + ".f64", "wb").write(bytes(raw))
        with pytest.raises(ValueError, match="checksum"):
            load_field(prefix)


class TestTrajectory:
    def test_validation(self, grid_small, p_small):
        f = reference_field(grid_small, p_small)
        with pytest.raises(ValueError, match="increasing"):
            Trajectory(times=np.array([0.0, 0.0]), fields=(f, f))
        lab = to_lab(f)
        with pytest.raises(ValueError, match="comoving"):
            Trajectory(times=np.array([0.0, 1.0]), fields=(lab, lab))

    def test_node_lookup_and_distance(self, grid_small, p_small):
        fa = reference_field(grid_small, p_small)
        fb = reference_field(grid_small, p_small, t=1.0)
        tr1 = Trajectory(times=np.array([0.0, 1.0]), fields=(fa, fb))
        tr2 = Trajectory(times=np.array([0.0, 1.0]),
                         fields=(reference_field(grid_small, p_small,
                                                 scale=1.1),
                                 reference_field(grid_small, p_small, t=1.0,
                                                 scale=1.2)))
        assert tr1.node_index(1.0) == 1
        assert tr1.sup_distance(tr2) == pytest.approx(0.2, abs=1e-14)
