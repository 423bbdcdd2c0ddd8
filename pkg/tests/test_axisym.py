import numpy as np
import pytest

from flowlab import axisym
from flowlab.errors import ParameterError, ParityError, ValidationError
from flowlab.fields import AxisymGrid, ScalarField, TorusGrid


def _grid(n=32):
    return AxisymGrid(1.0, -1.0, 1.0, n + 1, 2 * n + 1)


def _l5(grid, s):
    return axisym.laplacian5(ScalarField(grid, s)).samples


class TestLaplacian5:
    @pytest.mark.parametrize("fn, exact", [
        (lambda r, z: r ** 2, lambda r, z: 8 + 0 * r),
        (lambda r, z: z ** 2, lambda r, z: 2 + 0 * r),
        (lambda r, z: r ** 2 * z, lambda r, z: 8 * z),
        (lambda r, z: 1 + 0 * r, lambda r, z: 0 * r),
    ])
    def test_even_polynomials_exact(self, fn, exact):
        g = _grid(16)
        rr, zz = g.mesh()
        err = np.abs(_l5(g, fn(rr, zz)) - exact(rr, zz))
        assert np.max(err) <= 1e-9

    def test_second_order(self):
        errs = []
        for n in (16, 32, 64):
            g = _grid(n)
            rr, zz = g.mesh()
            s = np.exp(-rr ** 2) * np.cos(zz)
            exact = (4 * rr ** 2 - 9) * s
            errs.append(np.max(np.abs(_l5(g, s) - exact)[:-1, 1:-1]))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.9)

    def test_odd_input_rejected(self):
        g = _grid(16)
        rr, _ = g.mesh()
        with pytest.raises(ParityError):
            _l5(g, rr)

    def test_requires_axisym_grid(self):
        g = TorusGrid(2, 8)
        with pytest.raises(ValidationError):
            axisym.laplacian5(ScalarField(g, np.zeros(g.shape)))


class TestMeridional:
    def test_zero(self):
        g = _grid(16)
        m = axisym.meridional_from_eta(ScalarField(g, np.zeros(g.shape)))
        assert np.max(np.abs(m.u_r)) == 0 and np.max(np.abs(m.u_z)) == 0

    def _manufactured(self, n):
        g = AxisymGrid(1.0, 0.0, 1.0, n + 1, n + 1)
        rr, zz = g.mesh()
        psi = rr ** 2 * (1 - rr ** 2) ** 2 * np.sin(np.pi * zz)
        eta = np.sin(np.pi * zz) * (16 - 24 * rr ** 2 + np.pi ** 2 * (1 - rr ** 2) ** 2)
        return g, psi, eta

    def test_manufactured_discrete_round_trip(self):
        g, psi, _ = self._manufactured(32)
        rr = g.r[:, None]
        L = axisym.swirl_operator(ScalarField(g, psi)).samples
        eta_h = np.where(rr > 0, -L / np.where(rr > 0, rr, 1) ** 2, 0.0)
        m = axisym.meridional_from_eta(ScalarField(g, eta_h))
        assert np.max(np.abs(m.psi - psi)[1:-1, 1:-1]) <= 1e-6

    def test_manufactured_converges(self):
        errs = []
        for n in (16, 32, 64):
            g, psi, eta = self._manufactured(n)
            errs.append(np.max(np.abs(axisym.meridional_from_eta(ScalarField(g, eta)).psi - psi)))
        assert errs[-1] <= 1e-3 and errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5

    def test_continuity(self):
        g = _grid(32)
        for state in (axisym.vortex_ring(g, amplitude=20.0), axisym.swirl_bump(g, 5.0, eta_amplitude=10.0)):
            u_r, _, u_z = state.velocity()
            assert axisym.continuity_residual(g, u_r, u_z) <= 1e-8

    def test_axis_regularity(self):
        g = _grid(32)
        u_r, u_t, u_z = axisym.vortex_ring(g, amplitude=20.0).velocity()
        assert np.all(u_r[0] == 0) and np.all(u_t[0] == 0) and np.any(u_z[0] != 0)


class TestEvolution:
    def test_zero_state(self):
        g = _grid(16)
        s = axisym.SwirlState.from_scalars(g, np.zeros(g.shape), np.zeros(g.shape))
        out = axisym.axisym_step(s, 1e-3)
        assert np.max(np.abs(out.f)) == 0 and np.max(np.abs(out.eta)) == 0 and out.time == pytest.approx(1e-3)

    def test_rigid_rotation_stationary(self):
        g = _grid(32)
        s = axisym.rigid_rotation(g)
        out = axisym.run(s, 1e-3, 100, every=100)[-1]
        assert np.max(np.abs(out.f - s.f)[1:-1, 1:-1]) / out.time <= 1e-8
        assert np.max(np.abs(out.eta)) <= 1e-12

    def test_swirl_source_vanishes_for_rigid_rotation(self):
        g = _grid(16)
        assert np.max(np.abs(axisym.swirl_source(g, axisym.rigid_rotation(g).f))) <= 1e-12

    def test_constant_eta_stationary_without_flow(self):
        g = _grid(16)
        s = axisym.SwirlState(g, np.zeros(g.shape), np.ones(g.shape), np.zeros(g.shape))
        mer = axisym.MeridionalVelocity(np.zeros(g.shape), np.zeros(g.shape), np.zeros(g.shape))
        assert np.max(np.abs(axisym.eta_evolve(s, mer, 1e-3, with_swirl_source=False).samples - 1.0)) <= 1e-12

    def test_no_swirl_preserved(self):
        g = _grid(32)
        s = axisym.vortex_ring(g, amplitude=20.0)
        for _ in range(200):
            s = axisym.axisym_step(s, 1e-3)
        assert np.max(np.abs(s.velocity()[1])) <= 1e-12

    def test_swirl_bump_decreases(self):
        g = _grid(32)
        states = axisym.run(axisym.swirl_bump(g, 5.0), 1e-3, 100)
        rep = axisym.liouville_monitors(states, 1e-3)
        sup_f = rep.column("sup_f")
        assert rep.f_nonincreasing and sup_f[-1] < sup_f[0]

    def test_ring_eta_nonincreasing(self):
        g = _grid(32)
        rep = axisym.liouville_monitors(axisym.run(axisym.vortex_ring(g, amplitude=-35.0), 1e-3, 100), 1e-3)
        assert rep.eta_nonincreasing and rep.max_eta_increase <= 1e-10

    def test_cfl_violation(self):
        g = _grid(32)
        with pytest.raises(ParameterError):
            axisym.axisym_step(axisym.vortex_ring(g, amplitude=2000.0), 0.5)

    def test_axis_value_of_f(self):
        g = _grid(16)
        rr, _ = g.mesh()
        with pytest.raises(ValidationError):
            axisym.SwirlState(g, rr ** 2 + 1.0, np.zeros(g.shape), np.zeros(g.shape))

    def test_odd_eta_rejected(self):
        g = _grid(16)
        rr, _ = g.mesh()
        with pytest.raises(ParityError):
            axisym.SwirlState.from_scalars(g, np.zeros(g.shape), rr)


class TestSwirlSourceValidation:
    def test_primitive_residuals(self):
        g = AxisymGrid(2.0, -2.0, 2.0, 33, 65)
        s = axisym.swirl_bump(g, amplitude=20.0, width=0.7)
        with_src = axisym.primitive_residuals(axisym.run(s, 1e-3, 20, with_swirl_source=True))
        without = axisym.primitive_residuals(axisym.run(s, 1e-3, 20, with_swirl_source=False))
        assert with_src["vorticity"] / with_src["vorticity_scale"] <= 0.05
        assert without["vorticity"] / without["vorticity_scale"] >= 0.5
        assert with_src["swirl"] / with_src["swirl_scale"] <= 0.05


class TestMonitors:
    def test_columns(self):
        g = _grid(16)
        rep = axisym.liouville_monitors(axisym.run(axisym.swirl_bump(g, 2.0), 1e-3, 5), 1e-3)
        assert axisym.MONITOR_COLUMNS == ("t", "sup_f", "inf_f", "sup_eta", "sup_rho_u", "cfl")
        assert len(rep.rows) == 6 and all(len(r) == 6 for r in rep.rows)
        assert rep.excluded_rings == 2 and rep.notes

    def test_rigid_rotation_rho_u_grows_with_radius(self):
        vals = []
        for r_max in (1.0, 2.0, 4.0):
            g = AxisymGrid(r_max, -1.0, 1.0, 33, 33)
            vals.append(axisym.liouville_monitors([axisym.rigid_rotation(g)]).column("sup_rho_u")[0])
        # u_theta = r, so rho |u| = r^2 on the monitored region: it grows without bound in r_max
        assert vals[0] < vals[1] < vals[2]
        assert vals[2] / vals[1] == pytest.approx(4.0, rel=0.1)
