import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowlab import blowup, datums, mild
from flowlab.blowup import BlowupTrace, RescaleStep, classify, leray_rate, rescale, second_rescale
from flowlab.errors import DataError, DomainError, FitError, GeometryError, ValidationError
from flowlab.fields import TorusGrid, VectorField


def _series(T=1.0, power=0.5, n=400, noise=0.0, seed=0, end=0.999):
    t = np.linspace(0.0, end, n)
    h = (T - t) ** -power
    if noise:
        h = h * (1 + noise * np.random.default_rng(seed).standard_normal(n))
    return t, h


class TestTrace:
    def test_taylor_green(self, tg_run):
        tr = blowup.trace_from(tg_run[0])
        assert np.max(np.abs(tr.h - np.exp(-2 * tg_run[0].times))) <= 1e-6
        assert np.allclose(tr.H, 1.0, atol=1e-12)

    def test_constant(self, grid2):
        c = np.stack([np.full(grid2.shape, 3.0), np.full(grid2.shape, 4.0)])
        traj = mild.Trajectory(grid2, [0.0, 0.5], np.stack([c, c]))
        assert np.allclose(blowup.trace_from(traj).h, 5.0)

    def test_running_max(self):
        tr = BlowupTrace.from_series([0, 1, 2, 3], [1.0, 3.0, 2.0, 4.0])
        assert list(tr.H) == [1.0, 3.0, 3.0, 4.0]
        assert np.all(tr.H >= tr.h)

    def test_errors(self, grid2):
        with pytest.raises(DataError):
            BlowupTrace.from_series([], [])
        with pytest.raises(DataError):
            blowup.trace_from(mild.Trajectory(grid2, [0.0], np.zeros((1, 2) + grid2.shape)))
        with pytest.raises(DomainError):
            BlowupTrace.from_series([0.0, 1.0], [1.0, 1.0], T_candidate=0.5)


class TestLerayRate:
    def test_self_similar(self):
        t, h = _series()
        assert leray_rate(BlowupTrace.from_series(t, h), 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_bounded(self):
        t = np.linspace(0, 1 - 1e-8, 50)
        assert leray_rate(BlowupTrace.from_series(t, np.full(50, 5.0)), 1.0) <= 1e-3

    def test_taylor_green_flagged(self, tg_run):
        traj = tg_run[0]
        trace = blowup.trace_from(traj)
        cls = classify(trace, 1.0 + 1e-6)
        assert cls.kind == "NoBlowup" and "no Leray-consistent blow-up" in cls.flags
        assert cls.leray_rate_inf < 0.01

    def test_domain(self):
        with pytest.raises(DomainError):
            leray_rate(BlowupTrace.from_series([0.0, 1.0], [1.0, 1.0]), 1.0)


class TestClassify:
    @pytest.mark.parametrize("noise", [0.0, 0.01])
    def test_type_one(self, noise):
        c = classify(BlowupTrace.from_series(*_series(noise=noise)), 1.0)
        assert c.kind == "TypeI" and c.C_fit == pytest.approx(1.0, rel=0.02)
        assert c.as_dict()["type"] == "TypeI"

    @pytest.mark.parametrize("noise", [0.0, 0.01])
    def test_type_two(self, noise):
        assert classify(BlowupTrace.from_series(*_series(power=0.75, noise=noise)), 1.0).kind == "TypeII"

    @pytest.mark.parametrize("noise", [0.0, 0.01])
    def test_bounded(self, noise):
        t, _ = _series()
        h = 5.0 * (1 + noise * np.random.default_rng(3).standard_normal(t.size))
        assert classify(BlowupTrace.from_series(t, h), 1.0).kind == "NoBlowup"

    def test_short_window(self):
        with pytest.raises(FitError):
            classify(BlowupTrace.from_series(*_series(n=400)), 1.0, window=7)

    def test_time_shift_invariance(self):
        t, h = _series(noise=0.01)
        a = classify(BlowupTrace.from_series(t, h), 1.0)
        b = classify(BlowupTrace.from_series(t + 3.5, h), 4.5)
        assert a.kind == b.kind and a.C_fit == pytest.approx(b.C_fit, rel=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(lam=st.floats(0.2, 5.0), t0=st.floats(-1.0, 1.0))
    def test_navier_stokes_scaling_invariance(self, lam, t0):
        # h_lambda(s) = lambda h(lambda^2 s + t0) blows up at (T - t0) / lambda^2
        t, h = _series(noise=0.01, seed=7)
        s = (t - t0) / lam ** 2
        a = classify(BlowupTrace.from_series(t, h), 1.0)
        b = classify(BlowupTrace.from_series(s, lam * h), (1.0 - t0) / lam ** 2)
        assert a.kind == b.kind == "TypeI"
        assert a.C_fit == pytest.approx(b.C_fit, rel=1e-9)


class TestRescale:
    def test_identity(self, grid2):
        traj = mild.heat_trajectory(datums.random_band_limited(grid2, seed=1), np.linspace(0, 0.5, 5))
        v = rescale(traj, RescaleStep((0.0, 0.0), 0.0, 1.0))
        assert np.max(np.abs(v.data - traj.data)) <= 1e-12 and np.array_equal(v.times, traj.times)

    @pytest.mark.parametrize("method", ["spectral", "cubic"])
    def test_unit_value_at_origin(self, tg_run, method):
        traj = tg_run[0]
        for k, idx in enumerate((0, 10, 77)):
            step = blowup.make_rescale_step(traj, idx, k=k, method=method)
            v = rescale(traj, step, method)
            i0 = int(np.argmin(np.abs(v.times)))
            assert v.times[i0] == 0.0
            assert abs(np.linalg.norm(v.data[i0][:, 0, 0]) - 1.0) <= 1e-12

    def test_sup_bounded_by_gamma(self, tg_run):
        traj = tg_run[0]
        step = blowup.make_rescale_step(traj, 40, k=2)
        v = rescale(traj, step)
        past = v.times <= 0
        assert np.max(np.sqrt(np.sum(v.data[past] ** 2, axis=1))) <= step.gamma_k * (1 + 1e-9) * math.exp(2 * traj.times[40])

    def test_residual_ratio(self, tg_run):
        traj = tg_run[0]
        src = blowup.relative_nse_residual(traj)
        v = rescale(traj, blowup.make_rescale_step(traj, 64, k=3))
        assert blowup.relative_nse_residual(v) <= 2 * src

    def test_window_escape(self, tg_run):
        traj = tg_run[0]
        step = RescaleStep((0.0, 0.0), 0.5, 1.0)
        with pytest.raises(GeometryError, match="admissible range"):
            rescale(traj, step, window=(1.0, -10.0, 0.0))

    def test_time_outside(self, tg_run):
        with pytest.raises(GeometryError):
            rescale(tg_run[0], RescaleStep((0.0, 0.0), 2.0, 1.0))

    def test_interpolated_time(self, tg_run):
        traj = tg_run[0]
        t_k = 0.5 * (traj.times[3] + traj.times[4])
        v = rescale(traj, RescaleStep((0.0, 0.0), t_k, 1.0))
        assert 0.0 in v.times and len(v) == len(traj) + 1

    def test_step_validation(self):
        with pytest.raises(ValidationError):
            RescaleStep((0, 0), 0.0, 0.0)
        with pytest.raises(ValidationError):
            RescaleStep((0, 0), 0.0, 1.0, gamma_k=0.5)

    def test_gamma_schedule(self):
        assert [blowup.gamma_schedule(k) for k in range(3)] == [2.0, 1.5, 1.25]


class TestSecondRescale:
    def test_translation(self, grid2):
        traj = mild.heat_trajectory(datums.random_band_limited(grid2, seed=2), np.linspace(0, 0.4, 5))
        w, _ = second_rescale(traj, 0.0, M_k=1.0)
        for m in range(len(traj)):
            shifted = blowup._sample_shifted(grid2, traj.data[m], np.array([1.0, 0.0]), "spectral")
            assert np.max(np.abs(w.data[m] - shifted)) <= 1e-12

    def test_unit_value(self, tg_run):
        w, step = second_rescale(tg_run[0], 0.3)
        i0 = int(np.argmin(np.abs(w.times)))
        assert abs(np.linalg.norm(w.data[i0][:, 0, 0]) - 1.0) <= 1e-12

    def test_self_similar_bound(self):
        # v = C / sqrt(-s) in magnitude with a unit-magnitude rotating profile; w keeps the C / sqrt(-tau) law
        g = TorusGrid(2, 32)
        s = np.linspace(-2.0, -0.5, 7)
        C = 0.8
        x, y = g.mesh()
        profile = np.stack([np.cos(y), np.sin(y)])
        v = mild.Trajectory(g, s, np.stack([C / np.sqrt(-t) * profile for t in s]))
        w, step = second_rescale(v, -1.0)
        mag = np.sqrt(np.sum(w.data ** 2, axis=1)).reshape(len(w), -1).max(axis=1)
        tau = w.times
        assert np.all(mag * np.sqrt(-(step.t_k + tau / step.M_k ** 2)) * step.M_k <= C * (1 + 1e-9))

    def test_excluded_cylinder(self):
        g = TorusGrid(3, 16, 16.0)
        mask = blowup.excluded_cylinder(g, 4.0)
        assert mask.any() and not mask.all()


class TestMonitors:
    def test_capped_swirl_plateau(self):
        g = TorusGrid(3, 48)
        centre = (math.pi, math.pi)
        u = blowup.capped_swirl(g, axis_point=centre)
        traj = mild.Trajectory(g, [0.0], u.components[None])
        rep = blowup.scale_invariant_monitors(traj, axis_point=centre)
        assert rep.sup_rho_u[0] == pytest.approx(1.0, abs=1e-3)
        lo, hi = rep.plateau
        # the heat filter erodes the edges slightly; the plateau stays inside [inner, outer]
        assert 1.0 <= lo < hi <= 2.0 and hi - lo >= 0.4

    def test_rescale_invariance(self):
        g = TorusGrid(3, 48)
        centre = (math.pi, math.pi)
        u = blowup.capped_swirl(g, axis_point=centre)
        src = mild.Trajectory(g, [0.0, 0.1], np.stack([u.components] * 2))
        base = blowup.scale_invariant_monitors(src, axis_point=centre).sup_rho_u
        step = RescaleStep((math.pi + 0.7, math.pi - 0.4, 1.0), 0.05, 2.3)
        v = rescale(src, step)
        axis = np.mod(step.map_point((*centre, 0.0))[:2], v.grid.length)
        mon = blowup.scale_invariant_monitors(v, axis_point=axis).sup_rho_u
        assert np.max(np.abs(mon[[0, -1]] - base)) <= 1e-3

    def test_sqrt_monitor_invariance(self, tg_run):
        traj = tg_run[0]
        T = 1.5
        base = blowup.scale_invariant_monitors(traj, T).sup_sqrt_u
        step = RescaleStep((0.3, 0.2), 0.0, 2.0)
        v = rescale(traj, step)
        mon = blowup.scale_invariant_monitors(v, step.map_time(T)).sup_sqrt_u
        assert np.max(np.abs(mon - base)) <= 1e-3

    def test_not_applicable_in_2d(self, tg_run):
        rep = blowup.scale_invariant_monitors(tg_run[0])
        assert rep.sup_rho_u is None and rep.applicable["rho_u"] is False
        assert rep.as_dict()["sup_rho_u"] is None


class TestTailIntegral:
    def test_positive_decreasing(self):
        vals = [blowup.tail_integral_I(M) for M in (1, 10, 100, 1000)]
        assert all(v > 0 for v in vals) and vals[0] > vals[1] > vals[2] > vals[3]

    def test_inverse_law(self):
        prods = [M * blowup.tail_integral_I(M) for M in (10, 100, 1000)]
        assert (max(prods) - min(prods)) / np.mean(prods) <= 0.05

    @pytest.mark.parametrize("M", [10.0, 100.0, 1000.0])
    def test_oracle(self, M):
        assert blowup.tail_integral_I(M) == pytest.approx(blowup.tail_integral_oracle(M), rel=1e-4)

    def test_domain(self):
        with pytest.raises(DomainError):
            blowup.tail_integral_I(0.5)


class TestMixedNorm:
    def test_constant_in_time(self, grid2):
        u = VectorField(grid2, np.stack([np.ones(grid2.shape), np.zeros(grid2.shape)]))
        traj = mild.Trajectory(grid2, [0.0, 1.0], np.stack([u.components] * 2))
        area = (2 * math.pi) ** 2
        assert blowup.lpq_norm(traj, 2, 2) == pytest.approx(math.sqrt(area), rel=1e-12)
        assert blowup.lpq_norm(traj, 2, math.inf) == pytest.approx(math.sqrt(area), rel=1e-12)
