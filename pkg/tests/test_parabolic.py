import numpy as np
import pytest
from scipy.integrate import quad

from flowlab import parabolic
from flowlab.errors import GeometryError, ParameterError, ValidationError
from flowlab.parabolic import (
    HarnackProbe, ParabolicProblem, ScalarTrajectory, harnack_stability_probe, max_principle_report,
    parabolic_solve,
)

T0 = 0.5  # initial Gaussian is the heat kernel at time T0 (up to normalization)


def _gaussian(x):
    return np.exp(-x ** 2 / (4 * T0))


def _heat_oracle(x, t, c=0.0):
    """Free-space heat flow of the Gaussian, translated by ``c t``."""
    def f(y, xx):
        return np.exp(-(xx - c * t - y) ** 2 / (4 * t)) / np.sqrt(4 * np.pi * t) * _gaussian(y)
    return np.array([quad(f, xx - c * t - 12, xx - c * t + 12, args=(xx,), limit=200)[0] for xx in x])


class TestProblem:
    def test_bad_box(self):
        with pytest.raises(GeometryError):
            ParabolicProblem(1.0, -1.0, 1.0)
        with pytest.raises(ValidationError):
            ParabolicProblem((0, 0, 0), (1, 1, 1), 1.0)
        with pytest.raises(ValidationError):
            ParabolicProblem(0, 1, 0.0)


class TestSolve:
    def test_constant(self):
        tr = parabolic_solve(ParabolicProblem(-1, 1, 0.2, u0=0.7, bc=0.7), 41, 1e-3)
        assert np.max(np.abs(tr.values - 0.7)) <= 1e-14

    def test_constant_2d_with_drift(self):
        p = ParabolicProblem((-1, -1), (1, 1), 0.1, u0=2.0, bc=2.0, drift=(0.3, -0.4))
        tr = parabolic_solve(p, 21, 5e-3)
        assert np.max(np.abs(tr.values - 2.0)) <= 1e-13

    def test_heat_convolution_oracle(self):
        dx = 5e-4
        tr = parabolic_solve(ParabolicProblem(-8, 8, 0.1, u0=_gaussian), int(round(16 / dx)) + 1, dx, store_every=1000)
        xs = tr.axes[0][::400]
        assert np.max(np.abs(tr.values[-1][::400] - _heat_oracle(xs, 0.1))) <= 1e-4

    def test_constant_drift_translation(self):
        # at CFL number 1 the upwind step is an exact shift, leaving only the diffusion error
        dx = 5e-4
        p = ParabolicProblem(-8, 8, 0.1, u0=_gaussian, drift=1.0)
        tr = parabolic_solve(p, int(round(16 / dx)) + 1, dx, store_every=1000)
        xs = tr.axes[0][::400]
        assert np.max(np.abs(tr.values[-1][::400] - _heat_oracle(xs, 0.1, 1.0))) <= 1e-4

    def test_cfl_violation(self):
        with pytest.raises(ParameterError):
            parabolic_solve(ParabolicProblem(-1, 1, 0.1, drift=100.0), 41, 0.01)

    def test_drift_bound_recorded(self):
        p = ParabolicProblem(-1, 1, 0.05, drift=lambda t, x: np.stack([0.5 * np.sin(x)]))
        parabolic_solve(p, 41, 1e-3)
        assert p.drift_bound == pytest.approx(0.5 * np.sin(1.0), rel=1e-12)

    def test_comparison(self):
        lo = ParabolicProblem(-1, 1, 0.2, u0=lambda x: np.cos(np.pi * x / 2), bc=0.0, drift=0.7)
        hi = ParabolicProblem(-1, 1, 0.2, u0=lambda x: np.cos(np.pi * x / 2) + 0.1 * (1 - x * x), bc=0.05, drift=0.7)
        a = parabolic_solve(lo, 41, 1e-3)
        b = parabolic_solve(hi, 41, 1e-3)
        assert np.all(a.values <= b.values + 1e-12)

    def test_discrete_max_principle_bounds(self):
        rng = np.random.default_rng(0)
        noise = rng.uniform(-1, 1, 61)
        p = ParabolicProblem(-1, 1, 0.2, u0=lambda x: noise, bc=lambda t, x: 0.5 * np.sin(5 * t) * x,
                             drift=lambda t, x: np.stack([2 * np.cos(3 * x + t)]))
        tr = parabolic_solve(p, 61, 1e-3)
        assert tr.values.max() <= 1 + 1e-12 and tr.values.min() >= -1 - 1e-12
        assert max_principle_report(tr).count == 0


class TestMaxPrincipleReport:
    def test_constant(self):
        tr = parabolic_solve(ParabolicProblem(0, 1, 0.1, u0=3.0, bc=3.0), 11, 0.01)
        rep = max_principle_report(tr)
        assert rep.count == 0 and np.allclose(rep.sup, 3.0) and np.allclose(rep.inf, 3.0)

    def test_injected_bump_flagged(self):
        tr = parabolic_solve(ParabolicProblem(-1, 1, 0.1, u0=lambda x: 1 - x * x), 21, 0.01)
        vals = tr.values.copy()
        vals[5, 10] += 0.5
        bad = ScalarTrajectory(tr.axes, tr.times, vals, tr.boundary)
        rep = max_principle_report(bad)
        assert rep.count >= 1 and rep.violations[0].step == 5 and rep.violations[0].kind == "max"

    def test_2d_battery(self):
        p = ParabolicProblem((-1, -1), (1, 1), 0.1, u0=lambda x, y: np.sign(x * y), bc=lambda t, x, y: np.cos(4 * t) * x,
                             drift=lambda t, x, y: np.stack([np.sin(y), np.cos(x)]))
        assert max_principle_report(parabolic_solve(p, 25, 2e-3)).count == 0


class TestHarnackProbe:
    def _probe(self, **kw):
        return HarnackProbe(np.array([[0.0]]), (np.array([-0.5]), np.array([0.5])), 0.25, **kw)

    def test_heat_table_monotone(self):
        table = harnack_stability_probe(ParabolicProblem(-1, 1, 0.5), self._probe())
        assert table.monotone()
        assert all(e == 0 for e in table.constant_epsilon)
        assert table.mp_violations == 0
        assert table.epsilon[0] > table.epsilon[-1] > 0
        assert len(table.rows()) == 8

    def test_drift_recorded(self):
        base = harnack_stability_probe(ParabolicProblem(-1, 1, 0.5), self._probe(window_starts=6, plateau_widths=4))
        p = ParabolicProblem(-1, 1, 0.5, drift=1.0)
        drifted = harnack_stability_probe(p, self._probe(window_starts=6, plateau_widths=4))
        assert drifted.drift_bound == pytest.approx(1.0)
        assert drifted.monotone() and drifted.mp_violations == 0
        # recorded only: the comparison with the drift-free table is descriptive
        assert len(drifted.epsilon) == len(base.epsilon)

    def test_parallel_matches_serial(self):
        p = ParabolicProblem(-1, 1, 0.5)
        a = harnack_stability_probe(p, self._probe(window_starts=4, plateau_widths=3), jobs=1)
        b = harnack_stability_probe(p, self._probe(window_starts=4, plateau_widths=3), jobs=3)
        assert a.epsilon == b.epsilon

    def test_2d_geometry(self):
        p = ParabolicProblem((-1, -1), (1, 1), 0.2)
        probe = HarnackProbe(np.zeros((1, 2)), (np.full(2, -0.5), np.full(2, 0.5)), 0.1,
                             window_starts=3, plateau_widths=3)
        table = harnack_stability_probe(p, probe, nx=17)
        assert table.monotone() and table.mp_violations == 0

    @pytest.mark.parametrize("bad", [
        dict(K=np.array([[0.8]])),
        dict(omega_prime=(np.array([-1.0]), np.array([0.5]))),
        dict(tau=0.6),
    ])
    def test_geometry_errors(self, bad):
        kw = dict(K=np.array([[0.0]]), omega_prime=(np.array([-0.5]), np.array([0.5])), tau=0.25)
        kw.update(bad)
        with pytest.raises(GeometryError):
            harnack_stability_probe(ParabolicProblem(-1, 1, 0.5), HarnackProbe(**kw))

    def test_bad_delta(self):
        with pytest.raises(ValidationError):
            harnack_stability_probe(ParabolicProblem(-1, 1, 0.5), self._probe(delta_grid=(0.5, 1.5)))
