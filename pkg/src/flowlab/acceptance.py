"""The acceptance battery: thirteen numbered checks shared by the tests and ``flowlab verify``."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import axisym, blowup, datums, kernels, mild, parabolic
from .fields import AxisymGrid, TorusGrid, ScalarField, green_identity_check

logger = logging.getLogger(__name__)

TG_SMOOTHING_K1 = 0.42888194248035344  # sqrt(2)/2 * e^{-1/2}, attained at t = 1/4
ERF_SMOOTHING = 1.0 / math.sqrt(math.pi)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name}: {self.detail} ({self.runtime:.1f} s)"


def _timed(number: int, name: str, budget: float | None, fn: Callable[[], tuple[bool, str, dict]]) -> CriterionResult:
    start = time.perf_counter()
    ok, detail, measured = fn()
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed > budget:
        ok = False
        detail += f"; runtime {elapsed:.1f} s exceeds {budget:g} s"
    return CriterionResult(number, name, bool(ok), detail, measured, elapsed)


# ---------------------------------------------------------------------------
# 1. Taylor-Green oracle
# ---------------------------------------------------------------------------

def taylor_green_oracle() -> CriterionResult:
    def body():
        g = TorusGrid(2, 64)
        traj, report = mild.picard_solve(datums.taylor_green(g), 1.0)
        exact = np.stack([datums.taylor_green(g, t).components for t in traj.times])
        err = float(np.max(np.abs(traj.data - exact)))
        w_sup = mild.vorticity_sup_series(traj)
        w_err = float(np.max(np.abs(w_sup - 2.0 * np.exp(-2.0 * traj.times))))
        ok = report.converged and err <= 1e-6 and w_err <= 1e-6
        return ok, f"sup error {err:.2e}, sup|omega| error {w_err:.2e}", {"sup_error": err, "vorticity_error": w_err}
    return _timed(1, "Taylor-Green oracle", 60.0, body)


# ---------------------------------------------------------------------------
# 2. Picard contraction
# ---------------------------------------------------------------------------

def picard_contraction(seeds=(0, 1, 2)) -> CriterionResult:
    def body():
        g = TorusGrid(2, 32)
        factors, geometric = [], True
        for seed in seeds:
            u0 = datums.random_band_limited(g, seed=seed)
            first = {}
            for T in (0.1, 0.4):
                _, rep = mild.picard_solve(u0, T)
                first[T] = rep.ratios[0]
                inc = np.asarray(rep.increments)
                geometric &= rep.converged and bool(np.all(np.diff(inc) < 0)) and max(rep.ratios) < 1
            factors.append(first[0.4] / first[0.1])
        ok = geometric and all(1.5 <= f <= 2.5 for f in factors)
        txt = ", ".join(f"{f:.3f}" for f in factors)
        return ok, f"first-ratio factors T=0.4/T=0.1: {txt} (target 2 +- 25%); geometric decay {geometric}", \
            {"factors": factors, "geometric": geometric}
    return _timed(2, "Picard contraction", 120.0, body)


# ---------------------------------------------------------------------------
# 3. Kernel decay
# ---------------------------------------------------------------------------

def kernel_decay() -> CriterionResult:
    def body():
        scales = kernels.parse_scales("1:100:20")
        s_ij = kernels.verify_decay("Kij", 3, scales).slope
        s_ijk = kernels.verify_decay("Kijk", 3, scales).slope
        rng = np.random.default_rng(7)
        symmetric = True
        for _ in range(50):
            x = rng.normal(size=3)
            t = float(rng.uniform(0, 2))
            for i in range(1, 4):
                for j in range(1, 4):
                    symmetric &= kernels.oseen_kij(i, j, x, t, 3) == kernels.oseen_kij(j, i, x, t, 3)
        x = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
        div = max(abs(kernels.kij_divergence(i, x, 0.5, 3)) for i in range(1, 4))
        ok = abs(s_ij + 3) <= 0.15 and abs(s_ijk + 4) <= 0.2 and symmetric and div <= 1e-6
        return ok, f"slopes Kij {s_ij:.4f}, Kijk {s_ijk:.4f}; symmetric {symmetric}; divergence {div:.1e}", \
            {"slope_kij": s_ij, "slope_kijk": s_ijk, "divergence": div}
    return _timed(3, "kernel decay", 30.0, body)


# ---------------------------------------------------------------------------
# 4. Decomposition
# ---------------------------------------------------------------------------

def decomposition() -> CriterionResult:
    def body():
        g = TorusGrid(2, 16)
        times = np.linspace(0.0, 1.0, 257)
        data = np.zeros((times.size, 2) + g.shape)
        data[:, 0] = np.sin(times)[:, None, None]
        parasitic = mild.Trajectory(g, times, data, "parasitic")
        dec = mild.decompose(parasitic)
        v_max = float(np.max(np.abs(dec.v.data)))
        bp_err = float(np.max(np.abs(dec.b_prime[:, 0] - np.cos(times)))) + float(np.max(np.abs(dec.b_prime[:, 1])))
        mild_bp = []
        for u0 in (datums.taylor_green(TorusGrid(2, 32)), datums.random_band_limited(TorusGrid(2, 32), seed=3)):
            traj, _ = mild.picard_solve(u0, 0.5)
            mild_bp.append(float(np.max(np.abs(mild.decompose(traj, f_from_u=True).b_prime))))
        ok = v_max == 0 and dec.heat_residual <= 1e-8 and bp_err <= 1e-3 and max(mild_bp) <= 1e-8
        return ok, (f"parasitic: v {v_max:.1e}, heat residual {dec.heat_residual:.1e}, b' error {bp_err:.1e}; "
                    f"mild runs: |b'| {max(mild_bp):.1e}"), \
            {"heat_residual": dec.heat_residual, "b_prime_error": bp_err, "mild_b_prime": mild_bp}
    return _timed(4, "decomposition", None, body)


# ---------------------------------------------------------------------------
# 5. Maximum principles
# ---------------------------------------------------------------------------

def maximum_principles(jobs: int = 1) -> CriterionResult:
    def body():
        g = TorusGrid(2, 32)
        incr = []
        for seed in (0, 1, 2):
            traj, _ = mild.picard_solve(datums.random_band_limited(g, seed=seed), 1.0, dt=1.0 / 64)
            incr.append(float(np.max(np.diff(mild.vorticity_sup_series(traj)))))
        ok_a = max(incr) <= 1e-8

        ag = AxisymGrid(1.0, -1.0, 1.0, 33, 65)
        f_incr, e_incr = [], []
        for state in (axisym.swirl_bump(ag, amplitude=5.0), axisym.swirl_bump(ag, amplitude=5.0, eta_amplitude=20.0)):
            rep = axisym.liouville_monitors(axisym.run(state, 1e-3, 200))
            f_incr.append(rep.max_f_increase)
        for amp in (20.0, -35.0):
            rep = axisym.liouville_monitors(axisym.run(axisym.vortex_ring(ag, amplitude=amp), 1e-3, 200))
            e_incr.append(rep.max_eta_increase)
        ok_b = max(f_incr) <= 1e-10
        ok_c = max(e_incr) <= 1e-10

        violations = 0
        battery = [
            parabolic.ParabolicProblem(-1, 1, 0.5),
            parabolic.ParabolicProblem(-1, 1, 0.5, drift=1.0),
            parabolic.ParabolicProblem((-1, -1), (1, 1), 0.2, drift=(0.5, -1.0)),
        ]
        for p in battery:
            K = np.zeros((1, p.dim))
            probe = parabolic.HarnackProbe(K, (np.full(p.dim, -0.5), np.full(p.dim, 0.5)), p.T / 2,
                                           window_starts=6, plateau_widths=4)
            table = parabolic.harnack_stability_probe(p, probe, nx=41 if p.dim == 1 else 21, jobs=jobs)
            violations += table.mp_violations
        rng = np.random.default_rng(11)
        for seed in range(3):
            noise = rng.uniform(-1, 1, 81)
            p = parabolic.ParabolicProblem(-1, 1, 0.2, u0=lambda x, n=noise: n, bc=lambda t, x: np.sin(7 * t) * x,
                                           drift=lambda t, x: np.stack([np.cos(3 * x + t)]))
            violations += parabolic.max_principle_report(parabolic.parabolic_solve(p, 81, 1e-3)).count
        ok_d = violations == 0
        ok = ok_a and ok_b and ok_c and ok_d
        detail = (f"(a) max vorticity-sup increase {max(incr):.1e}; (b) max sup|f| increase {max(f_incr):.1e}; "
                  f"(c) max sup|eta| increase {max(e_incr):.1e}; (d) violations {violations}")
        return ok, detail, {"vorticity": incr, "f": f_incr, "eta": e_incr, "violations": violations}
    return _timed(5, "maximum principles", None, body)


# ---------------------------------------------------------------------------
# 6. Green identity
# ---------------------------------------------------------------------------

def green_identity() -> CriterionResult:
    def body():
        g = TorusGrid(2, 64)
        v = datums.taylor_green(g)
        gaps = []
        for R in (0.5, 1.0):
            res = green_identity_check(v, (math.pi + 0.3, math.pi - 0.2), R)
            gaps.append(abs(res.area - res.boundary))
        return max(gaps) <= 1e-6, "disc-boundary gaps " + ", ".join(f"{x:.1e}" for x in gaps), {"gaps": gaps}
    return _timed(6, "Green identity", None, body)


# ---------------------------------------------------------------------------
# 7. Five-dimensional Laplacian
# ---------------------------------------------------------------------------

def laplacian5_check() -> CriterionResult:
    def body():
        cases = {
            "r2": (lambda r, z: r ** 2, lambda r, z: 8 + 0 * r),
            "z2": (lambda r, z: z ** 2, lambda r, z: 2 + 0 * r),
            "r2z": (lambda r, z: r ** 2 * z, lambda r, z: 8 * z),
            "smooth": (lambda r, z: np.exp(-r ** 2) * np.cos(z), lambda r, z: (4 * r ** 2 - 9) * np.exp(-r ** 2) * np.cos(z)),
        }
        errors = {k: [] for k in cases}
        sizes = (16, 32, 64)
        for n in sizes:
            grid = AxisymGrid(1.0, -1.0, 1.0, n + 1, 2 * n + 1)
            rr, zz = grid.mesh()
            for name, (fn, exact) in cases.items():
                out = axisym.laplacian5(ScalarField(grid, fn(rr, zz))).samples
                errors[name].append(float(np.max(np.abs(out - exact(rr, zz))[:-1, 1:-1])))
        exact_ok = all(max(errors[k]) <= 1e-9 for k in ("r2", "z2", "r2z"))
        e = errors["smooth"]
        order = math.log2(e[-2] / e[-1])
        ag = AxisymGrid(1.0, -1.0, 1.0, 33, 65)
        start = axisym.rigid_rotation(ag)
        states = axisym.run(start, 1e-3, 100, every=100)
        drift = float(np.max(np.abs(states[-1].f - start.f)[1:-1, 1:-1])) / states[-1].time
        ok = exact_ok and order >= 1.9 and drift <= 1e-8
        detail = (f"polynomial errors <= {max(max(errors[k]) for k in ('r2', 'z2', 'r2z')):.1e}; "
                  f"observed order {order:.3f}; rigid-rotation drift {drift:.1e} per unit time")
        return ok, detail, {"errors": errors, "order": order, "drift": drift}
    return _timed(7, "5D Laplacian", None, body)


# ---------------------------------------------------------------------------
# 8. No-swirl invariance
# ---------------------------------------------------------------------------

def no_swirl_invariance() -> CriterionResult:
    def body():
        ag = AxisymGrid(1.0, -1.0, 1.0, 33, 65)
        state = axisym.vortex_ring(ag, amplitude=20.0)
        worst = 0.0
        for _ in range(1000):
            state = axisym.axisym_step(state, 1e-3)
            worst = max(worst, float(np.max(np.abs(state.velocity()[1]))))
        return worst <= 1e-12, f"max |u_theta| over 1000 steps {worst:.1e}", {"max_u_theta": worst}
    return _timed(8, "no-swirl invariance", None, body)


# ---------------------------------------------------------------------------
# 9. Rescaling
# ---------------------------------------------------------------------------

def rescaling() -> CriterionResult:
    def body():
        g = TorusGrid(2, 64)
        traj, _ = mild.picard_solve(datums.taylor_green(g), 1.0)
        src_res = blowup.relative_nse_residual(traj)
        unit_err, res_ratio = 0.0, 0.0
        for k, idx in enumerate((0, 16, 40, 64, 100)):
            step = blowup.make_rescale_step(traj, idx, k=k)
            v = blowup.rescale(traj, step)
            i0 = int(np.argmin(np.abs(v.times)))
            unit_err = max(unit_err, abs(float(np.linalg.norm(v.data[i0][(slice(None), 0, 0)])) - 1.0))
            res_ratio = max(res_ratio, blowup.relative_nse_residual(v) / src_res)
        g3 = TorusGrid(3, 48)
        centre = (math.pi, math.pi)
        field3 = blowup.capped_swirl(g3, axis_point=centre)
        src = mild.Trajectory(g3, np.array([0.0, 0.1, 0.2]), np.stack([field3.components] * 3))
        base = blowup.scale_invariant_monitors(src, axis_point=centre).sup_rho_u
        mon_err = 0.0
        for x, M in (((math.pi + 1.3, math.pi, 0.3), 1.7), ((1.0, 2.0, 3.0), 3.2), ((math.pi, math.pi + 1.5, 0.0), 0.6)):
            step = blowup.RescaleStep(x, 0.1, M)
            v = blowup.rescale(src, step)
            axis = np.mod(step.map_point((*centre, 0.0))[:2], v.grid.length)
            mon = blowup.scale_invariant_monitors(v, axis_point=axis).sup_rho_u
            mon_err = max(mon_err, float(np.max(np.abs(mon - base))))
        ok = unit_err <= 1e-12 and res_ratio <= 2.0 and mon_err <= 1e-3
        detail = (f"||v(0,0)| - 1| {unit_err:.1e}; residual ratio {res_ratio:.4f}; "
                  f"rho|u| monitor change {mon_err:.1e}")
        return ok, detail, {"unit_error": unit_err, "residual_ratio": res_ratio, "monitor_error": mon_err}
    return _timed(9, "rescaling", None, body)


# ---------------------------------------------------------------------------
# 10. Classifier
# ---------------------------------------------------------------------------

def classifier() -> CriterionResult:
    def body():
        T = 1.0
        t = np.linspace(0.0, 0.999, 400)
        rng = np.random.default_rng(2024)
        outcomes = []
        ok = True
        for noise in (0.0, 0.01):
            jitter = 1.0 + noise * rng.standard_normal((3, t.size))
            c1 = blowup.classify(blowup.BlowupTrace.from_series(t, (T - t) ** -0.5 * jitter[0]), T)
            c2 = blowup.classify(blowup.BlowupTrace.from_series(t, (T - t) ** -0.75 * jitter[1]), T)
            c3 = blowup.classify(blowup.BlowupTrace.from_series(t, 5.0 * jitter[2]), T)
            ok &= c1.kind == "TypeI" and abs(c1.C_fit - 1.0) <= 0.02
            ok &= c2.kind == "TypeII" and c3.kind == "NoBlowup"
            outcomes.append(f"noise {noise:g}: {c1.kind} C_fit={c1.C_fit:.4f}, {c2.kind}, {c3.kind}")
        return ok, "; ".join(outcomes), {}
    return _timed(10, "classifier", None, body)


# ---------------------------------------------------------------------------
# 11. Tail integral
# ---------------------------------------------------------------------------

def tail_integral() -> CriterionResult:
    def body():
        Ms = (10.0, 100.0, 1000.0)
        vals = [blowup.tail_integral_I(M) for M in Ms]
        oracle = [blowup.tail_integral_oracle(M) for M in Ms]
        products = [M * v for M, v in zip(Ms, vals)]
        spread = (max(products) - min(products)) / np.mean(products)
        rel = max(abs(v - o) / o for v, o in zip(vals, oracle))
        ok = spread <= 0.05 and rel <= 1e-4 and vals[0] > vals[1] > vals[2] > 0
        return ok, f"M I(M) = {products[0]:.8f} (spread {spread:.1e}); oracle mismatch {rel:.1e}", \
            {"M_I": products, "oracle_rel": rel}
    return _timed(11, "tail integral", None, body)


# ---------------------------------------------------------------------------
# 12. Smoothing diagnostic
# ---------------------------------------------------------------------------

def smoothing() -> CriterionResult:
    def body():
        g = TorusGrid(2, 256)
        traj, _ = mild.picard_solve(datums.erf_profile(g), 0.5)
        erf_val = mild.smoothing_diagnostic(traj, 1, 0)
        del traj
        tg, _ = mild.picard_solve(datums.taylor_green(TorusGrid(2, 64)), 1.0)
        tg_val = mild.smoothing_diagnostic(tg, 1, 0)
        ok = abs(erf_val - 0.5642) <= 0.01 and math.isfinite(tg_val) and abs(tg_val - TG_SMOOTHING_K1) <= 1e-9
        return ok, f"erf profile {erf_val:.4f} (target 0.5642 +- 0.01); Taylor-Green {tg_val:.12f} (pinned)", \
            {"erf": erf_val, "taylor_green": tg_val}
    return _timed(12, "smoothing diagnostic", None, body)


# ---------------------------------------------------------------------------
# 13. Harnack probe
# ---------------------------------------------------------------------------

def harnack_probe(jobs: int = 1) -> CriterionResult:
    def body():
        p = parabolic.ParabolicProblem(-1.0, 1.0, 0.5)
        probe = parabolic.HarnackProbe(np.array([[0.0]]), (np.array([-0.5]), np.array([0.5])), 0.25)
        table = parabolic.harnack_stability_probe(p, probe, nx=81, jobs=jobs)
        const_zero = all(e == 0.0 for e in table.constant_epsilon)
        ok = table.monotone() and const_zero
        txt = ", ".join(f"eps({d:g})={e:.4f}" for d, e in zip(table.deltas, table.epsilon))
        return ok, f"{txt}; monotone {table.monotone()}; constant row zero {const_zero}", \
            {"deltas": table.deltas, "epsilon": table.epsilon}
    return _timed(13, "Harnack probe", None, body)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: taylor_green_oracle,
    2: picard_contraction,
    3: kernel_decay,
    4: decomposition,
    5: maximum_principles,
    6: green_identity,
    7: laplacian5_check,
    8: no_swirl_invariance,
    9: rescaling,
    10: classifier,
    11: tail_integral,
    12: smoothing,
    13: harnack_probe,
}

SUITES: dict[str, tuple[int, ...]] = {
    "kernels": (3,),
    "mild": (1, 2, 4, 6, 12),
    "maxprinciple": (5, 13),
    "axisym": (7, 8),
    "blowup": (9, 10, 11),
}
SUITES["all"] = tuple(sorted(n for s in SUITES.values() for n in s))


def run_criterion(number: int) -> CriterionResult:
    try:
        return CRITERIA[number]()
    except Exception as exc:  # a crash is a failure, reported like one
        logger.exception("criterion %d raised", number)
        return CriterionResult(number, CRITERIA[number].__name__, False, f"raised {type(exc).__name__}: {exc}")
