"""Command line: ``flowlab run <scenario> ...`` and ``flowlab verify <suite>``.

Exit codes: 0 success, 1 failed acceptance checks, 2 invalid input, 3 solver
failure.  Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, acceptance, axisym, blowup, datums, kernels, mild, parabolic
from .config import SCENARIOS, ConfigError, RunConfig, describe, parse_text, resolve
from .errors import SolverError, ValidationError
from .fields import AxisymGrid, TorusGrid

logger = logging.getLogger("flowlab")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def to_json(obj: Any, indent: int = 0) -> str:
    """JSON with 17 significant digits for floats, ``null`` for NaN and infinities, sorted keys."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, bool):
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_table(header: Sequence[str], rows: Sequence[Sequence[Any]], cfg: RunConfig | None = None) -> str:
    lines = []
    if cfg is not None:
        lines.append("# config: " + to_json(cfg.resolved()).replace("\n", " ").replace("  ", ""))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

class Artifacts:
    """Maps the ``--emit`` list onto the roles a scenario produces."""

    def __init__(self, emit: Sequence[str], defaults: Sequence[str]):
        self.paths = list(emit) or list(defaults)
        self.written: list[str] = []

    def pick(self, suffix: str) -> Path | None:
        for p in self.paths:
            if suffix == "/" and (p.endswith("/") or p.endswith(os.sep)):
                return Path(p)
            if suffix != "/" and p.endswith(suffix):
                return Path(p)
        return None

    def check(self, allowed: Sequence[str]) -> None:
        for p in self.paths:
            if not any((p.endswith("/") if a == "/" else p.endswith(a)) for a in allowed):
                raise ConfigError(f"cannot emit {p!r}; this scenario writes {', '.join(allowed)}", "emit")

    def write(self, path: Path | None, text: str) -> None:
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.written.append(str(path))

    @property
    def log_path(self) -> Path:
        first = self.paths[0].rstrip("/")
        return Path(first + ".log")


def _effective_jobs(requested: int) -> int:
    cap = os.environ.get("FLOWLAB_THREADS")
    jobs = max(1, requested)
    if cap:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"FLOWLAB_THREADS must be an integer, got {cap!r}", "FLOWLAB_THREADS") from None
    return jobs


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def _torus_grid(cfg: RunConfig) -> TorusGrid:
    if cfg["dim"] not in (2, 3):
        raise ConfigError("dim must be 2 or 3", "dim")
    return TorusGrid(cfg["dim"], cfg["N"], cfg["L"])


def run_mild(cfg: RunConfig, out: Artifacts) -> tuple[int, dict]:
    out.check([".csv", ".json"])
    grid = _torus_grid(cfg)
    name = "taylor-green" if cfg.scenario == "taylor-green" else cfg["datum"]
    kw = {"kmax": cfg["kmax"], "norm": cfg["norm"]} if name == "random" else {}
    u0 = datums.make_datum(name, grid, seed=cfg.seed, **kw)
    traj, rep = mild.picard_solve(u0, cfg["T"], cfg["dt"], tol=cfg["tol"], max_iter=cfg["max_iter"])
    k, l = cfg["smoothing_k"], cfg["smoothing_l"]
    t_s, s_vals = mild.smoothing_series(traj, k, l)
    report: dict[str, Any] = {
        "config": cfg.resolved(),
        "datum": name,
        "picard": rep.as_dict(),
        "mild_defect": rep.defect,
        "divergence_sup": mild.divergence_sup(traj),
        "smoothing": {"k": k, "l": l, "max": float(np.max(s_vals)) if s_vals.size else None,
                      "times": t_s, "values": s_vals},
        "sup_norm": [float(v) for v in np.sqrt(np.sum(traj.data ** 2, axis=1)).reshape(len(traj), -1).max(axis=1)],
    }
    if grid.dim == 2:
        report["vorticity_sup"] = mild.vorticity_sup_series(traj)
    if name == "taylor-green":
        exact = np.stack([datums.taylor_green(grid, t).components for t in traj.times])
        report["sup_error"] = float(np.max(np.abs(traj.data - exact)))
        if grid.dim == 2:
            report["vorticity_sup_error"] = float(np.max(np.abs(report["vorticity_sup"] - 2 * np.exp(-2 * traj.times))))
    every = max(1, cfg["store_every"])
    keep = sorted(set(range(0, len(traj), every)) | {len(traj) - 1})
    stored = mild.Trajectory(grid, traj.times[keep], traj.data[keep], traj.scheme, traj.dt)
    out.write(out.pick(".csv"), stored.to_csv())
    out.write(out.pick(".json"), to_json(report) + "\n")
    summary = {"converged": rep.converged, "iterations": rep.iterations, "smoothing_max": report["smoothing"]["max"]}
    if "sup_error" in report:
        summary["sup_error"] = report["sup_error"]
    if not rep.converged:
        return EXIT_SOLVER, {**summary, "message": rep.message}
    return EXIT_OK, summary


def run_kernel_table(cfg: RunConfig, out: Artifacts) -> tuple[int, dict]:
    out.check([".csv", ".json"])
    if cfg["n"] not in (2, 3):
        raise ConfigError("n must be 2 or 3", "n")
    scales = kernels.parse_scales(cfg["scales"])
    fit = kernels.verify_decay(cfg["kind"], cfg["n"], scales)
    rows = list(zip(fit.scales, fit.max_abs, fit.bound_ratio))
    text = csv_table(("scale", "max_abs", "bound_ratio"), rows, cfg)
    text = text.replace("scale,max_abs", f"# fitted_slope: {fmt(fit.slope)}\nscale,max_abs", 1)
    out.write(out.pick(".csv"), text)
    out.write(out.pick(".json"), to_json({"config": cfg.resolved(), "slope": fit.slope, "fit_residual": fit.residual,
                                          "scales": fit.scales, "max_abs": fit.max_abs,
                                          "bound_ratio": fit.bound_ratio}) + "\n")
    return EXIT_OK, {"slope": fit.slope}


def _drift(cfg: RunConfig, dim: int):
    b = cfg["drift_bound"]
    if b < 0:
        raise ConfigError("drift_bound must be non-negative", "drift_bound")
    if cfg["drift_kind"] == "constant":
        return tuple([b] + [0.0] * (dim - 1)), b

    def drift(t, *x):
        amp = b * np.cos(t) * np.sin(np.pi * x[-1])
        return np.stack([amp] + [np.zeros_like(amp)] * (dim - 1))
    return drift, b


def run_harnack(cfg: RunConfig, out: Artifacts) -> tuple[int, dict]:
    out.check([".csv", ".json"])
    lower, upper = cfg["lower"], cfg["upper"]
    if len(lower) != len(upper) or len(lower) not in (1, 2):
        raise ConfigError("lower and upper must both have 1 or 2 entries", "lower")
    dim = len(lower)
    drift, bound = _drift(cfg, dim)
    lo = lower[0] if dim == 1 else lower
    hi = upper[0] if dim == 1 else upper
    p = parabolic.ParabolicProblem(lo, hi, cfg["T"], drift=drift, drift_bound=bound)
    tau = cfg["tau"] if cfg["tau"] is not None else cfg["T"] / 2
    probe = parabolic.HarnackProbe(np.array(cfg["K"], dtype=float),
                                   (np.array(cfg["omega_lower"]), np.array(cfg["omega_upper"])), tau,
                                   delta_grid=cfg["deltas"], window_starts=cfg["window_starts"],
                                   plateau_widths=cfg["plateau_widths"])
    table = parabolic.harnack_stability_probe(p, probe, nx=cfg["nx"], dt=cfg["dt"], jobs=_effective_jobs(cfg.jobs))
    out.write(out.pick(".csv"), csv_table(("row", "delta", "epsilon"), table.rows(), cfg))
    report = {"config": cfg.resolved(), "deltas": table.deltas, "epsilon": table.epsilon,
              "constant_epsilon": table.constant_epsilon, "monotone": table.monotone(),
              "drift_bound": table.drift_bound, "mp_violations": table.mp_violations,
              "members": [{"label": m.label, "sup_K": m.sup_K, "deficit": m.deficit,
                           "mp_violations": m.mp_violations} for m in table.members]}
    out.write(out.pick(".json"), to_json(report) + "\n")
    return EXIT_OK, {"monotone": table.monotone(), "epsilon": table.epsilon, "mp_violations": table.mp_violations}


def _axisym_field_csv(name: str, grid: AxisymGrid, values: np.ndarray, t: float) -> str:
    rr, zz = grid.mesh()
    head = (f"# axisym field: name={name}, nr={grid.nr}, nz={grid.nz}, r_max={fmt(grid.r_max)}, "
            f"z_min={fmt(grid.z_min)}, z_max={fmt(grid.z_max)}, t={fmt(t)}\n")
    rows = [f"{i},{j},{fmt(rr[i, j])},{fmt(zz[i, j])},{fmt(values[i, j])}"
            for i in range(grid.nr) for j in range(grid.nz)]
    return head + "i,j,r,z,value\n" + "\n".join(rows) + "\n"


def run_axisym(cfg: RunConfig, out: Artifacts) -> tuple[int, dict]:
    out.check([".csv", ".json", "/"])
    grid = AxisymGrid(cfg["r_max"], cfg["z_min"], cfg["z_max"], cfg["nr"], cfg["nz"])
    if cfg["steps"] < 1 or cfg["every"] < 1:
        raise ConfigError("steps and every must be positive", "steps")
    init = cfg["initial"]
    if init == "swirl-bump":
        state = axisym.swirl_bump(grid, amplitude=cfg["amplitude"], eta_amplitude=cfg["eta_amplitude"])
    elif init == "vortex-ring":
        state = axisym.vortex_ring(grid, amplitude=cfg["amplitude"])
    else:
        state = axisym.rigid_rotation(grid, omega=cfg["amplitude"])
    states = axisym.run(state, cfg["dt"], cfg["steps"], cfg["every"], cfg["swirl_source"])
    mon = axisym.liouville_monitors(states, cfg["dt"])
    out.write(out.pick(".csv"), csv_table(axisym.MONITOR_COLUMNS, mon.rows, cfg))
    report = {"config": cfg.resolved(), "f_nonincreasing": mon.f_nonincreasing,
              "eta_nonincreasing": mon.eta_nonincreasing, "max_f_increase": mon.max_f_increase,
              "max_eta_increase": mon.max_eta_increase, "excluded_rings": mon.excluded_rings, "notes": mon.notes}
    out.write(out.pick(".json"), to_json(report) + "\n")
    fdir = out.pick("/")
    if fdir is not None:
        final = states[-1]
        for name, f in final.fields().items():
            out.write(fdir / f"{name}.csv", _axisym_field_csv(name, grid, f.samples, final.time))
    return EXIT_OK, {"f_nonincreasing": mon.f_nonincreasing, "eta_nonincreasing": mon.eta_nonincreasing,
                     "final_time": states[-1].time}


def _read_trace(path: str) -> blowup.BlowupTrace:
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=0, ndmin=2, dtype=str)
    if data.size and not _is_number(data[0, 0]):
        data = data[1:]
    try:
        arr = data.astype(float)
    except ValueError as exc:
        raise ConfigError(f"trace CSV is not numeric: {exc}", "trace") from None
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ConfigError("trace CSV needs columns t,h", "trace")
    return blowup.BlowupTrace.from_series(arr[:, 0], arr[:, 1])


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def run_blowup(cfg: RunConfig, out: Artifacts) -> tuple[int, dict]:
    out.check([".json", ".csv"])
    if bool(cfg["traj"]) == bool(cfg["trace"]):
        raise ConfigError("give exactly one of traj or trace", "traj")
    T = cfg["T"]
    monitors: dict[str, Any] = {}
    if cfg["traj"]:
        try:
            traj = mild.Trajectory.from_csv(Path(cfg["traj"]).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read trajectory: {exc}", "traj") from None
        keep = traj.times < T
        if keep.sum() < 2:
            raise ConfigError("fewer than 2 snapshots precede T", "T")
        traj = mild.Trajectory(traj.grid, traj.times[keep], traj.data[keep], traj.scheme, traj.dt)
        trace = blowup.trace_from(traj)
        axis = cfg["axis"]
        if len(axis) != 2:
            raise ConfigError("axis needs two coordinates", "axis")
        monitors = blowup.scale_invariant_monitors(traj, T, axis).as_dict()
    else:
        try:
            trace = _read_trace(cfg["trace"])
        except OSError as exc:
            raise ConfigError(f"cannot read trace: {exc}", "trace") from None
        monitors = {"times": trace.times, "sup_sqrt_T_minus_t_u": trace.h * np.sqrt(T - trace.times)}
    cls = blowup.classify(trace, T, cfg["window"], cfg["slope_tol"])
    result = {**cls.as_dict(), "config": cfg.resolved(), "monitors": monitors, "T": T}
    out.write(out.pick(".json"), to_json(result) + "\n")
    out.write(out.pick(".csv"), csv_table(("t", "h", "H"), list(zip(trace.times, trace.h, trace.H)), cfg))
    return EXIT_OK, {"type": cls.kind, "C_fit": cls.C_fit, "leray_rate_inf": cls.leray_rate_inf}


RUNNERS: dict[str, tuple[Callable[[RunConfig, Artifacts], tuple[int, dict]], tuple[str, ...]]] = {
    "taylor-green": (run_mild, ("traj.csv", "report.json")),
    "mild-solve": (run_mild, ("traj.csv", "report.json")),
    "kernel-table": (run_kernel_table, ("kernel_table.csv",)),
    "harnack-probe": (run_harnack, ("eps_table.csv",)),
    "axisym-run": (run_axisym, ("monitors.csv", "fields/")),
    "blowup-analyze": (run_blowup, ("class.json",)),
}


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print usage and exit 2 with plain text
        raise ConfigError(message)


def _split_params(tokens: Sequence[str]) -> dict[str, str]:
    """``key=value``, ``--key value`` and ``--key=value`` tokens -> raw map."""
    raw: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.startswith("--"):
            body = tok[2:]
            if "=" in body:
                key, value = body.split("=", 1)
            elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
                key, value = body, tokens[i + 1]
                i += 1
            else:
                raise ConfigError(f"option {tok} needs a value", body)
        elif "=" in tok:
            key, value = tok.split("=", 1)
        else:
            raise ConfigError(f"unexpected argument {tok!r}; parameters are key=value", tok)
        key = key.replace("-", "_")
        if key in raw:
            raise ConfigError(f"parameter {key!r} given twice", key)
        raw[key] = value
        i += 1
    return raw


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line parameters override it")
    p.add_argument("--emit", default="", help="comma-separated output paths (a trailing / names a directory)")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--jobs", type=int, default=1, help="workers for independent sweep members")
    p.add_argument("--quiet", action="store_true", help="suppress the JSON summary on stdout")
    p.add_argument("--describe", action="store_true", help="print the documented keys and defaults, then exit")


def _error(exc: BaseException, code: int) -> int:
    diag = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    key = getattr(exc, "key", None)
    if key is not None:
        diag["key"] = key
    residual = getattr(exc, "residual", None)
    if residual is not None:
        diag["residual"] = residual
    print(to_json(diag), file=sys.stderr)
    return code


def _setup_logging(quiet: bool) -> None:
    root = logging.getLogger("flowlab")
    root.setLevel(logging.INFO)
    if not any(getattr(h, "_flowlab", False) for h in root.handlers):
        h = logging.StreamHandler(sys.stderr)
        h._flowlab = True
        root.addHandler(h)
    for h in root.handlers:
        if getattr(h, "_flowlab", False):
            h.setLevel(logging.ERROR if quiet else logging.WARNING)


def run_scenario(scenario: str, argv: Sequence[str]) -> int:
    parser = _Parser(prog=scenario, add_help=True)
    _common_flags(parser)
    try:
        args, rest = parser.parse_known_args(list(argv))
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}", "scenario")
        if args.describe:
            print(describe(scenario))
            return EXIT_OK
        raw: dict[str, str] = {}
        if args.config:
            try:
                raw.update(parse_text(Path(args.config).read_text(), args.config))
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}", "config") from None
        raw.update(_split_params(rest))
        cfg = resolve(scenario, raw, args.seed)
        cfg.emit = tuple(p.strip() for p in args.emit.split(",") if p.strip())
        cfg.jobs = args.jobs
        cfg.quiet = args.quiet
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1", "jobs")
    except ValidationError as exc:
        return _error(exc, EXIT_INVALID)
    _setup_logging(cfg.quiet)
    runner, defaults = RUNNERS[scenario]
    out = Artifacts(cfg.emit, defaults)
    log = None
    if out.paths:
        try:
            out.log_path.parent.mkdir(parents=True, exist_ok=True)
            log = logging.FileHandler(out.log_path, mode="w")
        except OSError as exc:
            return _error(ConfigError(f"cannot write to {out.log_path.parent}: {exc}", "emit"), EXIT_INVALID)
    if log is not None:
        log.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        log.setLevel(logging.INFO)
        logging.getLogger("flowlab").addHandler(log)
    start = time.perf_counter()
    try:
        logger.info("flowlab %s run %s with %s", __version__, scenario, cfg.resolved())
        code, summary = runner(cfg, out)
    except ValidationError as exc:
        logger.info("invalid input: %s", exc)
        return _error(exc, EXIT_INVALID)
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.info("solver failure: %s", exc)
        return _error(exc, EXIT_SOLVER)
    finally:
        if log is not None:
            logger.info("finished in %.3f s", time.perf_counter() - start)
            logging.getLogger("flowlab").removeHandler(log)
            log.close()
    status = "ok" if code == EXIT_OK else "solver-failure"
    if not cfg.quiet:
        print(to_json({"status": status, "exit_code": code, "scenario": scenario,
                       "artifacts": out.written, "summary": summary}))
    elif code != EXIT_OK:
        print(to_json({"status": status, "exit_code": code, "summary": summary}), file=sys.stderr)
    return code


def verify(argv: Sequence[str]) -> int:
    parser = _Parser(prog="flowlab verify")
    parser.add_argument("suite")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--emit", default="", help="optional JSON summary path")
    try:
        args = parser.parse_args(list(argv))
        if args.suite not in acceptance.SUITES:
            raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(acceptance.SUITES)}", "suite")
    except ValidationError as exc:
        return _error(exc, EXIT_INVALID)
    _setup_logging(True)
    results = []
    for n in acceptance.SUITES[args.suite]:
        res = acceptance.run_criterion(n)
        results.append(res)
        if not args.quiet:
            print(res.line(), flush=True)
    failed = [r.number for r in results if not r.passed]
    if not args.quiet:
        print(f"{len(results) - len(failed)}/{len(results)} criteria passed in suite {args.suite}")
    if args.emit:
        Path(args.emit).write_text(to_json({"suite": args.suite, "failed": failed, "results": [
            {"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail} for r in results]}) + "\n")
    return EXIT_FAILED if failed else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    usage = ("usage: flowlab run <scenario> [key=value ...] [--config F] [--emit A,B] [--seed S] [--jobs J] [--quiet]\n"
             "       flowlab verify <suite>\n"
             f"scenarios: {', '.join(SCENARIOS)}\n"
             f"suites: {', '.join(acceptance.SUITES)}")
    if not argv or argv[0] in ("-h", "--help"):
        print(usage)
        return EXIT_OK if argv else EXIT_INVALID
    if argv[0] == "--version":
        print(__version__)
        return EXIT_OK
    cmd, rest = argv[0], argv[1:]
    if cmd == "run":
        if not rest or rest[0].startswith("-"):
            return _error(ConfigError("run needs a scenario", "scenario"), EXIT_INVALID)
        return run_scenario(rest[0], rest[1:])
    if cmd == "verify":
        return verify(rest)
    if cmd in SCENARIOS:
        return run_scenario(cmd, rest)
    return _error(ConfigError(f"unknown command {cmd!r}; use run or verify", "command"), EXIT_INVALID)


def _entry(scenario: str) -> Callable[[], None]:
    def entry() -> None:
        sys.exit(run_scenario(scenario, sys.argv[1:]))
    return entry


mild_solve_main = _entry("mild-solve")
kernel_table_main = _entry("kernel-table")
harnack_probe_main = _entry("harnack-probe")
axisym_run_main = _entry("axisym-run")
blowup_analyze_main = _entry("blowup-analyze")


if __name__ == "__main__":
    sys.exit(main())
