"""Run configuration: flat ``key = value`` text with a typed schema per scenario.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Values on the command line (``key=value`` or ``--key value``) override the
file, which overrides the defaults.  Unknown keys and malformed values are
rejected with a :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ValidationError


class ConfigError(ValidationError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("pi", "2pi"):
        return math.pi * (2.0 if t == "2pi" else 1.0)
    v = float(t)
    if not math.isfinite(v):
        raise ValueError("non-finite")
    return v


def _int(text: str) -> int:
    return int(text.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _auto_float(text: str) -> float | None:
    return None if text.strip().lower() == "auto" else _float(text)


def _float_list(text: str) -> tuple[float, ...]:
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(_float(s) for s in items)


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    """``"x1,y1; x2,y2"`` -> tuple of points."""
    pts = tuple(tuple(_float(c) for c in p.split(",")) for p in text.split(";") if p.strip())
    if not pts or len({len(p) for p in pts}) != 1:
        raise ValueError("points must be non-empty and share one dimension")
    return pts


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    parse.__name__ = "one of " + "|".join(options)
    return parse


def _string(text: str) -> str:
    return text.strip()


def _render(value: Any) -> Any:
    """Config values as they appear in emitted JSON."""
    if isinstance(value, tuple):
        return [_render(v) for v in value]
    return value


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


_COMMON = {
    "seed": Key(_int, 0, "random seed"),
}

_TORUS = {
    "N": Key(_int, 64, "grid points per direction"),
    "dim": Key(_int, 2, "space dimension (2 or 3)"),
    "L": Key(_float, 2 * math.pi, "torus period"),
    "T": Key(_float, 1.0, "time horizon"),
    "dt": Key(_auto_float, None, "time step or 'auto'"),
    "tol": Key(_float, 1e-10, "Picard increment tolerance"),
    "max_iter": Key(_int, 50, "Picard iteration cap"),
    "store_every": Key(_int, 1, "write every n-th snapshot to the trajectory CSV"),
    "smoothing_k": Key(_int, 1, "derivative order k of the smoothing diagnostic"),
    "smoothing_l": Key(_int, 0, "time-derivative order l of the smoothing diagnostic"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "taylor-green": {**_COMMON, **_TORUS},
    "mild-solve": {
        **_COMMON, **_TORUS,
        "datum": Key(_choice("taylor-green", "random", "erf-profile", "zero"), "taylor-green", "initial datum"),
        "kmax": Key(_float, 2.0, "band limit of the random datum"),
        "norm": Key(_float, 1.0, "sup norm of the random datum"),
    },
    "kernel-table": {
        **_COMMON,
        "kind": Key(_choice("Gamma", "Kij", "Kijk"), "Kijk", "kernel family"),
        "n": Key(_int, 3, "space dimension (2 or 3)"),
        "scales": Key(_string, "1:100:20", "probe scales lo:hi:count (geometric)"),
    },
    "harnack-probe": {
        **_COMMON,
        "lower": Key(_float_list, (-1.0,), "domain lower corner"),
        "upper": Key(_float_list, (1.0,), "domain upper corner"),
        "T": Key(_float, 0.5, "time horizon"),
        "tau": Key(_auto_float, None, "start of the probe window or 'auto' (T/2)"),
        "K": Key(_points, ((0.0,),), "probe points, ';'-separated"),
        "omega_lower": Key(_float_list, (-0.5,), "inner box lower corner"),
        "omega_upper": Key(_float_list, (0.5,), "inner box upper corner"),
        "drift_kind": Key(_choice("constant", "oscillating"), "constant", "constant vector or x-t oscillating drift"),
        "drift_bound": Key(_float, 0.0, "sup of the drift magnitude"),
        "deltas": Key(_float_list, (0.5, 0.2, 0.1, 0.05), "delta values"),
        "nx": Key(_int, 81, "grid points per direction"),
        "dt": Key(_auto_float, None, "time step or 'auto'"),
        "window_starts": Key(_int, 12, "number of boundary-window start times in the probe family"),
        "plateau_widths": Key(_int, 8, "number of initial plateau widths in the probe family"),
    },
    "axisym-run": {
        **_COMMON,
        "r_max": Key(_float, 1.0, "outer radius"),
        "z_min": Key(_float, -1.0, "lower z"),
        "z_max": Key(_float, 1.0, "upper z"),
        "nr": Key(_int, 33, "radial nodes including the axis"),
        "nz": Key(_int, 65, "axial nodes"),
        "dt": Key(_float, 1e-3, "time step"),
        "steps": Key(_int, 200, "number of steps"),
        "every": Key(_int, 10, "monitor every n-th step"),
        "initial": Key(_choice("swirl-bump", "vortex-ring", "rigid-rotation"), "swirl-bump", "initial state"),
        "amplitude": Key(_float, 5.0, "amplitude of f (swirl-bump, rigid-rotation) or eta (vortex-ring)"),
        "eta_amplitude": Key(_float, 0.0, "eta amplitude added to the swirl bump"),
        "swirl_source": Key(_bool, True, "include the swirl source in the eta equation"),
    },
    "blowup-analyze": {
        **_COMMON,
        "traj": Key(_string, "", "trajectory CSV written by mild-solve"),
        "trace": Key(_string, "", "alternative input: CSV with columns t,h"),
        "T": Key(_float, 1.0, "candidate blow-up time"),
        "window": Key(_int, 16, "samples used by the classifier"),
        "slope_tol": Key(_float, 0.05, "exponent tolerance of the classifier"),
        "axis": Key(_float_list, (0.0, 0.0), "axis point for the rho|u| monitor (3D)"),
    },
}

SCENARIOS = tuple(SCHEMAS)


@dataclass
class RunConfig:
    scenario: str
    params: dict[str, Any]
    seed: int = 0
    emit: tuple[str, ...] = ()
    jobs: int = 1
    quiet: bool = False
    sources: dict[str, str] = field(default_factory=dict)

    def resolved(self) -> dict[str, Any]:
        """Everything that determines the outputs (no paths, no worker count)."""
        return {"scenario": self.scenario, "seed": self.seed,
                "parameters": {k: _render(v) for k, v in sorted(self.params.items())}}

    def __getitem__(self, key: str) -> Any:
        return self.params[key]


def parse_text(text: str, origin: str = "config") -> dict[str, str]:
    """``key = value`` lines -> raw string map; duplicate keys are errors."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}", key)
        out[key] = value
    return out


def resolve(scenario: str, raw: dict[str, str], seed: int | None = None) -> RunConfig:
    """Validate raw strings against the scenario schema and fill in defaults."""
    if scenario not in SCHEMAS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}", "scenario")
    schema = SCHEMAS[scenario]
    params = {k: key.default for k, key in schema.items()}
    sources = {k: "default" for k in schema}
    for k, text in raw.items():
        if k not in schema:
            raise ConfigError(f"unknown key {k!r} for scenario {scenario}", k)
        try:
            params[k] = schema[k].parse(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value {text!r} for key {k!r}: {exc}", k) from None
        sources[k] = "given"
    if seed is not None:
        params["seed"] = seed
        sources["seed"] = "given"
    seed_value = params.pop("seed")
    sources.pop("seed")
    return RunConfig(scenario, params, seed_value, sources=sources)


def describe(scenario: str) -> str:
    """Documented key listing, in config-file syntax."""
    lines = [f"# {scenario}"]
    for k, key in SCHEMAS[scenario].items():
        default = key.default
        if isinstance(default, tuple):
            default = ";".join(",".join(f"{c:g}" for c in p) for p in default) if default and isinstance(default[0], tuple) \
                else ",".join(f"{c:g}" for c in default)
        elif default is None:
            default = "auto"
        lines.append(f"{k} = {default}    # {key.doc}")
    return "\n".join(lines)
