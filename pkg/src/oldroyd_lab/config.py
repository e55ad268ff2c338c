"""Run configuration: a flat ``section.key = value`` text format.

Grammar
-------
* One assignment per line: ``section.key = value``.  Whitespace around
  ``=`` and at line ends is ignored; ``#`` starts a comment; blank lines
  are skipped.
* Values: integers, reals (``1e-2``, and products with ``pi`` such as
  ``2*pi``), booleans (``true``/``false``), bare strings, and
  comma-separated lists of those.
* Unknown keys, duplicate keys, type mismatches and range violations are
  all collected and reported together, each with its line number.

:func:`echo` writes every key (defaults filled) in canonical form;
``echo(parse_config(echo(c))) == echo(c)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any

from .oldroyd_dynamics import InitialDataSpec
from .params import ModelParams


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


def _parse_real(s: str) -> float:
    val = 1.0
    for part in s.split("*"):
        part = part.strip()
        if part == "pi":
            val *= math.pi
        else:
            val *= float(part)
    return val


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_int(s: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", s):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(s)


def _list(item):
    def parse(s: str):
        parts = [p.strip() for p in s.split(",")] if s.strip() else []
        return tuple(item(p) for p in parts)

    return parse


def _grid_spec(s: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)\^(\d+)", s)
    if not m:
        raise ValueError(f"expected N^d, got {s!r}")
    return int(m.group(1)), int(m.group(2))


def _besov_spec(s: str) -> tuple[str, float, float, float]:
    parts = s.split(":")
    if len(parts) != 4 or parts[0] not in ("u", "tau"):
        raise ValueError(f"expected field:s:p:r with field u or tau, got {s!r}")
    return (parts[0],) + tuple(_parse_real(p) if p != "inf" else math.inf for p in parts[1:])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            if isinstance(v[0][0], str):
                return ", ".join(":".join([x[0]] + [_fmt(y) for y in x[1:]]) for x in v)
            return ", ".join(f"{a}^{b}" for a, b in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# key -> (parser, default)
SCHEMA: dict[str, tuple[Any, Any]] = {
    "grid.d": (_parse_int, 2),
    "grid.N": (_parse_int, 64),
    "grid.L": (_parse_real, 2 * math.pi),
    "params.mu": (_parse_real, 1.0),
    "params.mu1": (_parse_real, 1.0),
    "params.mu2": (_parse_real, 1.0),
    "params.a": (_parse_real, 1.0),
    "params.b": (_parse_real, 0.0),
    "time.dt": (_parse_real, 0.02),
    "time.T": (_parse_real, 1.0),
    "time.output_every": (_parse_real, 0.2),
    "time.checkpoint_every": (_parse_real, 0.0),
    "time.nonlinear": (_parse_bool, True),
    "init.seed": (_parse_int, 0),
    "init.eps": (_parse_real, 1e-2),
    "init.sigma": (_parse_real, 0.5),
    "init.eps0": (_parse_real, 0.1),
    "init.cutoff": (_parse_real, 3.0),
    "monitors.k": (_list(_parse_real), (0.0, 1.5)),
    "monitors.besov": (_list(_besov_spec), ()),
    "monitors.cancel_k": (_list(_parse_real), (0.0, 1.0, 2.5)),
    "monitors.weight": (_parse_real, 1.0),
    "monitors.lyapunov_tol": (_parse_real, 1e-9),
    "monitors.integrated_tol": (_parse_real, 1e-6),
    "monitors.functional_bound": (_parse_real, 5.0),
    "linear.decoupled": (_parse_bool, False),
    "linear.t_min": (_parse_real, 1.0),
    "linear.t_max": (_parse_real, 1000.0),
    "linear.n_times": (_parse_int, 41),
    "linear.components": (_list(str), ("u", "tau")),
    "linear.stress_amplitude": (_parse_real, 1.0),
    "linear.slope_tol": (_parse_real, 0.08),
    "fit.window": (_list(_parse_real), (10.0, 1000.0)),
    "invariants.exact_grids": (_list(_grid_spec), ((64, 2), (32, 3))),
    "invariants.sweep_N": (_list(_parse_int), (32, 64)),
    "invariants.sweep_d": (_parse_int, 2),
    "invariants.n_sweep": (_parse_int, 200),
    "invariants.n_interp": (_parse_int, 1000),
    "invariants.n_cancel": (_parse_int, 50),
    "invariants.tamper_partition": (_parse_bool, False),
    "output.dir": (str, "out"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    @property
    def params(self) -> ModelParams:
        v = self.values
        return ModelParams(v["params.mu"], v["params.mu1"], v["params.mu2"], v["params.a"], v["params.b"])

    @property
    def linear_params(self) -> ModelParams:
        """Parameters for the linear analysis; ``linear.decoupled`` sets ``mu1 = 0``."""
        p = self.params
        return p.replace(mu1=0.0, strict=False) if self.values["linear.decoupled"] else p

    @property
    def init(self) -> InitialDataSpec:
        v = self.values
        return InitialDataSpec(v["init.seed"], v["init.eps"], v["init.sigma"], v["init.eps0"], v["init.cutoff"])

    def with_overrides(self, overrides: dict) -> "RunConfig":
        unknown = [k for k in overrides if k not in SCHEMA]
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        vals = dict(self.values)
        vals.update(overrides)
        errs = _validate(vals, {})
        if errs:
            raise ConfigError(errs)
        return RunConfig(vals)


def _validate(v: dict, line_of: dict) -> list[str]:
    errs = []

    def err(key, msg):
        ln = line_of.get(key)
        errs.append(f"line {ln}: {key}: {msg}" if ln else f"{key}: {msg}")

    d = v["grid.d"]
    if d not in (2, 3):
        err("grid.d", f"d must be 2 or 3, got {d}")
    N = v["grid.N"]
    if N < 8 or N % 2:
        err("grid.N", f"N must be even and at least 8, got {N}")
    if not v["grid.L"] > 0:
        err("grid.L", "L must be positive")
    for name in ("mu", "mu1", "mu2", "a"):
        if not v[f"params.{name}"] > 0:
            err(f"params.{name}", f"{name} must be positive")
    if not -1 <= v["params.b"] <= 1:
        err("params.b", f"b must satisfy b ∈ [−1, 1], got {v['params.b']}")
    if not v["time.dt"] > 0:
        err("time.dt", "dt must be positive")
    for key in ("time.T", "time.checkpoint_every"):
        if v[key] < 0:
            err(key, "must be nonnegative")
    if not v["time.output_every"] > 0:
        err("time.output_every", "must be positive")
    if v["init.eps"] < 0:
        err("init.eps", "eps must be nonnegative")
    if d in (2, 3) and not 0 <= v["init.sigma"] < d / 2:
        err("init.sigma", f"need 0 ≤ σ < d/2 = {d / 2:g}, got {v['init.sigma']}")
    if not v["init.eps0"] > 0:
        err("init.eps0", "eps0 must be positive")
    if not v["init.cutoff"] > 0:
        err("init.cutoff", "cutoff must be positive")
    s_max = d / 2 + 2
    bad = [k for k in v["monitors.k"] if not 0 <= k <= s_max]
    if bad:
        err("monitors.k", f"orders {bad} outside [0, {s_max:g}]")
    if not v["monitors.k"]:
        err("monitors.k", "at least one order is required")
    for comp, s, p, r in v["monitors.besov"]:
        if not (p >= 1 and r >= 1):
            err("monitors.besov", f"exponents of {comp}:{s:g} must be in [1, inf]")
    if not v["linear.t_max"] > v["linear.t_min"] > 0:
        err("linear.t_max", "need 0 < t_min < t_max")
    if v["linear.n_times"] < 1:
        err("linear.n_times", "need at least one time")
    for c in v["linear.components"]:
        if c not in ("u", "tau"):
            err("linear.components", f"unknown component {c!r}")
    w = v["fit.window"]
    if len(w) != 2 or not w[0] < w[1]:
        err("fit.window", "expected two increasing times t0, t1")
    for n, dd in v["invariants.exact_grids"]:
        if dd not in (2, 3) or n < 8 or n % 2:
            err("invariants.exact_grids", f"invalid grid {n}^{dd}")
    if v["invariants.sweep_d"] not in (2, 3):
        err("invariants.sweep_d", "d must be 2 or 3")
    for n in v["invariants.sweep_N"]:
        if n < 8 or n % 2:
            err("invariants.sweep_N", f"invalid N={n}")
    for key in ("invariants.n_sweep", "invariants.n_interp", "invariants.n_cancel"):
        if v[key] < 1:
            err(key, "must be at least 1")
    return errs


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    values = {k: v[1] for k, v in SCHEMA.items()}
    line_of: dict[str, int] = {}
    errs = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {ln}: expected 'section.key = value', got {raw.strip()!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            errs.append(f"line {ln}: unknown key {key!r}")
            continue
        if key in line_of:
            errs.append(f"line {ln}: duplicate key {key!r} (first set on line {line_of[key]})")
            continue
        line_of[key] = ln
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except (ValueError, TypeError) as exc:
            errs.append(f"line {ln}: {key}: type mismatch: {exc}")
    # keys that failed to parse keep their defaults, so range checks still apply to the rest
    errs += _validate(values, line_of)
    if errs:
        raise ConfigError(errs)
    return RunConfig(values)


def echo(cfg: RunConfig) -> str:
    lines = []
    section = None
    for key in SCHEMA:
        sec = key.split(".")[0]
        if sec != section:
            if section is not None:
                lines.append("")
            section = sec
        lines.append(f"{key} = {_fmt(cfg.values[key])}".rstrip())
    return "\n".join(lines) + "\n"


def default_config() -> RunConfig:
    return RunConfig()
