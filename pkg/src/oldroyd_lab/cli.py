"""Command line: ``oldroyd-lab {simulate, linear-decay, check-invariants, fit}``.

Exit status: 0 when every hard check passes, 2 when only soft
(statistical) checks fail, 1 on errors or hard-check failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from . import grid_spectral as gs
from . import monitors as mon
from . import oldroyd_dynamics as od
from . import suites
from .config import ConfigError, RunConfig, default_config, echo, parse_config
from .grid_spectral import Grid
from .linear_symbol import DecayProfile, QuadratureError, decay_series
from .series import NormSeries

log = logging.getLogger("oldroyd_lab")

EXIT_OK, EXIT_ERROR, EXIT_SOFT = 0, 1, 2


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def exit_status(verdicts, error: bool = False) -> int:
    if error or any(not v.passed and not v.soft for v in verdicts):
        return EXIT_ERROR
    if any(not v.passed for v in verdicts):
        return EXIT_SOFT
    return EXIT_OK


# ------------------------------------------------------------------ simulate


def simulation_monitors(cfg: RunConfig, grid: Grid):
    v = cfg.values
    sigma = v["init.sigma"]
    d = grid.d
    pairs = [(k, sigma) for k in v["monitors.k"]] if sigma > 0 else []
    return mon.make_recorder(
        cfg.params,
        grid,
        ks=v["monitors.k"],
        sigma=sigma if sigma > 0 else None,
        cancel_ks=v["monitors.cancel_k"],
        interp_pairs=pairs,
        besov=v["monitors.besov"],
    ), (sigma if 0 < sigma < d / 2 else None)


def evaluate_run(cfg: RunConfig, series: NormSeries, sigma) -> list[mon.Verdict]:
    """Hard verdicts on a recorded trajectory."""
    v = cfg.values
    out = []
    if not len(series):
        return out
    for k in v["monitors.k"]:
        out.append(mon.lyapunov_check(series, k, eps=v["init.eps"], tol=v["monitors.lyapunov_tol"], integrated_tol=v["monitors.integrated_tol"]))
    if sigma is not None:
        out.append(mon.negative_sobolev_monitor(series, sigma, v["grid.d"]))
        out.append(mon.threshold_check(series, "interp_ratio_max", 1 + 1e-12, "interpolation_live"))
    E = mon.besov_functional_E(series, v["params.a"], w=v["monitors.weight"])
    out.append(mon.besov_functional_verdict(E, v["monitors.functional_bound"]))
    out.append(mon.threshold_check(series, "cancel_max", 1e-10, "cancellation_live"))
    out.append(mon.threshold_check(series, "div_u", 1e-10, "divergence_free"))
    return out


def run_simulation(cfg: RunConfig, out: Path) -> tuple[int, list[mon.Verdict], od.Trajectory | None]:
    v = cfg.values
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(echo(cfg))
    g = Grid(v["grid.d"], v["grid.N"], v["grid.L"])
    u0, tau0 = od.make_initial_data(cfg.init, g)
    state0 = od.SimulationState(u0, tau0, 0.0, cfg.params)
    hook, sigma = simulation_monitors(cfg, g)
    ck_dir = out / "checkpoints"
    ck_every = v["time.checkpoint_every"] or None

    def on_ck(state):
        ck_dir.mkdir(exist_ok=True)
        checkpoint.save(state, ck_dir / f"t{state.t:012.6f}.oldb")

    orders = v["monitors.k"]
    error = None
    traj = None
    try:
        traj = od.simulate(
            state0,
            v["time.dt"],
            v["time.T"],
            hooks=[hook],
            output_every=v["time.output_every"],
            nonlinear=v["time.nonlinear"],
            dissipation_orders=orders,
            checkpoint_every=ck_every,
            on_checkpoint=on_ck,
        )
    except od.SimulationError as exc:
        traj = exc.trajectory
        error = str(exc)
    except ValueError as exc:
        error = f"ValueError: {exc}"
    series = traj.series if traj is not None else NormSeries()
    if not series.labels:
        # no samples: header only, with the labels a run would produce
        series.labels = list(hook(state0)) + [f"intD_H{k:g}" for k in orders]
    series.to_csv(out / "norms.csv")
    verdicts = evaluate_run(cfg, series, sigma) if error is None else []
    if error is not None:
        verdicts.append(mon.Verdict("integration", False, residual=None, details={"error": error, "eps": v["init.eps"], "dt": v["time.dt"]}))
    if traj is not None:
        checkpoint.save(traj.state, out / "final.oldb")
        drift = np.array(traj.drift) if traj.drift else np.zeros((0, 2))
        worst_drift = [float(drift[:, 0].max()), float(drift[:, 1].max())] if len(drift) else [0.0, 0.0]
    else:
        worst_drift = [0.0, 0.0]
    code = exit_status(verdicts, error is not None)
    write_json(
        out / "verdicts.json",
        {
            "command": "simulate",
            "exit": code,
            "eps": v["init.eps"],
            "max_step_drift": {"divergence": worst_drift[0], "hermitian": worst_drift[1]},
            "verdicts": [x.to_json() for x in verdicts],
        },
    )
    return code, verdicts, traj


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    code, verdicts, _ = run_simulation(cfg, out)
    for x in verdicts:
        log.info("%s: %s", x.check, "pass" if x.passed else "FAIL")
    return code


# -------------------------------------------------------------- linear decay


def decay_times(cfg: RunConfig) -> np.ndarray:
    v = cfg.values
    n = v["linear.n_times"]
    if n == 1:
        return np.array([v["linear.t_min"]])
    return np.geomspace(v["linear.t_min"], v["linear.t_max"], n)


def cmd_linear_decay(cfg: RunConfig, out: Path) -> int:
    v = cfg.values
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(echo(cfg))
    params = cfg.linear_params
    times = decay_times(cfg)
    window = tuple(v["fit.window"])
    entries = []
    failed = False
    slopes = {}
    for comp in v["linear.components"]:
        for k in v["monitors.k"]:
            prof = DecayProfile(v["grid.d"], v["init.sigma"], v["init.eps0"], k, comp, stress_amplitude=v["linear.stress_amplitude"])
            label = f"{comp}_H{k:g}"
            entry = {"component": comp, "k": k, "predicted": prof.predicted_slope}
            try:
                vals = decay_series(prof, times, params)
            except QuadratureError as exc:
                entry.update(error=str(exc), residual=exc.residual, **{"pass": False})
                entries.append(entry)
                failed = True
                continue
            s = NormSeries()
            for t, y in zip(times, vals):
                s.append(t, {label: y})
            s.to_csv(out / f"linear_{comp}_k{k:g}.csv")
            try:
                fit = mon.fit_power_law(times, vals, window)
            except ValueError as exc:
                entry.update(error=str(exc), **{"pass": False})
                entries.append(entry)
                failed = True
                continue
            slopes[(comp, k)] = fit.slope
            ok = abs(fit.slope - prof.predicted_slope) <= v["linear.slope_tol"] and fit.algebraic
            entry.update(fit=fit.to_json(), **{"pass": bool(ok)})
            entries.append(entry)
    gaps = []
    for k in v["monitors.k"]:
        if ("u", k) in slopes and ("tau", k) in slopes:
            gap = slopes[("tau", k)] - slopes[("u", k)]
            gaps.append({"k": k, "tau_minus_u": gap, "pass": abs(gap + 0.5) <= v["linear.slope_tol"]})
    doc = {"command": "linear-decay", "params": params.as_dict(), "window": list(window), "series": entries, "gaps": gaps}
    hard_fail = failed or any(not e["pass"] for e in entries) or any(not g_["pass"] for g_ in gaps)
    doc["exit"] = EXIT_ERROR if hard_fail else EXIT_OK
    write_json(out / "linear_decay.json", doc)
    for e in entries:
        if "error" in e:
            log.error("%s k=%g: %s", e["component"], e["k"], e["error"])
    return doc["exit"]


# ---------------------------------------------------------- check-invariants


def cmd_check_invariants(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    verdicts = suites.run_all(cfg)
    code = exit_status(verdicts)
    write_json(out / "invariants.json", {"command": "check-invariants", "exit": code, "seed": cfg["init.seed"], "verdicts": [v.to_json() for v in verdicts]})
    for v in verdicts:
        log.info("%s: %s", v.check, "pass" if v.passed else ("soft fail" if v.soft else "FAIL"))
    return code


# ---------------------------------------------------------------------- fit


def cmd_fit(csv_path: Path, label: str, window, out: Path) -> int:
    series = NormSeries.from_csv(csv_path)
    fit = mon.fit_decay(series, label, tuple(window))
    out.mkdir(parents=True, exist_ok=True)
    doc = {"check": f"fit_{label}", "window": list(fit.window), "slope": fit.slope, "pass": fit.algebraic, "details": fit.to_json()}
    write_json(out / f"fit_{label}.json", doc)
    print(json.dumps(doc, sort_keys=True, default=_json_default))
    return EXIT_OK


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oldroyd-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "linear-decay", "check-invariants", "fit"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="config file (defaults apply when omitted)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override init.seed")
        p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        p.add_argument("--repeat", type=int, default=1, help="run R times with seeds seed, seed+1, ...")
        if name == "fit":
            p.add_argument("--csv", type=Path, required=True)
            p.add_argument("--label", required=True)
            p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"), default=None)
    return ap


def load_config(path: Path | None) -> RunConfig:
    if path is None:
        return default_config()
    return parse_config(path.read_text(encoding="utf-8"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("oldroyd_lab.oldroyd_dynamics").setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides({"init.seed": args.seed})
    except (ConfigError, OSError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    if args.threads < 1 or args.repeat < 1:
        print("--threads and --repeat must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    gs.set_fft_workers(args.threads)
    out = args.out if args.out is not None else Path(cfg["output.dir"])
    commands = {"simulate": cmd_simulate, "linear-decay": cmd_linear_decay, "check-invariants": cmd_check_invariants}
    try:
        if args.command == "fit":
            window = args.window if args.window is not None else cfg["fit.window"]
            return cmd_fit(args.csv, args.label, window, out)
        codes = []
        base = cfg["init.seed"]
        for i in range(args.repeat):
            c = cfg.with_overrides({"init.seed": base + i}) if args.repeat > 1 else cfg
            target = out / f"run_{i:03d}" if args.repeat > 1 else out
            codes.append(commands[args.command](c, target))
        if EXIT_ERROR in codes:
            return EXIT_ERROR
        return EXIT_SOFT if EXIT_SOFT in codes else EXIT_OK
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
