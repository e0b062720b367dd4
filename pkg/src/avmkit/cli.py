"""Command-line driver: runs the three layers and writes CSV data files.

Subcommands: timeseries | scan | pc-curve | abm | compare. Figures are
produced as data, not images; every file has a fixed header and fixed
float formatting (17 significant digits) so identical configurations give
byte-identical output. The resolved configuration is echoed to a sidecar
<out>.meta.json. Precedence: command-line flags override config-file
values override defaults.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import analytic, momentode, sim
from .momentode import NumericalFailure, OdeConfig
from .series import ensemble_mean
from .sim import SimConfig

PLATEAU_RATE = 1e-6
PC_BISECTION_TOL = 1e-2
PC_GAMMA_THRESHOLD = 1e-3

_DEFAULTS = {
    "timeseries": dict(kappa=4.0, p=0.2, p_range=None, k_max=60, dt=0.01,
                       t_end=30.0, mode="both", sample_interval=0.25,
                       out="timeseries.csv"),
    "scan": dict(kappa=4.0, p_range="0:0.95:0.05", k_max=60, dt=0.01,
                 t_end=300.0, mode="pde-matched", out="scan.csv"),
    "pc-curve": dict(kappa_range="2:6:1", k_max=60, dt=0.01, t_end=300.0,
                     mode="pde-matched", out="pc_curve.csv"),
    "abm": dict(kappa=4.0, p=0.2, n=10000, t_end=100.0, seed=1,
                replicates=1, sample_interval=0.25, workers=1,
                out="abm.csv"),
    "compare": dict(kappa=4.0, p=0.2, n=10000, k_max=60, dt=0.01,
                    t_end=100.0, seed=1, replicates=4, sample_interval=0.25,
                    workers=1, out="compare.csv"),
}


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_meta(out_path, command, cfg):
    meta = {"command": command}
    meta.update({k: cfg[k] for k in sorted(cfg)})
    with open(out_path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_range(spec):
    """START:STOP:STEP inclusive of STOP up to rounding."""
    if isinstance(spec, (list, tuple)):
        start, stop, step_size = (float(v) for v in spec)
    else:
        parts = str(spec).split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be START:STOP:STEP, got {spec!r}")
        start, stop, step_size = (float(v) for v in parts)
    if step_size <= 0:
        raise ValueError("range step must be positive")
    if stop < start:
        raise ValueError("range stop must be >= start")
    count = int(math.floor((stop - start) / step_size + 1e-9)) + 1
    return [start + i * step_size for i in range(count)]


def _resolve_config(command, args):
    cfg = dict(_DEFAULTS[command])
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _p_values(cfg):
    if cfg.get("p_range"):
        return _parse_range(cfg["p_range"])
    return [float(cfg["p"])]


def _ode_modes(mode):
    if mode == "both":
        return ["full", "pde-matched"]
    if mode in momentode.MODES:
        return [mode]
    raise ValueError(f"mode must be full, pde-matched, or both; got {mode!r}")


def _integrate(cfg, p, mode, kappa=None, sample_every=1):
    config = OdeConfig(p=p, k_max=int(cfg["k_max"]), dt=float(cfg["dt"]),
                       t_end=float(cfg["t_end"]), mode=mode)
    return momentode.integrate(config, kappa if kappa is not None else float(cfg["kappa"]),
                               sample_every=sample_every)


# -- subcommands -----------------------------------------------------------

def cmd_timeseries(cfg):
    kappa = float(cfg["kappa"])
    dt = float(cfg["dt"])
    sample_every = max(1, int(round(float(cfg["sample_interval"]) / dt)))
    effective = sample_every * dt
    grid = np.arange(int(round(float(cfg["t_end"]) / effective)) + 1) * effective
    rows = []
    for p in _p_values(cfg):
        for mode in _ode_modes(cfg["mode"]):
            series, _ = _integrate(cfg, p, mode, sample_every=sample_every)
            for t, g in zip(series.t, series.gamma):
                rows.append((float(t), float(g), "ode", p, kappa, 0, mode))
        sol = analytic.solve(kappa, p)
        for t in grid:
            rows.append((float(t), analytic.gamma_t(sol, float(t)),
                         "analytic", p, kappa, 0, ""))
    rows.sort(key=lambda r: (r[2], r[3], r[0], r[6]))
    _write_csv(cfg["out"], ["t", "gamma", "source", "p", "kappa", "replicate", "mode"], rows)
    _write_meta(cfg["out"], "timeseries", cfg)
    return 0


def cmd_scan(cfg):
    kappa = float(cfg["kappa"])
    mode = cfg["mode"]
    if mode == "both":
        raise ValueError("scan uses a single ODE mode")
    rows = []
    for p in _p_values(cfg):
        series, final_grid = _integrate(cfg, p, mode, sample_every=10**9)
        rate = momentode.gamma_rate(final_grid.values, p, mode)
        status = "ok" if (abs(rate) < PLATEAU_RATE
                          or series.meta["stopped"] == "fragmented") else "no-plateau"
        g_star = analytic.steady_gamma(kappa, p) if p < 1.0 else float("nan")
        rows.append((p, series.final_gamma(), g_star, status))
    _write_csv(cfg["out"], ["p", "gamma_ode_final", "gamma_analytic_star", "status"], rows)
    _write_meta(cfg["out"], "scan", cfg)
    return 0


def locate_pc_ode(kappa, k_max=60, dt=0.01, t_end=300.0, mode="pde-matched",
                  tol=PC_BISECTION_TOL, threshold=PC_GAMMA_THRESHOLD):
    """Bisection on the rewiring rate for the ODE's fragmentation point.

    A parameter point is called fragmented when the terminal gamma falls
    below `threshold`. Returns (pc, lo, hi); raises ValueError when the
    initial bracket does not straddle the transition.
    """
    pa = analytic.critical_p(kappa)
    lo = max(0.02, pa - 0.3)
    hi = min(0.97, pa + 0.3)

    def fragmented(p):
        config = OdeConfig(p=p, k_max=k_max, dt=dt, t_end=t_end, mode=mode)
        series, _ = momentode.integrate(config, kappa, sample_every=10**9)
        return series.final_gamma() < threshold

    if fragmented(lo):
        raise ValueError(f"lower bracket p={lo:g} already fragmented (kappa={kappa:g})")
    if not fragmented(hi):
        raise ValueError(f"upper bracket p={hi:g} still active (kappa={kappa:g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fragmented(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), lo, hi


def cmd_pc_curve(cfg):
    rows = []
    for kappa in _parse_range(cfg["kappa_range"]):
        pa = analytic.critical_p(kappa)
        try:
            pc, _, _ = locate_pc_ode(kappa, k_max=int(cfg["k_max"]),
                                     dt=float(cfg["dt"]), t_end=float(cfg["t_end"]),
                                     mode=cfg["mode"])
            rows.append((kappa, pa, pc, "ok"))
        except ValueError:
            rows.append((kappa, pa, float("nan"), "no-bracket"))
    _write_csv(cfg["out"], ["kappa", "pc_analytic", "pc_ode", "status"], rows)
    _write_meta(cfg["out"], "pc-curve", cfg)
    return 0


def cmd_abm(cfg):
    config = SimConfig(n=int(cfg["n"]), mean_degree=float(cfg["kappa"]),
                       p=float(cfg["p"]), t_end=float(cfg["t_end"]),
                       seed=int(cfg["seed"]),
                       sample_interval=float(cfg["sample_interval"]))
    results = sim.run_ensemble(config, int(cfg["replicates"]),
                               workers=int(cfg["workers"]))
    rows = []
    summary_rows = []
    for rep, (series, summary) in enumerate(results):
        for t, g in zip(series.t, series.gamma):
            rows.append((float(t), float(g), rep))
        summary_rows.append((rep, summary["final_gamma"], summary["components"],
                             int(summary["all_consensus"])))
    _write_csv(cfg["out"], ["t", "gamma", "replicate"], rows)
    _write_csv(cfg["out"] + ".summary.csv",
               ["replicate", "final_gamma", "components", "all_consensus"],
               summary_rows)
    _write_meta(cfg["out"], "abm", cfg)
    return 0


def _rel_dev(a, b):
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def cmd_compare(cfg):
    kappa = float(cfg["kappa"])
    p = float(cfg["p"])
    dt = float(cfg["dt"])
    interval = float(cfg["sample_interval"])
    sample_every = max(1, int(round(interval / dt)))
    effective = sample_every * dt
    n_pts = int(round(float(cfg["t_end"]) / effective)) + 1
    grid = np.arange(n_pts) * effective

    abm_cfg = SimConfig(n=int(cfg["n"]), mean_degree=kappa, p=p,
                        t_end=float(cfg["t_end"]), seed=int(cfg["seed"]),
                        sample_interval=effective)
    results = sim.run_ensemble(abm_cfg, int(cfg["replicates"]),
                               workers=int(cfg["workers"]))
    abm_mean = ensemble_mean([series for series, _ in results])

    curves = {"abm": np.asarray(abm_mean.gamma)}
    for mode in ("full", "pde-matched"):
        series, _ = _integrate(cfg, p, mode, sample_every=sample_every)
        padded = np.full(n_pts, series.final_gamma())
        take = min(n_pts, len(series.gamma))
        padded[:take] = series.gamma[:take]
        curves["ode_" + mode.replace("-", "_")] = padded
    sol = analytic.solve(kappa, p)
    curves["analytic"] = np.array([analytic.gamma_t(sol, float(t)) for t in grid])

    header = ["t", "gamma_abm", "gamma_ode_full", "gamma_ode_pde_matched",
              "gamma_analytic"]
    rows = [(float(grid[i]), float(curves["abm"][i]), float(curves["ode_full"][i]),
             float(curves["ode_pde_matched"][i]), float(curves["analytic"][i]))
            for i in range(n_pts)]
    _write_csv(cfg["out"], header, rows)

    names = ["abm", "ode_full", "ode_pde_matched", "analytic"]
    summary_rows = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            max_dev = max(_rel_dev(curves[a][j], curves[b][j]) for j in range(n_pts))
            term_dev = _rel_dev(curves[a][-1], curves[b][-1])
            summary_rows.append((a, b, max_dev, term_dev))
    _write_csv(cfg["out"] + ".summary.csv",
               ["source_a", "source_b", "max_rel_dev", "terminal_rel_dev"],
               summary_rows)
    _write_meta(cfg["out"], "compare", cfg)
    for a, b, max_dev, term_dev in summary_rows:
        print(f"{a} vs {b}: max rel dev {max_dev:.4g}, terminal {term_dev:.4g}")
    return 0


# -- argument parsing ------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="avmkit",
        description="Adaptive voter model experiments: simulation, moment "
                    "ODE, and closed-form layers, emitted as CSV data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, *names):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output CSV path")
        if "kappa" in names:
            sp.add_argument("--kappa", type=float, help="mean degree")
        if "p" in names:
            sp.add_argument("--p", type=float, help="rewiring rate")
        if "p_range" in names:
            sp.add_argument("--p-range", dest="p_range",
                            help="rewiring rates START:STOP:STEP")
        if "kappa_range" in names:
            sp.add_argument("--kappa-range", dest="kappa_range",
                            help="mean degrees START:STOP:STEP")
        if "n" in names:
            sp.add_argument("--n", type=int, help="number of agents")
        if "k_max" in names:
            sp.add_argument("--k-max", dest="k_max", type=int,
                            help="grid truncation (default 60)")
        if "dt" in names:
            sp.add_argument("--dt", type=float, help="integrator step (default 0.01)")
        if "t_end" in names:
            sp.add_argument("--t-end", dest="t_end", type=float, help="time horizon")
        if "seed" in names:
            sp.add_argument("--seed", type=int, help="base random seed")
        if "replicates" in names:
            sp.add_argument("--replicates", type=int, help="ABM replicate count")
        if "mode" in names:
            sp.add_argument("--mode", choices=["full", "pde-matched", "both"],
                            help="ODE closure mode")
        if "sample_interval" in names:
            sp.add_argument("--sample-interval", dest="sample_interval",
                            type=float, help="observable sampling interval")
        if "workers" in names:
            sp.add_argument("--workers", type=int, help="parallel worker count")

    add_common(sub.add_parser("timeseries", help="gamma(t) curves per layer"),
               "kappa", "p", "p_range", "k_max", "dt", "t_end", "mode",
               "sample_interval")
    add_common(sub.add_parser("scan", help="steady gamma versus rewiring rate"),
               "kappa", "p_range", "k_max", "dt", "t_end", "mode")
    add_common(sub.add_parser("pc-curve", help="fragmentation threshold versus mean degree"),
               "kappa_range", "k_max", "dt", "t_end", "mode")
    add_common(sub.add_parser("abm", help="agent-based replicates"),
               "kappa", "p", "n", "t_end", "seed", "replicates",
               "sample_interval", "workers")
    add_common(sub.add_parser("compare", help="all three layers on one grid"),
               "kappa", "p", "n", "k_max", "dt", "t_end", "seed",
               "replicates", "sample_interval", "workers")
    return parser


_COMMANDS = {
    "timeseries": cmd_timeseries,
    "scan": cmd_scan,
    "pc-curve": cmd_pc_curve,
    "abm": cmd_abm,
    "compare": cmd_compare,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; reserve 2 for numerical failure
        return 0 if exc.code == 0 else 1
    try:
        cfg = _resolve_config(args.command, args)
        return _COMMANDS[args.command](cfg)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
