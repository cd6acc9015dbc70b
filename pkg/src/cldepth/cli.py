"""Command-line entry point.

Exit codes: 0 success, 1 runtime fault, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import metrics as mx
from .excitation import low_excitation_intervals, pe_integral, weak_excitation_windows
from .observers import check_gain_condition_full, check_gain_condition_reduced
from .scenarios import (
    BUILTIN,
    ConfigError,
    MonteCarloSpec,
    ScenarioConfig,
    replay_log,
    run_monte_carlo,
    run_scenario,
)

log = logging.getLogger("cldepth")

OBSERVER_FLAGS = {"full": "full", "reduced": "reduced_integral",
                  "reduced-diff": "reduced_differential", "ls": "ls_baseline"}
COMPARISON_FIGURES = {"2d", "3a", "3c"}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_config(args) -> ScenarioConfig:
    if args.config:
        cfg = ScenarioConfig.load(args.config)
    elif args.scenario:
        if args.scenario not in BUILTIN:
            raise UsageError(f"unknown scenario {args.scenario!r}; built-ins are {sorted(BUILTIN)}")
        cfg = BUILTIN[args.scenario]()
    elif args.command == "replay":
        cfg = BUILTIN["replay"]()
    else:
        raise UsageError("one of --scenario or --config is required")
    cfg = cfg.with_overrides(args.set or [])
    if args.observer:
        cfg = replace(cfg, observer=OBSERVER_FLAGS[args.observer])
    if args.seed is not None and args.command != "montecarlo":
        cfg = replace(cfg, noise=replace(cfg.noise, seed=args.seed))
    return cfg


def _run(args, cfg: ScenarioConfig):
    if args.command == "replay" or getattr(args, "log_file", None):
        if not args.log_file:
            raise UsageError("replay needs --log PATH")
        if not Path(args.log_file).is_file():
            raise UsageError(f"log file not found: {args.log_file}")
        return replay_log(args.log_file, cfg)
    return run_scenario(cfg)


def write_manifest(out: Path, name: str, args, cfg: ScenarioConfig, artifacts: list[Path]) -> Path:
    manifest = {
        "version": __version__,
        "command": args.command,
        "config": cfg.to_dict(),
        "seed": args.seed if args.seed is not None else (0 if args.command == "montecarlo" else cfg.noise.seed),
        "runs": getattr(args, "runs", None),
        "spread": [args.s_spread, args.chi_spread] if args.command == "montecarlo" else None,
        "figures": getattr(args, "figure", None),
        "log": str(args.log_file) if getattr(args, "log_file", None) else None,
        "artifacts": {p.name: _sha256(p) for p in artifacts},
    }
    path = out / f"{name}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_run(out: Path, name: str, res) -> list[Path]:
    paths = [
        mx.write_series_csv(out / f"{name}_run.csv", res.measured, res.observer_columns()),
        mx.write_metrics(out / f"{name}_metrics.txt", res.metrics_dict()),
        mx.write_columns(out / f"{name}_diagnostics.csv", res.diagnostics_columns()),
    ]
    return paths


# --------------------------------------------------------------------------
# Verbs
# --------------------------------------------------------------------------

def cmd_simulate(args, cfg, out):
    res = _run(args, cfg)
    paths = _write_run(out, cfg.name, res)
    for k, v in res.metrics_dict().items():
        print(f"{k}={v}")
    return paths


cmd_replay = cmd_simulate


def cmd_montecarlo(args, cfg, out):
    mc = MonteCarloSpec(n_runs=args.runs, base_seed=args.seed or 0, jobs=args.jobs,
                        s_hat_std=args.s_spread, chi_hat_std=args.chi_spread)
    rep = run_monte_carlo(cfg, mc)
    rows = rep.runs
    runs_path = mx.write_columns(out / f"{cfg.name}_mc_runs.csv", {
        "run": np.array([r.index for r in rows]),
        "seed": np.array([r.seed for r in rows], dtype=np.uint64),
        "diverged": np.array([int(r.diverged) for r in rows]),
        "rmse_m": np.array([np.nan if r.rmse_m is None else r.rmse_m for r in rows]),
        "mape_pct": np.array([np.nan if r.mape_pct is None else r.mape_pct for r in rows]),
        "conv_time_s": np.array([np.nan if r.conv_time_s is None else r.conv_time_s for r in rows]),
    })
    agg_path = mx.write_metrics(out / f"{cfg.name}_mc_metrics.txt", rep.metrics_dict())
    for r in rows:
        if r.diverged:
            log.warning("run %d diverged: %s", r.index, r.error)
    for k, v in rep.metrics_dict().items():
        print(f"{k}={v}")
    return [runs_path, agg_path]


def cmd_export(args, cfg, out):
    figures = args.figure or []
    if not figures:
        raise UsageError("export needs at least one --figure")
    if "all" in figures:
        figures = sorted(mx.FIGURE_PANELS)
    unknown = [f for f in figures if f not in mx.FIGURE_PANELS]
    if unknown:
        raise UsageError(f"unknown figure id(s) {unknown}; known: {sorted(mx.FIGURE_PANELS)}")
    base = _run(args, cfg)
    pair = None
    paths = []
    for fig in figures:
        if fig in COMPARISON_FIGURES:
            if pair is None:
                pair = {"full": _run(args, replace(cfg, observer="full")),
                        "reduced": _run(args, replace(cfg, observer="reduced_integral"))}
            data = pair
        else:
            data = base
        paths.append(mx.export_figure_data(data, fig, out / f"{cfg.name}_fig{fig}.csv"))
        print(paths[-1])
    return paths


def cmd_diagnose(args, cfg, out):
    res = _run(args, cfg)
    t = res.t
    # excitation actually applied to the feature when the truth is known
    src = res.truth if res.truth is not None else res.measured
    info = src.omega_info()
    lines = [f"scenario={cfg.name}", f"excitation_source={'truth' if res.truth is not None else 'measured'}",
             f"pe_window_s={cfg.pe_window}"]
    lines.append(f"pe_total={mx.fmt(pe_integral(t, info, t[0], t[-1]))}")
    lines.append(f"pe_window_max={mx.fmt(float(res.pe_window_integral.max()))}")
    weak = weak_excitation_windows(t, info, cfg.pe_window, args.pe_threshold)
    lines.append(f"weak_windows(T0={cfg.pe_window}, threshold={args.pe_threshold})={len(weak)}")
    for a, b, v in weak:
        lines.append(f"  weak window [{a:.3f}, {b:.3f}] integral={mx.fmt(v)}")
    low = low_excitation_intervals(t, info, args.info_level, args.min_duration)
    lines.append(f"low_excitation_intervals(level={args.info_level})={len(low)}")
    for a, b, v in low:
        lines.append(f"  pe_violation [{a:.3f}, {b:.3f}] integral={mx.fmt(v)}")
    fill = min(cfg.stacks.history - 1, len(t) - 1)
    s1_after = res.sigma1[fill:]
    lines.append(f"sigma1_final={mx.fmt(float(res.sigma1[-1]))}")
    lines.append(f"sigma1_min_after_fill={mx.fmt(float(s1_after.min()))}")
    lines.append(f"sigma_bar={mx.fmt(float(res.sigma_bar[-1]))}")
    lines.append(f"stack_updates={int(res.update_flag.sum())}")
    lines.append(f"L_g={mx.fmt(res.L_g)}")
    chi_bar = np.nanmax(res.chi_bar) if np.isfinite(res.chi_bar).any() else None
    lines.append(f"chi_bar={mx.fmt(chi_bar)}")
    lines.append(f"d_bar={mx.fmt(res.d_bar)}")
    s1 = float(s1_after.min())
    g = cfg.gains
    full = check_gain_condition_full(g.K_cl, g.Gamma, s1, res.L_g)
    red = check_gain_condition_reduced(g.K_bar, s1, res.L_g)
    lines.append(_gain_line("full-order", "K_cl", g.K_cl, full))
    lines.append(_gain_line("reduced-order", "K_bar", g.K_bar, red))
    report = out / f"{cfg.name}_diagnose.txt"
    report.write_text("\n".join(lines) + "\n")
    diag = mx.write_columns(out / f"{cfg.name}_diagnostics.csv", res.diagnostics_columns())
    print("\n".join(lines))
    return [report, diag]


def _gain_line(label, gain_name, gain, check):
    req = "inf (sigma1 = 0, unachievable)" if math.isinf(check.required) else mx.fmt(check.required)
    verdict = "PASS" if check.passed else "FAIL"
    return f"gain_check {label}: {verdict} {gain_name}={mx.fmt(gain)} required {gain_name} > {req}"


def cmd_rerun(args):
    """Re-execute a manifest and compare artifact hashes."""
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "_rerun_config.yaml"
    ScenarioConfig.from_dict(manifest["config"]).save(cfg_path)
    argv = [manifest["command"], "--config", str(cfg_path), "--out", str(out)]
    if manifest.get("seed") is not None:
        argv += ["--seed", str(manifest["seed"])]
    if manifest["command"] == "montecarlo":
        argv += ["--runs", str(manifest["runs"]), "--s-spread", repr(manifest["spread"][0]),
                 "--chi-spread", repr(manifest["spread"][1])]
    for f in manifest.get("figures") or []:
        argv += ["--figure", f]
    if manifest.get("log"):
        argv += ["--log", manifest["log"]]
    code = main(argv)
    cfg_path.unlink()
    if code:
        return code
    name = manifest["config"]["name"]
    new = json.loads((out / f"{name}_manifest.json").read_text())["artifacts"]
    bad = [k for k, v in manifest["artifacts"].items() if new.get(k) != v]
    for k in bad:
        print(f"MISMATCH {k}")
    print("rerun: hashes match" if not bad else f"rerun: {len(bad)} artifact(s) differ")
    return 1 if bad else 0


VERBS = {"simulate": cmd_simulate, "montecarlo": cmd_montecarlo, "replay": cmd_replay,
         "export": cmd_export, "diagnose": cmd_diagnose}


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cldepth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="built-in scenario: " + ", ".join(sorted(BUILTIN)))
    common.add_argument("--config", help="YAML scenario config")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted config override, repeatable (use 'off' for None)")
    common.add_argument("--observer", choices=sorted(OBSERVER_FLAGS))
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--log", dest="log_file", help="measurement CSV to replay")
    common.add_argument("--log-level", default="WARNING")

    sub.add_parser("simulate", parents=[common], help="single run")
    mc = sub.add_parser("montecarlo", parents=[common], help="Monte Carlo batch")
    mc.add_argument("--runs", type=int, default=100)
    mc.add_argument("--jobs", type=int, default=1, help="worker processes")
    mc.add_argument("--s-spread", type=float, default=1.0,
                    help="std of the initial image-point estimate around the nominal")
    mc.add_argument("--chi-spread", type=float, default=0.3,
                    help="std of the initial inverse-depth estimate around the nominal")
    sub.add_parser("replay", parents=[common], help="run observers on a logged CSV")
    ex = sub.add_parser("export", parents=[common], help="write figure panel data")
    ex.add_argument("--figure", action="append", help="panel id (1a..3d) or 'all'; repeatable")
    dg = sub.add_parser("diagnose", parents=[common], help="excitation and gain report")
    dg.add_argument("--pe-threshold", type=float, default=1e-3,
                    help="PE integral below which a window is reported as weak")
    dg.add_argument("--info-level", type=float, default=1e-3,
                    help="Omega Omega^T level below which excitation counts as lost")
    dg.add_argument("--min-duration", type=float, default=1.0,
                    help="shortest low-excitation interval to report, s")
    rr = sub.add_parser("rerun", help="re-execute a manifest and verify artifact hashes")
    rr.add_argument("manifest")
    rr.add_argument("--out", default=".")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(args, "log_level", "WARNING").upper(),
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "rerun":
            return cmd_rerun(args)
        cfg = resolve_config(args)
        if args.command == "montecarlo" and (args.runs < 1 or args.jobs < 1):
            raise UsageError("--runs and --jobs must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = VERBS[args.command](args, cfg, out)
        write_manifest(out, cfg.name, args, cfg, artifacts)
    except (UsageError, ConfigError, mx.LogFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
