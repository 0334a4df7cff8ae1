"""Command-line entry point.

    wongzakai <command> [CONFIG] [--key=value ...] [--check]
    wongzakai run CONFIG [--key=value ...] [--check]

Exit codes: 0 success, 1 invalid configuration, 2 numerical blow-up,
3 threshold failure under ``--check``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, harness, noise, ou
from .config import COMMAND_DEFAULTS, COMMANDS, KEYS, ConfigError, RunConfig, parse_config
from .drift import NumericalBlowUp, growth_violations, verify_one_sided
from .solver import make_config, solve_reference, solve_wz

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_CHECK = 0, 1, 2, 3

# thresholds enforced under --check
OU_TEMPORAL_BAND = (-0.30, -0.20)
OU_SPATIAL_BAND = (-0.55, -0.45)
MIN_R_SQUARED = 0.98
MC_SIGMAS = 4.0
TEMPORAL_BAND = (-0.35, -0.15)
SPATIAL_BAND = (-0.60, -0.40)
MOMENT_REL_CHANGE = 0.15
GROWTH_TOL = 1e-12


@dataclass
class Outcome:
    summary: str
    outputs: list = field(default_factory=list)
    checks: list = field(default_factory=list)  # (name, passed, detail)
    extra: dict = field(default_factory=dict)


def _band(name, fit, band, r2=None):
    ok = band[0] <= fit.slope <= band[1] and (r2 is None or fit.r_squared >= r2)
    detail = f"slope {fit.slope:.4f} in [{band[0]}, {band[1]}]"
    if r2 is not None:
        detail += f", R^2 {fit.r_squared:.4f} >= {r2}"
    return (name, ok, detail)


def _fit_or_none(*args):
    try:
        return harness.fit_points(*args)
    except ValueError:
        return None


# ---------------------------------------------------------------- commands

def run_ou_error(cfg: RunConfig, out: Path) -> Outcome:
    t, T = cfg.t, cfg.T
    mc = {}
    if cfg.N > 0:
        mc = ou.ou_mse_mc(t, [(m, n) for m in cfg.m_list for n in cfg.n_list], T, cfg.N, cfg.seed, cfg.L,
                          cfg.n_ref, chunk_size=cfg.chunk_size)
    rows, checks = [], []
    analytic = {}
    for m in cfg.m_list:
        for n in cfg.n_list:
            b = ou.ou_error_breakdown(t, m, n, T, cfg.j_tail_cutoff)
            analytic[(m, n)] = b.mse
            est = mc.get((m, n))
            rows.append([t, m, n, b.mse, b.tail, b.tail_remainder_bound,
                         est.mse if est else float("nan"), est.stderr if est else float("nan"), cfg.N])
            if est:
                # the Monte Carlo keeps modes up to n_ref only; compare like with like
                target = ou.ou_mse_analytic(t, m, n, T, j_tail_cutoff=cfg.n_ref)
                ok = abs(est.mse - target) <= MC_SIGMAS * est.stderr
                checks.append((f"mc m={m} n={n}", ok,
                               f"|{est.mse:.6g} - {target:.6g}| <= {MC_SIGMAS} * {est.stderr:.3g}"))
    harness.write_csv(out / "errors.csv", ["t", "m", "n", "mse_analytic", "tail_var", "tail_remainder_bound",
                                           "mse_mc", "mc_stderr", "n_samples"], rows)
    fits = []
    for n in cfg.n_list:
        fit = _fit_or_none("temporal", 2, cfg.m_list, [analytic[(m, n)] for m in cfg.m_list])
        if fit:
            fits.append(fit)
            checks.append(_band(f"temporal n={n}", fit, OU_TEMPORAL_BAND, MIN_R_SQUARED))
    for m in cfg.m_list:
        fit = _fit_or_none("spatial", 2, cfg.n_list, [analytic[(m, n)] for n in cfg.n_list])
        if fit:
            fits.append(fit)
            checks.append(_band(f"spatial m={m}", fit, OU_SPATIAL_BAND, MIN_R_SQUARED))
    harness.rates_to_csv(out / "rates.csv", fits)
    summary = "; ".join(f"{f.axis} slope {f.slope:.4f} (R^2 {f.r_squared:.4f})" for f in fits) or "no rate fit"
    return Outcome(f"ou-error: {len(rows)} rows; {summary}", ["errors.csv", "rates.csv"], checks)


def _run_study(cfg: RunConfig, out: Path, axis: str, band) -> Outcome:
    table = harness.mc_error_study(cfg.study(), cfg.m_list, cfg.n_list, cfg.N, cfg.seed, workers=cfg.workers,
                                   allow_failures=cfg.allow_failures, chunk_size=cfg.chunk_size)
    table.to_csv(out / "errors.csv")
    fits, checks = [], []
    fixed = cfg.n_list if axis == "temporal" else cfg.m_list
    for value in fixed:
        rows = [r for r in table.rows if (r.n if axis == "temporal" else r.m) == value]
        try:
            fit = harness.fit_rate(harness.ErrorTable(tuple(rows)), axis)
        except ValueError:
            continue
        fits.append(fit)
        checks.append(_band(f"{axis} {'n' if axis == 'temporal' else 'm'}={value}", fit, band))
    if not fits:
        checks.append((f"{axis} fit", False, "fewer than 3 usable rows"))
    n_fail = sum(r.n_failures for r in table.rows)
    checks.append(("no failures", n_fail == 0, f"{n_fail} failed samples"))
    harness.rates_to_csv(out / "rates.csv", fits)
    summary = "; ".join(f"{axis} slope {f.slope:.4f} (R^2 {f.r_squared:.4f})" for f in fits) or "no rate fit"
    extra = {"failed_samples": n_fail, "failures_excluded": bool(n_fail)}
    return Outcome(f"{cfg.command}: {summary}", ["errors.csv", "rates.csv"], checks, extra)


def run_converge_time(cfg, out):
    return _run_study(cfg, out, "temporal", TEMPORAL_BAND)


def run_converge_space(cfg, out):
    return _run_study(cfg, out, "spatial", SPATIAL_BAND)


def run_moments(cfg: RunConfig, out: Path) -> Outcome:
    res = list(zip(cfg.m_list, cfg.n_list))
    rows = harness.moment_sweep(cfg.study(), res, cfg.p_list, cfg.N, cfg.seed, workers=cfg.workers,
                                chunk_size=cfg.chunk_size)
    harness.moments_to_csv(out / "moments.csv", rows)
    checks, parts = [], []
    for p in cfg.p_list:
        sub = [r for r in rows if r.p == p]
        checks.append((f"finite p={p:g}", all(np.isfinite(r.sup_of_mean) for r in sub), ""))
        for a, b in zip(sub, sub[1:]):
            rc = harness.relative_change(a.sup_of_mean, b.sup_of_mean)
            checks.append((f"stability p={p:g} ({a.m},{a.n})->({b.m},{b.n})", rc < MOMENT_REL_CHANGE,
                           f"relative change {rc:.4f} < {MOMENT_REL_CHANGE}"))
            parts.append(f"p={p:g} change {rc:.4f}")
    return Outcome("moments: " + ("; ".join(parts) or f"{len(rows)} rows"), ["moments.csv"], checks)


def run_solve(cfg: RunConfig, out: Path) -> Outcome:
    m, n = cfg.m_list[0], cfg.n_list[0]
    drift, u0 = cfg.drift_spec(), cfg.u0_field()
    sc = make_config(m, n, drift, u0.padded(n), cfg.T, K=cfg.K, G=None, n_monitor=cfg.n_monitor)
    rc = make_config(cfg.m_ref, cfg.n_ref, drift, u0.padded(cfg.n_ref), cfg.T, K=cfg.K_ref, n_monitor=cfg.n_monitor)
    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    rows_needed = max(n, cfg.n_ref if cfg.reference else 0)
    outputs, last = [], None
    for sid in range(cfg.N):
        path = noise.sample_path(cfg.seed, sid, rows_needed, cfg.L, cfg.T)
        traj = solve_wz(sc, path)
        name = f"trajectories/wz_{sid:06d}.csv"
        traj.to_csv(out / name)
        outputs.append(name)
        if cfg.reference:
            name = f"trajectories/reference_{sid:06d}.csv"
            solve_reference(rc, path).to_csv(out / name)
            outputs.append(name)
        if cfg.dump_noise:
            name = f"trajectories/noise_{sid:06d}.bin"
            path.dump(out / name)
            outputs.append(name)
        last = traj
    norm = float(np.sqrt(np.sum(last.states[-1] ** 2)))
    return Outcome(f"solve: {cfg.N} sample(s) at m={m}, n={n}, K={sc.K}; ||u(T)||_L2 of last sample {norm:.6g}",
                   outputs, [("finite", True, "")])


def run_verify_drift(cfg: RunConfig, out: Path) -> Outcome:
    drift = cfg.drift_spec()
    rep = verify_one_sided(drift, cfg.n_pairs, cfg.box_radius, np.random.default_rng(cfg.seed))
    growth = growth_violations(drift)
    harness.write_csv(out / "drift.csv",
                      ["drift", "b", "L_f", "Lt_f", "q", "n_pairs", "box_radius", "max_violation", "threshold",
                       "passed", "f_growth_excess", "fprime_growth_excess"],
                      [[drift.name, drift.b, drift.L_f, drift.Lt_f, drift.q, rep.n_pairs, rep.box_radius,
                        rep.max_violation, rep.threshold, int(rep.passed), growth["f"], growth["fprime"]]])
    checks = [("one-sided", rep.passed, f"max violation {rep.max_violation:.3g} <= {rep.threshold:.3g}"),
              ("growth", growth["f"] <= GROWTH_TOL and growth["fprime"] <= GROWTH_TOL,
               f"relative excess {growth} <= {GROWTH_TOL}")]
    return Outcome(f"verify-drift: {drift.name} max violation {rep.max_violation:.3g} "
                   f"(threshold {rep.threshold:.3g}) {'passed' if rep.passed else 'FAILED'}", ["drift.csv"], checks)


RUNNERS = {
    "ou-error": run_ou_error,
    "converge-time": run_converge_time,
    "converge-space": run_converge_space,
    "solve": run_solve,
    "moments": run_moments,
    "verify-drift": run_verify_drift,
}


def run(cfg: RunConfig, check: bool = False) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    wall0 = time.perf_counter()
    try:
        outcome = RUNNERS[cfg.command](cfg, out)
    except NumericalBlowUp as exc:
        print(f"error: numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {
        "command": cfg.command,
        "seed": cfg.seed,
        "version": __version__,
        "config": cfg.to_dict(),
        "outputs": outcome.outputs,
        "summary": outcome.summary,
        "checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in outcome.checks],
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "wall_time_s": time.perf_counter() - wall0,
        **outcome.extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(outcome.summary)
    if check:
        failed = [c for c in outcome.checks if not c[1]]
        for name, ok, detail in outcome.checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if failed:
            return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------- argparse

def _default_text(key: str, command: str | None) -> str:
    default = KEYS[key][1]
    if command and key in COMMAND_DEFAULTS.get(command, {}):
        default = COMMAND_DEFAULTS[command][key]
    if key == "seed":
        return "none, required"
    return "derived" if default is None else json.dumps(default)


def _add_key_options(parser: argparse.ArgumentParser, command: str | None) -> None:
    group = parser.add_argument_group("configuration keys (override the file; values are TOML)")
    for key, (_, _, text) in KEYS.items():
        if key == "command":
            continue
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        group.add_argument(*flags, dest=f"key_{key}", metavar="VALUE", default=None,
                           help=f"{text} (default: {_default_text(key, command)})")
    parser.add_argument("--check", action="store_true", help="turn acceptance thresholds into exit code 3")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wongzakai", description="Wong-Zakai-Galerkin error studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=f"run {cmd}")
        p.add_argument("config", nargs="?", default=None, help="TOML config file")
        _add_key_options(p, cmd)
    p = sub.add_parser("run", help="run the command named in a config file")
    p.add_argument("config", help="TOML config file with a command key")
    _add_key_options(p, None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("key_") and v is not None}
    command = None if args.subcommand == "run" else args.subcommand
    try:
        cfg = parse_config(args.config, overrides, command=command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, check=args.check)


if __name__ == "__main__":
    sys.exit(main())
