"""Command-line entry point: ``dmfeedback <command> [options]``.

Every command writes CSV files plus ``manifest.json`` into ``--out`` and
exits 0 only when all outputs were written and internal checks passed.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, parse_config
from .control import gain_grid_search
from .entanglement import REFERENCE_FIT, fit_calibration
from .ensemble import (
    CALIBRATION_ALPHAS,
    calibration_samples,
    run_ensemble,
    time_averaged_negativity,
)
from .io import write_csv, write_manifest
from .metrology import STEADY_WINDOW, closed_loop_qfi, scaling_prediction

FAST_TRAJ = 200
CONVERGENCE_LIMIT = 0.01

# (model, alpha, sigma, reference OFF, reference ON)
TABLE_B1 = (
    ("XXX", 1.0, 0.2, 0.28, 0.44),
    ("XXX", 1.0, 0.5, 0.21, 0.42),
    ("XXX", 1.0, 1.0, 0.12, 0.28),
    ("XXX", 2.0, 0.5, 0.15, 0.33),
    ("XXX", 3.0, 0.5, 0.09, 0.22),
    ("XYZ", 1.0, 0.5, 0.20, 0.38),
)
GRID_KP = tuple(round(0.1 * k, 10) for k in range(1, 11))
GRID_KI = tuple(round(0.05 * k, 10) for k in range(1, 11))
DEFAULT_DZ = tuple(round(0.2 * k, 10) for k in range(11))
DEFAULT_B0 = (0.8, 0.9, 1.0, 1.1, 1.2)


class CommandFailed(RuntimeError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _windows(cfg: ScenarioConfig):
    full = (0.0, cfg.t_total)
    late = (min(STEADY_WINDOW[0], cfg.t_total), cfg.t_total)
    return full, late


def _summary_rows(stats, cfg):
    rows = []
    for w in _windows(cfg):
        n_bar, sem = time_averaged_negativity(stats, w)
        rows.append((w[0], w[1], n_bar, sem))
    return rows


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ScenarioConfig, out: Path, args) -> int:
    stats = run_ensemble(cfg, workers=args.workers)
    write_csv(
        out / "timeseries.csv",
        ("t_ms", "mean_N", "sem_N", "mean_zz", "mean_dz"),
        zip(
            stats.times.tolist(), stats.mean_negativity.tolist(), stats.sem_negativity.tolist(),
            stats.mean_zz.tolist(), stats.mean_dz.tolist(),
        ),
    )
    rows = _summary_rows(stats, cfg)
    write_csv(out / "summary.csv", ("window_start", "window_end", "n_bar", "sem"), rows)
    write_manifest(out / "manifest.json", "simulate", cfg, n_jumps=stats.n_jumps)
    for lo, hi, n_bar, sem in rows:
        print(f"N_bar[{lo:g},{hi:g}] = {n_bar:.4f} +/- {sem:.4f}")
    return 0


def cmd_calibrate(cfg: ScenarioConfig, out: Path, args) -> int:
    alphas = args.alpha or CALIBRATION_ALPHAS
    rows = []
    single = []
    for a in alphas:
        data = calibration_samples(cfg.replace(alpha=float(a)))
        rows.extend((float(a), m, n) for m, n in data.tolist())
        single.append((float(a), float(np.std(np.abs(data[:, 0]))), len(data)))
    write_csv(out / "calibration_samples.csv", ("alpha", "m", "n"), rows)
    write_csv(out / "calibration_spread.csv", ("alpha", "std_abs_m", "samples"), single)
    for a, spread, _ in single:
        if spread < 1e-9:
            print(f"alpha={a:g}: <sz sz> is constant along the unitary run; fit needs several alphas")
    fit = fit_calibration([(m, n) for _, m, n in rows])
    write_csv(
        out / "calibration_fit.csv",
        ("source", "slope", "intercept", "pearson_r", "sample_count"),
        [("fitted", fit.slope, fit.intercept, fit.pearson_r, fit.sample_count),
         ("reference", REFERENCE_FIT.slope, REFERENCE_FIT.intercept, REFERENCE_FIT.pearson_r, 0)],
    )
    write_manifest(out / "manifest.json", "calibrate", cfg, fit=fit, alphas=list(alphas))
    print(f"slope={fit.slope:.4f} intercept={fit.intercept:.4f} r={fit.pearson_r:.4f}")
    return 0


def cmd_table_b1(cfg: ScenarioConfig, out: Path, args) -> int:
    header = (
        "model", "alpha", "sigma",
        "off_n_bar", "off_sem", "on_n_bar", "on_sem",
        "ref_off", "ref_on", "delta_off", "delta_on",
        "off_n_bar_late", "on_n_bar_late",
    )
    rows = []
    for model, alpha, sigma, p_off, p_on in TABLE_B1:
        res = {}
        for fb in (False, True):
            run = cfg.replace(model=model, alpha=alpha, sigma=sigma, feedback=fb)
            stats = run_ensemble(run, workers=args.workers)
            full, late = _windows(run)
            res[fb] = (*time_averaged_negativity(stats, full), time_averaged_negativity(stats, late)[0])
        off, on = res[False], res[True]
        rows.append((model, alpha, sigma, off[0], off[1], on[0], on[1],
                     p_off, p_on, off[0] - p_off, on[0] - p_on, off[2], on[2]))
        print(f"{model} a={alpha:g} s={sigma:g}: OFF {off[0]:.3f} ({p_off})  ON {on[0]:.3f} ({p_on})")
    write_csv(out / "table_b1.csv", header, rows)
    write_manifest(out / "manifest.json", "table-b1", cfg)
    return 0


def cmd_sweep_dz(cfg: ScenarioConfig, out: Path, args) -> int:
    base = cfg if args.config else cfg.replace(sigma=0.5)
    rows = []
    for alpha in args.alpha or CALIBRATION_ALPHAS:
        for dz0 in args.dz or DEFAULT_DZ:
            for fb in (False, True):
                run = base.replace(alpha=float(alpha), dz0=float(dz0), feedback=fb)
                n_bar, sem = time_averaged_negativity(run_ensemble(run, workers=args.workers),
                                                      (0.0, run.t_total))
                rows.append((float(alpha), float(dz0), fb, n_bar, sem))
    write_csv(out / "sweep_dz.csv", ("alpha", "dz0", "feedback", "n_bar", "sem"), rows)
    write_manifest(out / "manifest.json", "sweep-dz", base)
    return 0


def cmd_qfi(cfg: ScenarioConfig, out: Path, args) -> int:
    modes = {
        "on": cfg.replace(feedback=True, sigma=cfg.sigma if args.config else 0.5),
        "off_static": cfg.replace(feedback=False, sigma=0.0),
    }
    rows, pairs = [], []
    for name, run in modes.items():
        for b0 in args.b0 or DEFAULT_B0:
            p = closed_loop_qfi(run, b0, args.delta, window=_windows(run)[1],
                                workers=args.workers, formula=args.formula)
            rows.append((name, p.b0, p.f_q, p.delta, p.n_traj, p.window_start, p.window_end))
            pairs.append((name, p.b0, p.n_bar, float(np.sqrt(p.f_q)), scaling_prediction(p.n_bar)))
            print(f"{name} B0={b0:g}: F_Q={p.f_q:.4g} N_bar={p.n_bar:.3f}")
    write_csv(out / "qfi.csv",
              ("mode", "b0", "f_q", "delta", "n_traj", "window_start", "window_end"), rows)
    write_csv(out / "fig7_pairs.csv", ("mode", "b0", "n_bar", "sqrt_f_q", "scaling_prediction"), pairs)
    write_manifest(out / "manifest.json", "qfi", cfg, delta=args.delta, formula=args.formula,
                   modes={k: v.to_dict() for k, v in modes.items()})
    return 0


def gain_objective(cfg: ScenarioConfig, workers: int = 1):
    """Mean over trajectories and time of (N(t) - target)^2 for the closed loop."""
    def objective(kp, ki):
        stats = run_ensemble(cfg.replace(kp=float(kp), ki=float(ki), feedback=True), workers=workers)
        return float(np.mean((stats.negativity - cfg.target) ** 2))
    return objective


def cmd_tune_gains(cfg: ScenarioConfig, out: Path, args) -> int:
    base = cfg if args.config else cfg.replace(sigma=0.5)
    res = gain_grid_search(GRID_KP, GRID_KI, gain_objective(base, args.workers))
    write_csv(out / "gains.csv", ("rank", "kp", "ki", "mse"),
              [(i + 1, kp, ki, mse) for i, (kp, ki, mse) in enumerate(res.table)])
    write_manifest(out / "manifest.json", "tune-gains", base, best={"kp": res.kp, "ki": res.ki, "mse": res.mse})
    print(f"best kp={res.kp:g} ki={res.ki:g} mse={res.mse:.5g}")
    return 0


def convergence_check(cfg: ScenarioConfig, workers: int = 1):
    """N-bar at dt and at dt/2 on coupled noise; returns (coarse, fine, relative change)."""
    window = (0.0, cfg.t_total)
    coarse = time_averaged_negativity(run_ensemble(cfg, workers=workers), window)[0]
    fine = time_averaged_negativity(run_ensemble(cfg, workers=workers, refine=2), window)[0]
    return coarse, fine, abs(fine - coarse) / abs(coarse)


def cmd_convergence(cfg: ScenarioConfig, out: Path, args) -> int:
    coarse, fine, rel = convergence_check(cfg, args.workers)
    ok = rel < CONVERGENCE_LIMIT
    write_csv(out / "convergence.csv", ("dt", "dt_half", "n_bar_dt", "n_bar_half", "rel_change", "pass"),
              [(cfg.dt, cfg.dt / 2, coarse, fine, rel, ok)])
    write_manifest(out / "manifest.json", "convergence", cfg, rel_change=rel)
    print(f"N_bar dt={coarse:.5f} dt/2={fine:.5f} relative change {rel:.3%}")
    if not ok:
        raise CommandFailed(f"time-step change {rel:.3%} is not below {CONVERGENCE_LIMIT:.0%}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "table-b1": cmd_table_b1,
    "sweep-dz": cmd_sweep_dz,
    "qfi": cmd_qfi,
    "tune-gains": cmd_tune_gains,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value scenario file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=_u64, help="master seed")
    common.add_argument("--traj", type=int, help="trajectories per ensemble")
    common.add_argument("--fast", action="store_true", help=f"use {FAST_TRAJ} trajectories")
    common.add_argument("--workers", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="dmfeedback", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("calibrate", "sweep-dz"):
            sp.add_argument("--alpha", type=_floats, help="comma-separated alpha values")
        if name == "sweep-dz":
            sp.add_argument("--dz", type=_floats, help="comma-separated D_z(0) values")
        if name == "qfi":
            sp.add_argument("--b0", type=_floats, help="comma-separated B0 values")
            sp.add_argument("--delta", type=float, default=0.01)
            sp.add_argument("--formula", choices=("printed", "sld"), default="printed")
    return p


def resolve_config(args) -> ScenarioConfig:
    cfg = parse_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.fast:
        changes["n_traj"] = FAST_TRAJ
    if args.traj is not None:
        changes["n_traj"] = args.traj
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        status = COMMANDS[args.command](cfg, args.out, args)
        print(f"{args.command}: done in {time.perf_counter() - t0:.1f} s, outputs in {args.out}")
        return status
    except (ConfigError, OSError, ValueError, CommandFailed) as exc:
        print(f"dmfeedback {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
