"""Command line: ``nlspread <subcommand> --config FILE [options]``.

Every run writes ``<subcommand>.json`` (deterministic summary), subcommand
CSV files, and ``<subcommand>.manifest.json`` (config hash, grid, versions,
wall time) into the output directory.

Exit status: 0 success, 1 invalid input, 2 numerical failure, 3 a ``verify``
check failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ProblemConfig, parse_config
from .fields import FieldError, FitnessSpec, check_hypotheses, save_field_csv
from .frontsim import SimOptions, comparison_check, simulate_front, verify_spreading
from .kernel import KernelError, TiltedDirection
from .spectrum import EigenOptions, existence_check, principal_eigen_many
from .speed import LambdaCurve, derivative_diagnostics, spreading_speed
from .steady_state import SteadyOptions, steady_periodic
from .waves import (BelowMinimalSpeed, WaveOptions, build_bounds, psi_lab_frame, residual_check,
                    wave_checks, wave_iterate)

log = logging.getLogger("nlspread")

SUBCOMMANDS = ("eigen", "speed", "steady", "simulate", "wave", "verify", "sweep")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _plain(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj


class Outputs:
    """Writes artifacts for one run; each one is stamped with the config hash."""

    def __init__(self, cfg: ProblemConfig, name: str, out_dir: str | None):
        self.cfg = cfg
        self.name = name
        self.dir = Path(out_dir or cfg.solver.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.hash()
        self.artifacts: list[str] = []
        self.t0 = time.perf_counter()

    def json(self, data: dict, fname: str | None = None) -> Path:
        path = self.dir / (fname or f"{self.name}.json")
        body = {"subcommand": self.name, "config_hash": self.hash, **data}
        path.write_text(json.dumps(_plain(body), indent=2, sort_keys=True) + "\n")
        self.artifacts.append(path.name)
        return path

    def csv(self, fname: str, header: list[str], rows) -> Path:
        path = self.dir / fname
        with path.open("w", newline="") as fh:
            fh.write(f"# config_hash={self.hash}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.artifacts.append(path.name)
        return path

    def field(self, fname: str, f) -> Path:
        path = self.dir / fname
        save_field_csv(f, path)
        text = path.read_text()
        path.write_text(f"# config_hash={self.hash}\n" + text)
        self.artifacts.append(path.name)
        return path

    def manifest(self, status: int) -> Path:
        c = self.cfg.cell
        data = {"subcommand": self.name, "config_hash": self.hash, "config": self.cfg.source,
                "grid": {"T": c.T, "p": c.p, "n_t": c.n_t, "n_x": c.n_x},
                "versions": {"nlspread": __version__, "numpy": np.__version__,
                             "scipy": scipy.__version__, "python": platform.python_version()},
                "wall_time_s": round(time.perf_counter() - self.t0, 3),
                "exit_status": status, "artifacts": self.artifacts}
        path = self.dir / f"{self.name}.manifest.json"
        path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
        return path


def _eigen_opts(cfg: ProblemConfig) -> EigenOptions:
    return EigenOptions(tol=cfg.solver.eigen_tol, max_iter=cfg.solver.eigen_max_iter,
                        seed=cfg.solver.seed)


def _steady(cfg, fs, k):
    s = cfg.solver
    return steady_periodic(fs, k, SteadyOptions(tol=s.steady_tol, max_periods=s.steady_max_periods))


def _speed(cfg, k, xi, fs):
    curve = LambdaCurve(k, xi, fs.a0, EigenOptions(tol=cfg.solver.eigen_tol,
                                                   max_iter=cfg.solver.eigen_max_iter,
                                                   gap_iterations=0))
    return spreading_speed(k, xi, fs.a0, curve=curve), curve


def _directions(arg: str) -> list[int]:
    return [1, -1] if arg == "both" else [int(arg)]


# --------------------------------------------------------------------------- subcommands


def cmd_eigen(cfg, args, out: Outputs) -> int:
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    mus = args.mu or [0.0]
    tds = [TiltedDirection(xi, m) for xi in _directions(args.xi) for m in mus]
    res = principal_eigen_many(k, tds, fs.a0, _eigen_opts(cfg))
    lam0 = next((r.lambda0 for r in res if r.td.mu == 0.0), None)
    data = {"results": [r.summary() for r in res]}
    if lam0 is not None:
        data["hypotheses"] = dataclasses.asdict(check_hypotheses(fs, lam0))
        data["principal_eigenvalue_criterion"] = existence_check(fs.a0, lam0)
    out.json(data)
    for r in res:
        out.field(f"eigen_phi_xi{r.td.xi:+d}_mu{r.td.mu:g}.csv", r.phi)
    return EXIT_OK


def cmd_speed(cfg, args, out: Outputs) -> int:
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    data, rows = {}, []
    for xi in _directions(args.xi):
        sp, curve = _speed(cfg, k, xi, fs)
        rep = derivative_diagnostics(k, xi, fs.a0, sp, curve=curve)
        data[f"xi{xi:+d}"] = {**sp.summary(), "optimality_gap": rep.optimality_gap,
                              "derivative_margins": rep.margins,
                              "min_derivative_margin": min(m for _, m in rep.margins)}
        rows += [(xi, m, lam, q) for m, lam, q in sp.samples]
    out.json(data)
    out.csv("speed_samples.csv", ["xi", "mu", "lambda", "lambda_over_mu"], rows)
    return EXIT_OK


def cmd_steady(cfg, args, out: Outputs) -> int:
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    orbit = _steady(cfg, fs, k)
    out.json(orbit.summary())
    out.field("ustar.csv", orbit.u_star)
    return EXIT_OK


def cmd_simulate(cfg, args, out: Outputs) -> int:
    s = cfg.solver
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    orbit = _steady(cfg, fs, k)
    opts = SimOptions(x_left_cells=s.sim_left_cells, x_right_cells=s.sim_right_cells,
                      n_periods=args.periods or s.sim_periods, burn_in=s.sim_burn_in,
                      theta=s.sim_theta, step_stride=args.stride or s.sim_step_stride)
    data, rows = {}, []
    for xi in _directions(args.xi):
        sp, _ = _speed(cfg, k, xi, fs)
        res = simulate_front(fs, k, orbit, xi, opts, kind=args.kind or s.sim_kind,
                             mu=min(sp.mu_star, 1.0))
        fit = res.fit
        data[f"xi{xi:+d}"] = {"c_star": sp.c_star, "fitted_speed": fit.speed,
                              "relative_error": abs(fit.speed - sp.c_star) / sp.c_star,
                              "window": fit.window, "threshold": res.threshold}
        rows += [(xi, t, x) for t, x in zip(res.trace.times, res.trace.positions)]
    out.json(data)
    out.csv("front_trace.csv", ["xi", "t", "position"], rows)
    return EXIT_OK


def _wave_opts(cfg, args) -> WaveOptions:
    s = cfg.solver
    return WaveOptions(L_factor=s.wave_L_factor, tol=s.wave_tol, max_periods=s.wave_max_periods,
                       n_z=s.wave_n_z or None, step_stride=args.stride or s.wave_step_stride,
                       n_t_out=s.wave_n_t_out)


def cmd_wave(cfg, args, out: Outputs) -> int:
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    xi = int(args.xi)
    sp, _ = _speed(cfg, k, xi, fs)
    orbit = _steady(cfg, fs, k)
    opts = _wave_opts(cfg, args)
    wb = build_bounds(k, fs, orbit, sp, args.speed_multiple * sp.c_star, opts)
    wp = wave_iterate(wb, opts)
    rep = wave_checks(wp, wb)
    out.json({"bounds": wb.summary(), "profile": wp.summary(), "checks": rep.summary(),
              "iteration_changes": wp.changes})
    psi = psi_lab_frame(wp)
    step = max(1, args.eta_stride)
    rows = ((e, t, z, psi[i, kk, ll])
            for i, e in list(enumerate(wp.eta))[::step]
            for kk, t in enumerate(wp.t) for ll, z in enumerate(wp.zeta))
    out.csv("wave_psi.csv", ["eta", "t", "zeta", "psi"], rows)
    return EXIT_OK if rep.ok else EXIT_NUMERICAL


def verify_checks(cfg: ProblemConfig, quick: bool = True) -> dict[str, dict]:
    """Property suite on one configuration; each entry has ``value`` and ``ok``."""
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    opts = _eigen_opts(cfg)
    checks: dict[str, dict] = {}
    res = principal_eigen_many(k, [TiltedDirection(1, m) for m in (0.0, 0.5, 1.0)], fs.a0, opts)
    worst = max(r.residual for r in res)
    checks["eigen_residual"] = {"value": worst, "ok": worst < 1e-6}
    shifted = principal_eigen_many(k, [TiltedDirection(1, 0.5)], fs.a0 + 0.1, opts)[0]
    dev = abs(shifted.lambda0 - res[1].lambda0 - 0.1)
    checks["shift_identity"] = {"value": dev, "ok": dev < 1e-9}
    orbit = _steady(cfg, fs, k)
    checks["steady_seeds"] = {"value": orbit.seeds_agreement, "ok": orbit.seeds_agreement < 1e-8}
    for xi in (1, -1):
        sp, curve = _speed(cfg, k, xi, fs)
        rng = np.random.default_rng(cfg.solver.seed)
        triples = [(float(a), float(b), float(w)) for a, b, w in
                   zip(rng.uniform(0, 2 * sp.mu_star, 10), rng.uniform(0, 2 * sp.mu_star, 10),
                       rng.uniform(0, 1, 10))]
        rep = derivative_diagnostics(k, xi, fs.a0, sp, triples=triples, curve=curve)
        worst_conv = max(v for *_, v in rep.convexity)
        checks[f"convexity_xi{xi:+d}"] = {"value": worst_conv, "ok": rep.convexity_violations == 0}
        margin = min(m for _, m in rep.margins)
        checks[f"derivative_margin_xi{xi:+d}"] = {"value": margin, "ok": margin > 0}
        checks[f"optimality_xi{xi:+d}"] = {"value": rep.optimality_gap, "ok": rep.optimality_gap < 1e-4}
    cmp_rep = comparison_check(fs, k, orbit, n_pairs=10 if quick else 50, n_periods=1 if quick else 5,
                               cells=4, seed=cfg.solver.seed)
    checks["comparison"] = {"value": cmp_rep.worst_violation, "ok": cmp_rep.ok}
    sp, _ = _speed(cfg, k, 1, fs)
    wb = build_bounds(k, fs, orbit, sp, 1.5 * sp.c_star, WaveOptions(L_factor=cfg.solver.wave_L_factor))
    stride = 4 if quick else 1
    v_sup = residual_check(wb, "vbar", t_stride=stride)
    u_sup = residual_check(wb, "ubar", t_stride=stride)
    v_sub = residual_check(wb, "vlow", t_stride=stride)
    checks["residual_vbar"] = {"value": v_sup, "ok": v_sup >= -1e-9}
    checks["residual_ubar"] = {"value": u_sup, "ok": u_sup >= -1e-9}
    checks["residual_vlow"] = {"value": v_sub, "ok": v_sub <= 1e-8}
    from .waves import floor_conditions
    fl = floor_conditions(wb)
    checks["floor_conditions"] = {"value": min(fl.window, fl.positive, fl.tail, fl.cap), "ok": fl.ok}
    return checks


def cmd_verify(cfg, args, out: Outputs) -> int:
    checks = verify_checks(cfg, quick=not args.full)
    failed = sorted(name for name, c in checks.items() if not c["ok"])
    out.json({"checks": checks, "failed": failed, "ok": not failed})
    for name, c in checks.items():
        print(f"{'PASS' if c['ok'] else 'FAIL'}  {name}: {c['value']:.3e}")
    return EXIT_OK if not failed else EXIT_ACCEPTANCE


def _sweep_values(args) -> list[float]:
    if args.values:
        return [float(v) for v in args.values]
    if args.num < 1:
        raise ConfigError("--num must be positive")
    return [float(v) for v in np.linspace(args.start, args.stop, args.num)]


def cmd_sweep(cfg, args, out: Outputs) -> int:
    k, fs = cfg.make_kernel(), cfg.make_fitness()
    xi = int(args.xi)
    vals = _sweep_values(args)
    rows = []
    if args.param == "mu":
        if min(vals) <= 0:
            raise ConfigError("mu values must be positive")
        _, curve = _speed(cfg, k, xi, fs)
        lam = curve.many(vals)
        rows = [(m, l, l / m) for m, l in zip(vals, lam)]
        header = ["mu", "lambda", "lambda_over_mu"]
    else:
        # scale every non-constant mode of a0 by the amplitude factor
        mean = float(fs.a0.values.mean())
        for s in vals:
            a = FitnessSpec((fs.a0 + (-mean)) * s + mean, fs.b)
            sp, _ = _speed(cfg, k, xi, a)
            rows.append((s, sp.c_star, sp.mu_star))
        header = ["amplitude_factor", "c_star", "mu_star"]
    out.json({"xi": xi, "param": args.param, "rows": rows})
    out.csv("sweep.csv", header, rows)
    return EXIT_OK


HANDLERS = {"eigen": cmd_eigen, "speed": cmd_speed, "steady": cmd_steady, "simulate": cmd_simulate,
            "wave": cmd_wave, "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlspread", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"nlspread {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="TOML problem file")
        p.add_argument("--out", help="output directory (default: solver.output_dir)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = add("eigen", "principal spectrum point and eigenfunction")
    p.add_argument("--xi", choices=["1", "+1", "-1", "both"], default="1")
    p.add_argument("--mu", type=float, action="append", help="tilt rate (repeatable; default 0)")
    p = add("speed", "spreading speed c*(xi)")
    p.add_argument("--xi", choices=["1", "+1", "-1", "both"], default="both")
    add("steady", "periodic positive state u*")
    p = add("simulate", "front simulation and fitted speed")
    p.add_argument("--xi", choices=["1", "+1", "-1", "both"], default="both")
    p.add_argument("--kind", choices=["step", "exponential", "bump"])
    p.add_argument("--periods", type=int)
    p.add_argument("--stride", type=int)
    p = add("wave", "periodic traveling wave for c = multiple * c*")
    p.add_argument("--xi", choices=["1", "+1", "-1"], default="1")
    p.add_argument("--speed-multiple", type=float, default=1.5)
    p.add_argument("--stride", type=int)
    p.add_argument("--eta-stride", type=int, default=4, help="write every k-th eta node")
    p = add("verify", "property suite; exit 3 on any failure")
    p.add_argument("--full", action="store_true", help="full-size comparison and residual sampling")
    p = add("sweep", "lambda over mu, or c* over a0 amplitude factors")
    p.add_argument("--xi", choices=["1", "+1", "-1"], default="1")
    p.add_argument("--param", choices=["mu", "amplitude"], default="mu")
    p.add_argument("--values", nargs="+")
    p.add_argument("--start", type=float, default=0.25)
    p.add_argument("--stop", type=float, default=4.0)
    p.add_argument("--num", type=int, default=16)
    return ap


def run_subcommand(name: str, cfg: ProblemConfig, args: argparse.Namespace) -> int:
    if name not in HANDLERS:
        raise ConfigError(f"unknown subcommand {name!r}; expected one of {', '.join(SUBCOMMANDS)}")
    out = Outputs(cfg, name, getattr(args, "out", None))
    status = EXIT_NUMERICAL
    try:
        status = HANDLERS[name](cfg, args, out)
    finally:
        out.manifest(status)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        return run_subcommand(args.command, cfg, args)
    except (ConfigError, KernelError, FieldError, BelowMinimalSpeed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
