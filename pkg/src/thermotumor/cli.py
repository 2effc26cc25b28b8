"""
Command-line driver.

Subcommands::

    thermotumor run --config PATH --out DIR
    thermotumor mms --levels N --out DIR
    thermotumor fixedpoint --out DIR

Exit codes: 0 success, 1 invariant violation, 2 step failure, 3 config error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np

from .config import ConfigError, RunConfig, parse_config, render_config
from .constitutive import ModelParams
from .diagnostics import Suprema, emit_row, mass_rate_residual, mass_rate_scale
from .dynamics import SimState, StepConfig, StepFailure, StepRejected, advance, growth_source
from .lattice import ScalarField, laplacian_values
from .output import DiagnosticsWriter, write_snapshot

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VIOLATION, EXIT_STEP_FAILURE, EXIT_CONFIG = 0, 1, 2, 3
MAX_HALVINGS = 12


def initial_state(cfg: RunConfig) -> SimState:
    """Build the initial state selected by ``cfg.initial``."""
    grid, p = cfg.grid, cfg.params
    if cfg.initial == "uniform":
        return SimState.uniform(grid, cfg.phi_mean, cfg.theta0, cfg.sigma0)
    if cfg.initial == "fixed_point":
        s_star = p.fixed_point_sigma
        if abs(p.A - p.P * s_star) > 1e-12 * max(1.0, p.A):
            raise ConfigError(
                f"fixed_point preset requires A = P*B*sigma_B/(B+C) = {p.P * s_star!r}, got A = {p.A!r}"
            )
        return SimState.uniform(grid, 1.0, cfg.theta0, s_star)
    if cfg.initial == "random_seeded":
        rng = np.random.default_rng(cfg.seed)
        phi = cfg.phi_mean + rng.uniform(-0.05, 0.05, grid.shape)
        # two Jacobi relaxation sweeps; each keeps the mean exactly
        omega = 1.0 / sum(2.0 / h**2 for h in grid.spacing)
        for _ in range(2):
            phi = phi + omega * laplacian_values(phi, grid.spacing)
        sigma = rng.uniform(0.0, 1.0, grid.shape)
        return SimState(0.0, ScalarField(grid, phi), ScalarField.constant(grid, cfg.theta0),
                        ScalarField(grid, sigma))
    if cfg.initial == "tumor_seed":
        centre = [0.5 * length for length in grid.domain_lengths]
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.centers(), centre)))
        phi = -np.tanh((r - cfg.seed_radius) / (math.sqrt(2.0) * cfg.seed_width))
        return SimState(0.0, ScalarField(grid, phi), ScalarField.constant(grid, cfg.theta0),
                        ScalarField.constant(grid, cfg.sigma0))
    raise ConfigError(f"unknown initial condition {cfg.initial!r}")


@dataclass
class RunResult:
    status: int
    steps: int
    rejections: int
    final: SimState
    suprema: Suprema
    message: str = ""


def simulate(cfg: RunConfig, out_dir: str | Path | None = None, continue_on_violation: bool = False,
             stream: TextIO | None = None) -> RunResult:
    """
    Integrate to ``cfg.T_final``, writing diagnostics and snapshots under ``out_dir``.

    A rejected step (``1 + dphi <= 0`` somewhere) halves ``dt`` for the rest of
    the run.  Besides the per-state invariants, every step checks the global
    nutrient bound ``max(max sigma_0, sigma_B)`` and, where the mass source is
    non-negative, that the mean of phi does not decrease.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(render_config(cfg), encoding="utf-8")
    p = cfg.params
    state = initial_state(cfg)
    sigma_bound = max(state.sigma.max(), p.sigma_B)
    problems = state.validate(sigma_bound)
    if problems:
        raise ConfigError("initial state invalid: " + "; ".join(problems))

    step_cfg = StepConfig(cfg.dt, cfg.lin_tol, cfg.lin_maxiter or None)
    sup = Suprema()
    status, steps, rejections, message = EXIT_OK, 0, 0, ""
    snap_dir = out / "snapshots"
    write_snapshot(state, 0, snap_dir)
    t_end = cfg.T_final
    with DiagnosticsWriter(out / "diagnostics.csv") as writer:
        while state.t < t_end * (1 - 1e-12):
            dt = min(step_cfg.dt, t_end - state.t)
            this_cfg = step_cfg if dt == step_cfg.dt else StepConfig(dt, step_cfg.lin_tol, step_cfg.lin_maxiter)
            prev = state
            try:
                state, report = advance(prev, this_cfg, p)
            except StepRejected as exc:
                rejections += 1
                if rejections > MAX_HALVINGS:
                    status, message = EXIT_STEP_FAILURE, str(exc)
                    break
                step_cfg = step_cfg.halved()
                log.info("step rejected at t=%g, dt -> %g: %s", prev.t, step_cfg.dt, exc)
                continue
            except StepFailure as exc:
                status, message = EXIT_STEP_FAILURE, str(exc)
                break
            steps += 1
            violations = list(report.violations)
            if state.sigma.max() > sigma_bound + step_cfg.bound_tol:
                violations.append(f"sigma above global bound {sigma_bound:.17g}")
            src = growth_source(prev.phi.values, prev.sigma.values, p)
            res_mass = mass_rate_residual(prev, state, p, dt)
            tol_mass = 10 * cfg.lin_tol * mass_rate_scale(prev, p)
            if res_mass > tol_mass:
                violations.append(f"mass-rate residual {res_mass:.3e} > {tol_mass:.3e}")
            if np.all(src >= 0) and np.mean(state.phi.values) < np.mean(prev.phi.values) - tol_mass * dt:
                violations.append("mean(phi) decreased although the mass source is non-negative")
            sup.update(state, report.mu, p, dt)
            if steps % cfg.diag_every == 0:
                writer.write(emit_row(prev, state, report.mu, p, dt))
            if steps % cfg.snapshot_every == 0:
                write_snapshot(state, steps, snap_dir)
            if violations:
                message = "; ".join(violations)
                log.warning("t=%g: %s", state.t, message)
                status = EXIT_VIOLATION
                if not continue_on_violation:
                    break

    result = RunResult(status, steps, rejections, state, sup, message)
    line = (
        f"summary status={status} steps={steps} rejections={rejections} t={state.t:.6g} "
        + sup.summary()
    )
    (out / "summary.txt").write_text(line + ("\n" + message if message else "") + "\n", encoding="utf-8")
    if stream is not None:
        print(line, file=stream)
        if message:
            print(message, file=stream)
    return result


def run(cfg: RunConfig, out_dir=None, continue_on_violation: bool = False, stream: TextIO | None = None) -> int:
    """Run a configuration and return its exit status."""
    return simulate(cfg, out_dir, continue_on_violation, stream).status


def fixed_point_config(steps: int = 100, n: int = 64, dt: float = 1e-4) -> RunConfig:
    """Uniform stationary state: phi = 1, sigma = B sigma_B/(B+C), A = P sigma, theta = 1."""
    base = ModelParams(P=2.0, B=1.0, C=1.0, sigma_B=0.9)
    params = base.replace(A=base.P * base.fixed_point_sigma)
    from .lattice import GridSpec

    return RunConfig(params=params, grid=GridSpec.unit_box(n, n), dt=dt, T_final=steps * dt,
                     initial="fixed_point", theta0=1.0, snapshot_every=steps)


def _cmd_run(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        return run(cfg, args.out, args.continue_on_violation, sys.stdout)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_fixedpoint(args) -> int:
    from .output import read_diagnostics

    cfg = fixed_point_config()
    status = run(cfg, args.out, args.continue_on_violation, sys.stdout)
    header, data = read_diagnostics(Path(args.out) / "diagnostics.csv")
    worst = max(float(np.max(data[:, header.index(c)])) for c in ("res_energy", "res_mass", "res_theta"))
    print(f"fixed point: max residual {worst:.3e} (limit 1e-09)")
    if status == EXIT_OK and worst > 1e-9:
        status = EXIT_VIOLATION
    return status


def _cmd_mms(args) -> int:
    from .verification import convergence_study, default_case

    if args.levels < 3:
        print("mms needs --levels >= 3", file=sys.stderr)
        return EXIT_CONFIG
    case = default_case(ModelParams(sigma_B=0.5))
    grids = [args.base * 2**k for k in range(args.levels)]
    table = convergence_study(case, grids, dt_rule=lambda h: h * h / 8, t_final=args.t_final,
                              dt_check=not args.no_dt_check)
    path = table.write_csv(Path(args.out) / "mms_orders.csv")
    for lv in table.levels:
        print(f"n={lv.n:4d} dt={lv.dt:.3e} err_phi={lv.err_phi:.3e} err_theta={lv.err_theta:.3e} "
              f"err_sigma={lv.err_sigma:.3e} orders=({lv.order_phi:.3f}, {lv.order_theta:.3f}, "
              f"{lv.order_sigma:.3f})")
    print(f"wrote {path}; minimum order {table.min_order():.3f}")
    return EXIT_OK if table.min_order() >= 1.9 else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    common.add_argument("--continue-on-violation", action="store_true",
                        help="keep integrating after an invariant violation")
    parser = argparse.ArgumentParser(prog="thermotumor", description=__doc__.split("\n\n")[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="run a configuration file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_mms = sub.add_parser("mms", parents=[common], help="manufactured-solution convergence study")
    p_mms.add_argument("--levels", type=int, default=3)
    p_mms.add_argument("--base", type=int, default=32)
    p_mms.add_argument("--t-final", type=float, default=0.02)
    p_mms.add_argument("--no-dt-check", action="store_true")
    p_mms.add_argument("--out", default="mms_out")
    p_mms.set_defaults(func=_cmd_mms)

    p_fp = sub.add_parser("fixedpoint", parents=[common], help="fixed-point smoke test")
    p_fp.add_argument("--out", default="fixedpoint_out")
    p_fp.set_defaults(func=_cmd_fixedpoint)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
