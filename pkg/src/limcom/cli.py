"""Command-line front end.

Subcommands ``boundary``, ``value``, ``simulate``, ``first-best``,
``infinite`` and ``verify`` write CSV/JSON files to ``--out``. Exit codes:
0 success, 1 verification or solver failure, 2 invalid parameters,
3 infeasible promised value.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import verify as checks
from .boundary import boundary_residual, solve_boundary
from .contract import (
    ContractPath,
    aligned_boundary_steps,
    contract_arrays,
    income_paths,
    infinite_horizon_contract,
    monte_carlo_check,
    solve_lambda_star,
)
from .errors import DomainError, InfeasiblePromiseError, ParameterError, SolverError
from .io import RunConfig, load_config, write_csv, write_json
from .model import check_promise, derive_constants, first_best_consumption
from .valuation import ValuationContext, dual_J, premium_Q, stop_value_g
from .vi_oracle import solve_vi_fd

EXIT_OK, EXIT_FAIL, EXIT_PARAMS, EXIT_INFEASIBLE = 0, 1, 2, 3


def _context(cfg: RunConfig, n_steps: int | None = None) -> ValuationContext:
    consts = derive_constants(cfg.params())
    grid = solve_boundary(consts, n_steps or cfg.boundary_steps)
    return ValuationContext(consts, grid, quad_tol=cfg.quad_tol, tail_tol=cfg.tail_tol)


def _contract_rows(times, Y, arr, k):
    path = ContractPath(times, Y[k], *(arr[n][k] for n in
                        ("X_star", "lambda_s", "C_star", "w_star", "U_d", "jr_hit")))
    return ContractPath.COLUMNS, path.rows()


def cmd_boundary(cfg: RunConfig, out: Path) -> int:
    ctx = _context(cfg)
    grid = ctx.grid
    write_csv(out / "boundary.csv", ("t", "z_star"), zip(grid.times, grid.values), cfg.sha256())
    # residual recomputed from the stored values
    res = max(abs(boundary_residual(grid, i, float(grid.values[i]))) for i in range(grid.n_steps))
    print(f"z_star(0)    = {grid.values[0]:.12g}")
    print(f"z_inf        = {ctx.consts.z_inf:.12g}")
    print(f"max residual = {res:.3e}")
    return EXIT_OK


def cmd_value(cfg: RunConfig, out: Path) -> int:
    ctx = _context(cfg)
    c = ctx.consts
    times = np.linspace(0.0, c.T, cfg.value_times)
    z = np.geomspace(0.9 * c.z_inf, cfg.value_z_max, cfg.value_nz)
    rows = []
    for t in times:
        q = np.atleast_1d(premium_Q(ctx, float(t), z))
        g = np.atleast_1d(stop_value_g(ctx, float(t), z))
        rows.extend(zip(np.full(z.size, t), z, q, g))
    write_csv(out / "value_surface.csv", ("t", "z", "Q", "g"), rows, cfg.sha256())
    fd = solve_vi_fd(c, n_time=cfg.fd_time, n_space=cfg.fd_space)
    write_csv(out / "fd_surface.csv", ("t", "zeta", "Q_hat"),
              ((t, x, q) for t, row in zip(fd.times, fd.Q_hat) for x, q in zip(fd.zeta, row)),
              cfg.sha256())
    write_csv(out / "fd_boundary.csv", ("t", "z_fd"), zip(fd.times, fd.boundary), cfg.sha256())
    print(f"wrote {len(rows)} lattice points; FD lattice {fd.Q_hat.shape[0]}x{fd.Q_hat.shape[1]}")
    return EXIT_OK


def _simulation_setup(cfg: RunConfig):
    params = cfg.params()
    derive_constants(params)
    check_promise(params)
    ctx = _context(cfg, aligned_boundary_steps(cfg.boundary_steps, cfg.sim_steps))
    lam = solve_lambda_star(ctx, 0.0, params.y0, params.w0)
    return params, ctx, lam


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    params, ctx, lam = _simulation_setup(cfg)
    h = cfg.sha256()
    n_csv = min(cfg.csv_paths, cfg.paths)
    times, Y = income_paths(params, cfg.sim_steps, cfg.seed, np.arange(n_csv))
    arr = contract_arrays(ctx, times, Y, lam)
    for k in range(n_csv):
        header, rows = _contract_rows(times, Y, arr, k)
        write_csv(out / f"contract_path_{k:03d}.csv", header, rows, h)
    J = dual_J(ctx, 0.0, lam, params.y0)
    mc = monte_carlo_check(ctx, params, lam, max(cfg.paths, 1000), cfg.seed, cfg.sim_steps)
    summary = {
        "config_sha256": h,
        "lambda_star": lam,
        "z_star_0": float(ctx.grid.values[0]),
        "boundary_steps": ctx.grid.n_steps,
        "J": J,
        "principal_value": J - lam * params.w0,
        "C_star_0": lam ** (1.0 / params.gamma),
        "C_FB_0": first_best_consumption(0.0, 0.0, params.w0, params),
        "mc": {
            "n_paths": mc.n_paths, "n_steps": mc.n_steps,
            "principal": mc.principal, "principal_se": mc.principal_se,
            "principal_allowance": mc.principal_allowance, "principal_ok": mc.principal_ok(),
            "agent": mc.agent, "agent_se": mc.agent_se,
            "agent_allowance": mc.agent_allowance, "agent_ok": mc.agent_ok(),
        },
    }
    write_json(out / "summary.json", summary)
    print(f"lambda* = {lam:.12g}; J - lambda* w = {summary['principal_value']:.8g}")
    print(f"MC principal {mc.principal:.6g} +- {mc.principal_se:.2g}; agent {mc.agent:.6g} +- {mc.agent_se:.2g}")
    return EXIT_OK


def _rising_path(ctx, params, lam, seed, n_steps, limit=1000, batch=100):
    """First path index whose income ends above its start and whose C* ends above first-best."""
    fb_T = first_best_consumption(0.0, params.T, params.w0, params)
    for start in range(0, limit, batch):
        idx = np.arange(start, start + batch)
        times, Y = income_paths(params, n_steps, seed, idx)
        C = contract_arrays(ctx, times, Y, lam, with_values=False)["C_star"]
        ok = np.nonzero((Y[:, -1] > Y[:, 0]) & (C[:, -1] > fb_T))[0]
        if ok.size:
            return int(idx[ok[0]])
    raise SolverError("NO_RISING_PATH", f"no qualifying path among the first {limit}")


def cmd_first_best(cfg: RunConfig, out: Path) -> int:
    params, ctx, lam = _simulation_setup(cfg)
    k = cfg.fb_path if cfg.fb_path >= 0 else _rising_path(ctx, params, lam, cfg.seed, cfg.sim_steps)
    times, Y = income_paths(params, cfg.sim_steps, cfg.seed, [k])
    C = contract_arrays(ctx, times, Y, lam, with_values=False)["C_star"][0]
    fb = first_best_consumption(0.0, times, params.w0, params)
    write_csv(out / "first_best.csv", ("t", "Y", "C_FB", "C_star"), zip(times, Y[0], fb, C), cfg.sha256())
    summary = {
        "config_sha256": cfg.sha256(),
        "fb_path": k,
        "C_FB_0": float(fb[0]),
        "C_star_0": float(C[0]),
        "C_star_exceeds_first_best_at_T": bool(C[-1] > fb[-1]),
        "C_star_below_first_best_at_0": bool(C[0] < fb[0]),
    }
    write_json(out / "first_best.json", summary)
    print(f"path {k}: C_FB(0) = {fb[0]:.7f}; C*(0) = {C[0]:.7f}; "
          f"C*(T) > C_FB(T): {summary['C_star_exceeds_first_best_at_T']}")
    return EXIT_OK


def cmd_infinite(cfg: RunConfig, out: Path) -> int:
    params = cfg.params()
    consts = derive_constants(params)
    ih = infinite_horizon_contract(consts, params.y0, params.w0)
    times, Y = income_paths(params, cfg.sim_steps, cfg.seed, [0])
    X, lam_s = ih.costate(times, Y)
    w = ih.promised_value(lam_s[0], Y[0])
    ud = Y[0] ** (1 - params.gamma) / ((1 - params.gamma) * consts.rho_hat)
    write_csv(out / "infinite_path.csv", ("t", "Y", "X_star", "lambda_s", "C_star", "w_star", "U_d"),
              zip(times, Y[0], X[0], lam_s[0], lam_s[0] ** (1 / params.gamma), w, ud), cfg.sha256())
    write_json(out / "infinite.json", {"config_sha256": cfg.sha256(), "z_inf": consts.z_inf,
                                       "alpha_minus": consts.alpha_minus, "alpha_plus": consts.alpha_plus,
                                       "lambda_inf": ih.lambda_star,
                                       "C_star_0": ih.lambda_star ** (1 / params.gamma)})
    print(f"z_inf = {consts.z_inf:.12g}; lambda_inf* = {ih.lambda_star:.12g}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    params = cfg.params()
    derive_constants(params)
    results = checks.run_all(params, cfg.boundary_steps, cfg.verify_scale, cfg.fd_time,
                             cfg.fd_space, cfg.sim_steps)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    write_json(out / "verify_report.json", {"config_sha256": cfg.sha256(), "passed": ok,
                                            "checks": [r.as_dict() for r in results]})
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "boundary": cmd_boundary,
    "value": cmd_value,
    "simulate": cmd_simulate,
    "first-best": cmd_first_best,
    "infinite": cmd_infinite,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limcom", description=__doc__.split("\n\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value configuration file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one configuration key (repeatable)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    common.add_argument("--steps", type=int, help="simulation time steps")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.replace("cmd_", "").replace("_", " "))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    for key, flag in (("seed", args.seed), ("paths", args.paths), ("sim_steps", args.steps),
                      ("out", args.out)):
        if flag is not None:
            overrides.append(f"{key}={flag}")
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ParameterError as err:
        print(f"invalid parameters: {err}", file=sys.stderr)
        return EXIT_PARAMS
    except InfeasiblePromiseError as err:
        print(f"infeasible promised value: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
