"""Cross-checks of the numerical solution at desk scale.

Each ``check_*`` function runs one acceptance criterion, times it and
returns a :class:`CheckResult` carrying the measured errors next to the
thresholds. ``run_all`` runs the full suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .boundary import boundary_at, solve_boundary
from .contract import (
    aligned_boundary_steps,
    contract_arrays,
    income_paths,
    monte_carlo_check,
    solve_lambda_star,
)
from .model import (
    ModelParams,
    derive_constants,
    first_best_consumption,
    laplace_normal_integral,
    normal_cdf,
    utility,
)
from .valuation import (
    ValuationContext,
    dual_J,
    hjb_residual,
    marginal_dual,
    premium_Q,
    premium_Q_infinity,
)
from .vi_oracle import solve_vi_fd

BASELINE = ModelParams(rho=0.04, r=0.04, mu=0.02, sigma=0.1, gamma=3.0, T=30.0, y0=1.0, w0=-5.0)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0
    time_limit: float | None = None

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.metrics.items())
        limit = f" (limit {self.time_limit:g} s)" if self.time_limit else ""
        return f"[{flag}] criterion {self.number} {self.name}: {shown}; {self.seconds:.2f} s{limit}"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "metrics": self.metrics, "seconds": self.seconds, "time_limit": self.time_limit}


def _short(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3e}"
    return str(v)


def _finish(number, name, t0, limit, checks: dict, metrics: dict) -> CheckResult:
    seconds = time.perf_counter() - t0
    ok = all(bool(v) for v in checks.values())
    if limit is not None:
        ok = ok and seconds <= limit
    metrics = {**metrics, **{f"ok_{k}": bool(v) for k, v in checks.items()}}
    return CheckResult(number, name, ok, metrics, seconds, limit)


def check_boundary_structure(params: ModelParams = BASELINE, n_steps: int = 256) -> CheckResult:
    """Monotone boundary in ``(z_inf, 1)`` ending at 1, residual at most 1e-9."""
    t0 = time.perf_counter()
    consts = derive_constants(params)
    grid = solve_boundary(consts, n_steps)
    v = grid.values
    res = grid.max_residual()
    checks = {
        "increasing": bool(np.all(np.diff(v) > 0)),
        "terminal": v[-1] == 1.0,
        "bracket": bool(np.all(v[:-1] > consts.z_inf) and np.all(v[:-1] < 1.0)),
        "residual": res <= 1e-9,
    }
    return _finish(1, "boundary structure", t0, 10.0, checks,
                   {"z_star_0": float(v[0]), "max_residual": res, "n_steps": n_steps})


def check_infinite_horizon(params: ModelParams = BASELINE, T: float = 200.0, n_steps: int = 2048) -> CheckResult:
    """Long-horizon boundary and premium against the closed-form limits."""
    t0 = time.perf_counter()
    consts = derive_constants(params.replace(T=T))
    grid = solve_boundary(consts, n_steps)
    ctx = ValuationContext(consts, grid)
    z = np.linspace(0.46, 5.0, 200)
    q = premium_Q(ctx, 0.0, z)
    qi = premium_Q_infinity(z, consts)
    rel = float(np.max(np.abs(q - qi) / np.abs(qi)))
    dz = abs(float(grid.values[0]) - consts.z_inf)
    return _finish(2, "infinite-horizon limit", t0, 60.0,
                   {"boundary": dz <= 1e-3, "premium": rel <= 1e-3},
                   {"abs_z0_minus_zinf": dz, "max_rel_Q_vs_Qinf": rel})


LAPLACE_C = (0.01, 0.04, 0.1, 0.5, 1.0)
LAPLACE_D = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)


def laplace_quadrature(c: float, d: float) -> float:
    """``int_0^inf e^{-c x} N(d sqrt x) dx`` by adaptive quadrature in ``u = sqrt x``."""
    f = lambda u: 2.0 * u * math.exp(-c * u * u) * normal_cdf(d * u)
    val, _ = quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    return val


def check_laplace() -> CheckResult:
    """Closed-form Laplace transform of the normal kernel against quadrature."""
    t0 = time.perf_counter()
    worst = 0.0
    for c in LAPLACE_C:
        for d in LAPLACE_D:
            exact = laplace_normal_integral(c, d)
            worst = max(worst, abs(exact - laplace_quadrature(c, d)) / abs(exact))
    return _finish(3, "Laplace identity", t0, 1.0, {"rel": worst <= 1e-8}, {"max_rel_err": worst})


def _nr_points(ctx, rng, n, t_max_frac=0.9):
    pts = []
    for _ in range(n):
        t = float(rng.uniform(0.0, t_max_frac * ctx.T))
        y = float(rng.uniform(0.5, 2.0))
        lam = ctx.boundary(t) * y**ctx.consts.gamma * float(rng.uniform(1.1, 5.0))
        pts.append((t, lam, y))
    return pts


def check_duality_gradient(params: ModelParams = BASELINE, n_steps: int = 256, n_points: int = 20,
                           seed: int = 2024) -> CheckResult:
    """``dJ/dlambda`` against a central difference of ``J`` at random NR points."""
    t0 = time.perf_counter()
    consts = derive_constants(params)
    ctx = ValuationContext(consts, solve_boundary(consts, n_steps))
    worst = 0.0
    for t, lam, y in _nr_points(ctx, np.random.default_rng(seed), n_points):
        eps = 1e-4 * lam
        fd = (dual_J(ctx, t, lam + eps, y) - dual_J(ctx, t, lam - eps, y)) / (2 * eps)
        m = marginal_dual(ctx, t, lam, y)
        worst = max(worst, abs(m - fd) / abs(m))
    return _finish(4, "duality gradient", t0, 60.0, {"rel": worst <= 1e-4}, {"max_rel_err": worst})


def check_fd_oracle(params: ModelParams = BASELINE, n_steps: int = 256, n_time: int = 400,
                    n_space: int = 400) -> CheckResult:
    """Integral representation against the finite-difference VI solution."""
    t0 = time.perf_counter()
    consts = derive_constants(params)
    ctx = ValuationContext(consts, solve_boundary(consts, n_steps))
    sol = solve_vi_fd(consts, n_time=n_time, n_space=n_space)
    ks = range(0, n_time, max(1, n_time // 20))
    js = np.arange(1, n_space, max(1, n_space // 40))
    dev = 0.0
    for k in ks:
        q = premium_Q(ctx, float(sol.times[k]), np.exp(sol.zeta[js]))
        dev = max(dev, float(np.max(np.abs(q - sol.Q_hat[k, js]))))
    qmax = float(sol.Q_hat.max())
    steps = np.abs(np.log(sol.boundary) - np.log(boundary_at(ctx.grid, sol.times))) / sol.d_zeta
    return _finish(5, "FD-VI cross-check", t0, 120.0,
                   {"premium": dev <= 1e-2 * qmax, "boundary": float(steps.max()) <= 2.0},
                   {"max_abs_dev": dev, "rel_to_max_Q": dev / qmax,
                    "max_boundary_gap_steps": float(steps.max())})


def check_monte_carlo(params: ModelParams = BASELINE, n_paths: int = 100_000, n_steps: int = 600,
                      seed: int = 7) -> CheckResult:
    """Simulated principal and agent values against ``J - lambda* w`` and ``w``."""
    t0 = time.perf_counter()
    consts = derive_constants(params)
    grid = solve_boundary(consts, aligned_boundary_steps(256, n_steps))
    ctx = ValuationContext(consts, grid)
    lam = solve_lambda_star(ctx, 0.0, params.y0, params.w0)
    r = monte_carlo_check(ctx, params, lam, n_paths, seed, n_steps)
    return _finish(6, "Monte Carlo duality", t0, 120.0,
                   {"principal": r.principal_ok(), "agent": r.agent_ok()},
                   {"lambda_star": lam, "principal": r.principal, "principal_target": r.principal_target,
                    "principal_se": r.principal_se, "principal_allowance": r.principal_allowance,
                    "agent": r.agent, "agent_se": r.agent_se, "agent_allowance": r.agent_allowance})


def path_invariants(params: ModelParams, n_paths: int = 1000, n_steps: int = 600, seed: int = 11,
                    n_boundary: int = 256) -> dict:
    """Contract invariants on simulated paths; returns measured extremes."""
    consts = derive_constants(params)
    ctx = ValuationContext(consts, solve_boundary(consts, aligned_boundary_steps(n_boundary, n_steps)))
    lam = solve_lambda_star(ctx, 0.0, params.y0, params.w0)
    times, Y = income_paths(params, n_steps, seed, np.arange(n_paths))
    a = contract_arrays(ctx, times, Y, lam)
    X, C, hit = a["X_star"], a["C_star"], a["jr_hit"]
    gap = a["w_star"] - a["U_d"]
    out = {
        "min_dX": float(np.min(np.diff(X, axis=1))),
        "min_w_minus_Ud": float(gap.min()),
        "max_hit_gap": float(np.max(np.abs(gap[hit]))) if hit.any() else 0.0,
        "n_hits": int(hit.sum()),
        "promise_error": float(np.max(np.abs(a["w_star"][:, 0] - params.w0))),
    }
    dlogc = np.diff(np.log(C), axis=1) / np.diff(times)
    quiet = ~hit[:, 1:]
    if params.rho == params.r:
        out["min_dC"] = float(np.min(np.diff(C, axis=1)))
    else:
        target = -(params.rho - params.r) / params.gamma
        out["max_slope_err"] = float(np.max(np.abs(dlogc[quiet] - target)))
    return out


def check_path_invariants(params: ModelParams = BASELINE, n_paths: int = 1000, n_steps: int = 600,
                          rho_high: float = 0.07) -> CheckResult:
    """Ratchet, participation and consumption-slope invariants on simulated paths."""
    t0 = time.perf_counter()
    a = path_invariants(params, n_paths, n_steps)
    b = path_invariants(params.replace(rho=rho_high), n_paths, n_steps)
    checks = {
        "X_monotone": a["min_dX"] >= 0 and b["min_dX"] >= 0,
        "participation": min(a["min_w_minus_Ud"], b["min_w_minus_Ud"]) >= -1e-5,
        "binding_at_hits": max(a["max_hit_gap"], b["max_hit_gap"]) <= 1e-5,
        "C_ratchet": a.get("min_dC", 0.0) >= 0,
        "C_slope": b["max_slope_err"] <= 1e-6,
    }
    metrics = {f"{k}": v for k, v in a.items()}
    metrics.update({f"rho_high_{k}": v for k, v in b.items()})
    return _finish(7, "path invariants", t0, None, checks, metrics)


def check_first_best(params: ModelParams = BASELINE) -> CheckResult:
    """First-best level, promise keeping and monotonicity."""
    t0 = time.perf_counter()
    c0 = first_best_consumption(0.0, 0.0, params.w0, params)
    f = lambda s: math.exp(-params.rho * s) * utility(first_best_consumption(0.0, s, params.w0, params), params.gamma)
    val, _ = quad(f, 0.0, params.T, epsabs=0.0, epsrel=1e-13, limit=200)
    s = np.linspace(0.0, params.T, 601)
    steps = []
    for rho in (params.rho, 0.07):
        p = params.replace(rho=rho)
        steps.append(float(np.max(np.diff(first_best_consumption(0.0, s, p.w0, p)))))
    checks = {"level": abs(c0 - 1.321750) <= 1e-5, "promise": abs(val - params.w0) <= 1e-8,
              "non_increasing": max(steps) <= 0.0}
    return _finish(8, "first-best benchmark", t0, None, checks,
                   {"C_FB_0": c0, "promise_error": abs(val - params.w0), "max_increment": max(steps)})


def check_homogeneity(params: ModelParams = BASELINE, n_steps: int = 256) -> CheckResult:
    """Degree-one homogeneity of ``J`` and the scaling of ``lambda*``."""
    t0 = time.perf_counter()
    consts = derive_constants(params)
    ctx = ValuationContext(consts, solve_boundary(consts, n_steps))
    g = params.gamma
    lam = solve_lambda_star(ctx, 0.0, 1.0, params.w0)
    worst_J = worst_lam = 0.0
    for k in (0.5, 2.0):
        for l0 in (0.3, lam, 3.0):
            base = dual_J(ctx, 0.0, l0, 1.0)
            worst_J = max(worst_J, abs(dual_J(ctx, 0.0, k**g * l0, k) - k * base) / abs(k * base))
        scaled = solve_lambda_star(ctx, 0.0, k, k ** (1 - g) * params.w0)
        worst_lam = max(worst_lam, abs(scaled - k**g * lam) / (k**g * lam))
    return _finish(9, "homogeneity", t0, None, {"J": worst_J <= 1e-8, "lambda_star": worst_lam <= 1e-8},
                   {"max_rel_J": worst_J, "max_rel_lambda_star": worst_lam})


def check_hjb(params: ModelParams = BASELINE, n_steps: int = 256, n_points: int = 10, seed: int = 99) -> CheckResult:
    """Pointwise HJB residual in NR and the gradient condition in JR."""
    t0 = time.perf_counter()
    consts = derive_constants(params)
    ctx = ValuationContext(consts, solve_boundary(consts, n_steps))
    rng = np.random.default_rng(seed)
    worst_pde = worst_grad = 0.0
    for region, lo, hi in (("NR", 1.2, 4.0), ("JR", 0.3, 0.9)):
        for _ in range(n_points):
            t = float(rng.uniform(0.5, 0.9 * params.T))
            y = float(rng.uniform(0.5, 2.0))
            lam = ctx.boundary(t) * y**params.gamma * float(rng.uniform(lo, hi))
            res = hjb_residual(ctx, t, lam, y)
            if region == "NR":
                worst_pde = max(worst_pde, abs(res.pde) / res.scale)
            else:
                worst_grad = max(worst_grad, abs(res.gradient))
    return _finish(10, "HJB pointwise", t0, None, {"pde": worst_pde <= 5e-3, "gradient": worst_grad <= 1e-6},
                   {"max_scaled_pde": worst_pde, "max_abs_gradient": worst_grad})


def run_all(params: ModelParams = BASELINE, boundary_steps: int = 256, scale: float = 1.0,
            fd_time: int = 400, fd_space: int = 400, sim_steps: int = 600) -> list[CheckResult]:
    """Run all ten checks. ``scale`` multiplies the Monte Carlo path counts."""
    mc_paths = max(1000, int(100_000 * scale))
    inv_paths = max(100, int(1000 * min(scale, 1.0)))
    return [
        check_boundary_structure(params, boundary_steps),
        check_infinite_horizon(params),
        check_laplace(),
        check_duality_gradient(params, boundary_steps),
        check_fd_oracle(params, boundary_steps, fd_time, fd_space),
        check_monte_carlo(params, mc_paths, sim_steps),
        check_path_invariants(params, inv_paths, sim_steps),
        check_first_best(params),
        check_homogeneity(params, boundary_steps),
        check_hjb(params, boundary_steps),
    ]
