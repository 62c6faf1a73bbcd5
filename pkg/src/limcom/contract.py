"""Optimal contract recovered from the dual solution, and its simulation.

Given the multiplier ``lambda*`` matching the promised value, the costate is
the running maximum

    X*_s = max(lambda*, max_{t0 <= xi <= s} e^{(rho-r)(xi-t0)} Y_xi^gamma z*(xi)),

consumption is ``C*_s = (e^{-(rho-r)(s-t0)} X*_s)**(1/gamma)`` and the
continuation value is ``dJ/dlambda`` evaluated at the current state. The
running maximum is taken over the simulation nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from .errors import DomainError, InfeasiblePromiseError, SolverError
from .model import DerivedConstants, ModelParams, autarky_value, utility
from .valuation import ValuationContext, dual_J, marginal_dual

HIT_RTOL = 1e-14


# ---------------------------------------------------------------------------
# multiplier


def solve_lambda_star(ctx: ValuationContext, t: float, y: float, w: float) -> float:
    """Multiplier ``lambda*`` with ``dJ/dlambda(t, lambda*, y) = w``.

    The root is found in the dual ratio ``z = lambda / y**gamma``, where the
    equation reads ``m(t, z) = w y**(gamma-1)`` independently of ``y``.

    Raises
    ------
    InfeasiblePromiseError
        If ``w < U_d(t, y)``, or ``w >= 0`` when ``gamma > 1``.
    SolverError
        ``BRACKET_FAILURE`` if no upper bracket is found below ``1e30``.
    """
    c = ctx.consts
    g = c.gamma
    ud = autarky_value(t, y, c.params)
    if w < ud:
        raise InfeasiblePromiseError(f"w={w!r} below autarky value {ud!r}")
    if g > 1 and w >= 0:
        raise InfeasiblePromiseError(f"w={w!r} must be negative when gamma > 1")
    b = ctx.boundary(t)
    scale = y ** (1.0 - g)
    target = w / scale

    def f(z):
        return marginal_dual(ctx, t, z, 1.0) - target

    if f(b) >= 0:
        return b * y**g
    hi = 2.0 * b
    while f(hi) < 0:
        hi *= 2.0
        if hi * y**g > 1e30:
            raise SolverError("BRACKET_FAILURE", "no bracket for lambda* below 1e30")
    z = brentq(f, b, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return z * y**g


# ---------------------------------------------------------------------------
# income


@dataclass(frozen=True, eq=False)
class IncomePath:
    """Income on a uniform grid, simulated exactly in log space."""

    times: np.ndarray
    values: np.ndarray
    seed: int
    path_index: int = 0


def standard_normals(seed: int, path_indices, n_steps: int) -> np.ndarray:
    """Normal draws keyed by ``(seed, path index, step index)``.

    Each path reads its own Philox stream (key ``seed``, path index in the
    top counter word); draw ``k`` is the inverse normal CDF of the ``k``-th
    64-bit word, so results do not depend on batch composition or order.
    """
    idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    out = np.empty((idx.size, n_steps))
    for row, p in enumerate(idx):
        raw = np.random.Philox(key=seed, counter=int(p) << 192).random_raw(n_steps)
        out[row] = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    return ndtri(out)


def income_paths(params: ModelParams, n_steps: int, seed: int, path_indices,
                 t0: float = 0.0, y0: float | None = None):
    """Matrix of income paths on ``linspace(t0, T, n_steps + 1)``."""
    if n_steps < 1:
        raise DomainError("GRID_TOO_SMALL", "n_steps must be at least 1")
    y0 = params.y0 if y0 is None else y0
    times = np.linspace(t0, params.T, n_steps + 1)
    dt = (params.T - t0) / n_steps
    eps = standard_normals(seed, path_indices, n_steps)
    log_y = np.zeros((eps.shape[0], n_steps + 1))
    log_y[:, 1:] = np.cumsum(params.sigma * math.sqrt(dt) * eps, axis=1)
    log_y += (params.mu - 0.5 * params.sigma**2) * (times - t0)
    return times, y0 * np.exp(log_y)


def simulate_income(params: ModelParams, n_steps: int, seed: int, path_index: int = 0) -> IncomePath:
    """One exact geometric Brownian path ``Y_{i+1} = Y_i exp((mu - s^2/2) dt + s sqrt(dt) e_i)``."""
    times, Y = income_paths(params, n_steps, seed, [path_index])
    return IncomePath(times, Y[0], seed, path_index)


# ---------------------------------------------------------------------------
# contract along paths


def aligned_boundary_steps(boundary_steps: int, sim_steps: int) -> int:
    """Smallest multiple of ``sim_steps`` that is at least ``boundary_steps``.

    Simulating on a subset of the boundary nodes means every simulated date
    uses a solved node value; other dates need a fresh boundary solve each.
    """
    return sim_steps * max(1, -(-boundary_steps // sim_steps))


@dataclass(frozen=True, eq=False)
class ContractPath:
    """Optimal contract along one income path (one entry per node)."""

    times: np.ndarray
    Y: np.ndarray
    X_star: np.ndarray
    lambda_s: np.ndarray
    C_star: np.ndarray
    w_star: np.ndarray
    U_d: np.ndarray
    jr_hit: np.ndarray

    @property
    def region(self) -> np.ndarray:
        return np.where(self.jr_hit, "JR_HIT", "NR")

    COLUMNS = ("t", "Y", "X_star", "lambda_s", "C_star", "w_star", "U_d", "region")

    def rows(self):
        reg = self.region
        for k in range(self.times.size):
            yield (self.times[k], self.Y[k], self.X_star[k], self.lambda_s[k],
                   self.C_star[k], self.w_star[k], self.U_d[k], reg[k])


def contract_arrays(ctx: ValuationContext, times: np.ndarray, Y: np.ndarray,
                    lambda_star: float, t0: float = 0.0, with_values: bool = True) -> dict:
    """Vectorised contract recursion for a batch of paths ``Y[path, node]``.

    Returns a dict with ``X_star``, ``lambda_s``, ``C_star``, ``jr_hit`` and,
    when ``with_values``, ``w_star`` and ``U_d``.
    """
    c = ctx.consts
    p = c.params
    g = c.gamma
    Y = np.atleast_2d(Y)
    b = ctx.boundary(times)
    drift = np.exp((p.rho - p.r) * (times - t0))
    barrier = drift * Y**g * b
    running = np.maximum.accumulate(barrier, axis=1)
    X = np.maximum(running, lambda_star)
    hit = np.zeros(X.shape, dtype=bool)
    hit[:, 1:] = X[:, 1:] > X[:, :-1] * (1.0 + HIT_RTOL)
    hit[:, 0] = barrier[:, 0] > lambda_star * (1.0 + HIT_RTOL)
    lam = X / drift
    out = {"X_star": X, "lambda_s": lam, "C_star": lam ** (1.0 / g), "jr_hit": hit}
    if with_values:
        w = np.empty(X.shape)
        ud = np.empty(X.shape)
        for k, s in enumerate(times):
            ud[:, k] = autarky_value(s, Y[:, k], p)
            # the regulated ratio never lies strictly inside the jump region
            lam_k = np.maximum(lam[:, k], b[k] * Y[:, k] ** g)
            w[:, k] = marginal_dual(ctx, float(s), lam_k, Y[:, k])
        out["w_star"] = w
        out["U_d"] = ud
    return out


def run_contract(ctx: ValuationContext, path: IncomePath, lambda_star: float, t0: float = 0.0) -> ContractPath:
    """Costate, consumption and continuation value along ``path``."""
    if lambda_star <= 0:
        raise DomainError("NONPOSITIVE_ARGUMENT", "lambda_star must be positive")
    if abs(path.times[0] - t0) > 1e-12 or path.times[-1] > ctx.T + 1e-12:
        raise DomainError("TIME_OUT_OF_RANGE", "path must start at t0 and end by T")
    arr = contract_arrays(ctx, path.times, path.values[None, :], lambda_star, t0)
    return ContractPath(path.times, path.values, *(arr[k][0] for k in
                        ("X_star", "lambda_s", "C_star", "w_star", "U_d", "jr_hit")))


# ---------------------------------------------------------------------------
# infinite horizon


@dataclass(frozen=True)
class InfiniteHorizonContract:
    """Stationary contract in the limit of an infinite horizon."""

    consts: DerivedConstants
    y0: float
    w: float
    lambda_star: float

    def promised_value(self, lam, y):
        """``w(lambda, y)`` for ``lambda >= z_inf y**gamma``."""
        c = self.consts
        g, K, am = c.gamma, c.K, c.alpha_minus
        lam = np.asarray(lam, dtype=float)
        y = np.asarray(y, dtype=float)
        val = (-(1.0 / g) / K / am * (c.z_inf * y**g) ** (c.power - am) * lam**am
               + lam**c.power / ((1.0 - g) * K))
        return float(val) if val.ndim == 0 else val

    def costate(self, times, Y):
        """``(X*, lambda_s)`` along income paths sampled at ``times``."""
        c = self.consts
        p = c.params
        Y = np.atleast_2d(Y)
        drift = np.exp((p.rho - p.r) * (np.asarray(times) - times[0]))
        X = np.maximum(np.maximum.accumulate(c.z_inf * drift * Y**c.gamma, axis=1), self.lambda_star)
        return X, X / drift

    def consumption(self, times, Y):
        return self.costate(times, Y)[1] ** (1.0 / self.consts.gamma)


def infinite_horizon_contract(consts: DerivedConstants, y: float, w: float) -> InfiniteHorizonContract:
    """Solve the stationary promise-keeping equation for ``lambda_inf*``.

    Raises
    ------
    InfeasiblePromiseError
        If ``w`` is below the perpetual autarky value ``y**(1-g)/((1-g) rho_hat)``.
    """
    g = consts.gamma
    floor = y ** (1.0 - g) / ((1.0 - g) * consts.rho_hat)
    if w < floor or (g > 1 and w >= 0):
        raise InfeasiblePromiseError(f"w={w!r} infeasible; autarky value {floor!r}")
    lam_b = consts.z_inf * y**g
    probe = InfiniteHorizonContract(consts, y, w, lam_b)
    if w - floor <= 1e-15 * abs(floor):
        return probe

    def f(lam):
        return probe.promised_value(lam, y) - w

    hi = 2.0 * lam_b
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e30:
            raise SolverError("BRACKET_FAILURE", "no bracket for lambda_inf below 1e30")
    lam = brentq(f, lam_b, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return InfiniteHorizonContract(consts, y, w, lam)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MonteCarloResult:
    """Monte Carlo estimates of the principal's and the agent's values.

    ``*_allowance`` is the estimated time-discretisation bias of the fine
    estimate, ``|fine - coarse| / (sqrt(2) - 1)``, from a half-resolution
    run on the same paths (the monitoring bias of a running maximum scales
    with ``sqrt(dt)``).
    """

    principal: float
    principal_se: float
    agent: float
    agent_se: float
    principal_target: float
    agent_target: float
    principal_allowance: float
    agent_allowance: float
    n_paths: int
    n_steps: int

    def principal_error(self) -> float:
        return abs(self.principal - self.principal_target)

    def agent_error(self) -> float:
        return abs(self.agent - self.agent_target)

    def principal_ok(self, k: float = 3.0) -> bool:
        return self.principal_error() <= k * self.principal_se + self.principal_allowance

    def agent_ok(self, k: float = 3.0) -> bool:
        return self.agent_error() <= k * self.agent_se + self.agent_allowance


def _trapezoid(f, dt):
    return dt * (f[:, 1:-1].sum(axis=1) + 0.5 * (f[:, 0] + f[:, -1]))


def _path_values(ctx, times, Y, lambda_star, p):
    dt = times[1] - times[0]
    C = contract_arrays(ctx, times, Y, lambda_star, with_values=False)["C_star"]
    principal = _trapezoid(np.exp(-p.r * times) * (Y - C), dt)
    agent = _trapezoid(np.exp(-p.rho * times) * utility(C, p.gamma), dt)
    return principal, agent


def monte_carlo_check(ctx: ValuationContext, params: ModelParams, lambda_star: float,
                      n_paths: int = 100_000, seed: int = 0, n_steps: int = 600,
                      chunk: int = 10_000) -> MonteCarloResult:
    """Duality check by simulation.

    Estimates ``E int_0^T e^{-rs}(Y_s - C*_s) ds`` (target
    ``J(0, lambda*, y0) - lambda* w0``) and ``E int_0^T e^{-rho s} u(C*_s) ds``
    (target ``w0``) with trapezoidal time integration on the simulation grid.
    """
    if n_paths < 1000:
        raise DomainError("TOO_FEW_PATHS", "n_paths must be at least 1000")
    if n_steps % 2:
        raise DomainError("ODD_STEPS", "n_steps must be even")
    vals = np.empty((4, n_paths))  # principal, agent, then both on the coarse grid
    for start in range(0, n_paths, chunk):
        idx = np.arange(start, min(start + chunk, n_paths))
        times, Y = income_paths(params, n_steps, seed, idx)
        fine = _path_values(ctx, times, Y, lambda_star, params)
        coarse = _path_values(ctx, times[::2], Y[:, ::2], lambda_star, params)
        vals[:, idx] = np.vstack(fine + coarse)
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(n_paths)
    factor = 1.0 / (math.sqrt(2.0) - 1.0)
    J = dual_J(ctx, 0.0, lambda_star, params.y0)
    return MonteCarloResult(
        principal=float(mean[0]), principal_se=float(se[0]),
        agent=float(mean[1]), agent_se=float(se[1]),
        principal_target=float(J - lambda_star * params.w0), agent_target=float(params.w0),
        principal_allowance=float(abs(mean[0] - mean[2]) * factor),
        agent_allowance=float(abs(mean[1] - mean[3]) * factor),
        n_paths=int(n_paths), n_steps=int(n_steps),
    )
