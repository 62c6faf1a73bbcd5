"""Free boundary of the stopping problem by backward recursive integration.

At each node ``t_i``, working backwards from ``z*(T) = 1``, the boundary
value is the root of

    R(c) = c**p / (1-g) int e^{-K(s-t_i)} N(dg(s-t_i, c/z*(s))) ds
           - 1/(1-g) int e^{-rho_hat(s-t_i)} N(d1(s-t_i, c/z*(s))) ds,

with ``p = 1/g - 1``, i.e. value matching ``Q(t_i, z*(t_i)) = 0`` of the
integral representation of the early-exercise premium. Only the boundary on
``[t_i, T]`` enters, so the recursion is explicit apart from the scalar
root at each node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import DomainError, SolverError
from .model import DerivedConstants
from .quadrature import TimeRule, build_rule

METHODS = ("gauss", "trapezoid")


@dataclass(frozen=True, eq=False)
class BoundaryGrid:
    """Free boundary ``z*(t_i)`` on a time grid.

    Attributes
    ----------
    times : ndarray
        Grid ``0 = t_0 < ... < t_N = T``.
    values : ndarray
        Boundary values, strictly increasing, ``values[-1] == 1``.
    consts : DerivedConstants
    method : str
        Time quadrature used by the solver, ``"gauss"`` or ``"trapezoid"``.
    residuals : ndarray
        Integral-equation residual at each solved node (zero at ``T``).
    """

    times: np.ndarray
    values: np.ndarray
    consts: DerivedConstants
    method: str = "gauss"
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def log_values(self) -> np.ndarray:
        return np.log(self.values)

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def kernel_args(consts: DerivedConstants, rule: TimeRule, log_b: np.ndarray, log_z):
    """Kernel arguments and discount weights on the rule.

    Returns ``(d1, dg, wk, wr)`` where ``d1``/``dg`` have shape
    ``log_z.shape + (len(rule),)`` and ``wk = w e^{-K xi}``,
    ``wr = w e^{-rho_hat xi}``.
    """
    xi = rule.xi
    lz = np.asarray(log_z, dtype=float)[..., None]
    sq = consts.vol * np.sqrt(xi)
    x = lz - log_b
    d1 = (x + consts.drift_1 * xi) / sq
    dg = (x + consts.drift_gamma * xi) / sq
    wk = rule.weights * np.exp(-consts.K * xi)
    wr = rule.weights * np.exp(-consts.rho_hat * xi)
    return d1, dg, wk, wr


def kernel_sums(consts: DerivedConstants, rule: TimeRule, log_b: np.ndarray,
                log_z, sign: int = 1):
    """Discounted kernel integrals over the rule.

    Returns ``(SK, SR)`` with ``SK = sum w e^{-K xi} N(sign dg)`` and
    ``SR = sum w e^{-rho_hat xi} N(sign d1)``; ``log_z`` may be an array, in
    which case one pair of sums is returned per entry.
    """
    d1, dg, wk, wr = kernel_args(consts, rule, log_b, log_z)
    return ndtr(sign * dg) @ wk, ndtr(sign * d1) @ wr


def _trapezoid_sums(consts: DerivedConstants, times, log_values, i, log_c):
    # plain composite trapezoid over the nodes t_j, j >= i
    xi = times[i:] - times[i]
    lb = log_values[i:].copy()
    lb[0] = log_c
    d1 = np.zeros(xi.size)
    dg = np.zeros(xi.size)
    sq = consts.vol * np.sqrt(xi[1:])
    x = log_c - lb[1:]
    d1[1:] = (x + consts.drift_1 * xi[1:]) / sq
    dg[1:] = (x + consts.drift_gamma * xi[1:]) / sq
    w = np.empty(xi.size)
    h = np.diff(xi)
    w[:-1] = 0.5 * h
    w[-1] = 0.0
    w[1:] += 0.5 * h
    return (ndtr(dg) * np.exp(-consts.K * xi)) @ w, (ndtr(d1) * np.exp(-consts.rho_hat * xi)) @ w


def _residual(consts, times, log_values, i, c, method, rule=None):
    g = consts.gamma
    lc = np.log(c)
    if method == "trapezoid":
        sk, sr = _trapezoid_sums(consts, times, log_values, i, lc)
    else:
        if rule is None:
            rule = build_rule(times, times[i])
        lv = log_values.copy()
        lv[i] = lc
        sk, sr = kernel_sums(consts, rule, rule.log_boundary(lv), lc)
    return float((c ** consts.power * sk - sr) / (1.0 - g))


def solve_boundary(consts: DerivedConstants, n_steps: int = 256, method: str = "gauss",
                   richardson: bool = False, xtol: float = 1e-15) -> BoundaryGrid:
    """Solve the boundary integral equation backwards on a uniform grid.

    Parameters
    ----------
    consts : DerivedConstants
    n_steps : int
        Number of time steps (at least 8).
    method : {"gauss", "trapezoid"}
        Time quadrature. ``"trapezoid"`` is the composite rule on the grid
        itself; ``"gauss"`` (default) uses the square-root graded
        Gauss-Legendre rule of :mod:`limcom.quadrature`, which removes the
        ``O(dt**1.5)`` error of the trapezoid rule near ``s = t``.
    richardson : bool
        If true, also solve on ``n_steps // 2`` and return the first-order
        extrapolation ``2 b_n - b_(n/2)`` at the coarse nodes.
    xtol : float
        Absolute tolerance of the root in ``z``.

    Raises
    ------
    SolverError
        ``NO_ROOT_IN_BRACKET`` if the residual keeps its sign on
        ``(z_inf (1 + 1e-12), 1)``.
    """
    if n_steps < 8:
        raise DomainError("GRID_TOO_SMALL", "n_steps must be at least 8")
    if method not in METHODS:
        raise DomainError("UNKNOWN_METHOD", f"method must be one of {METHODS}")
    if richardson:
        fine = solve_boundary(consts, n_steps, method, False, xtol)
        coarse = solve_boundary(consts, n_steps // 2, method, False, xtol)
        ext = 2.0 * fine.values[::2][: coarse.values.size] - coarse.values
        ext[-1] = 1.0
        return BoundaryGrid(coarse.times, ext, consts, method, np.full(ext.size, np.nan))

    T = consts.T
    times = np.linspace(0.0, T, n_steps + 1)
    log_values = np.zeros(n_steps + 1)
    residuals = np.zeros(n_steps + 1)
    lo = consts.z_inf * (1.0 + 1e-12)
    hi = 1.0
    for i in range(n_steps - 1, -1, -1):
        rule = None if method == "trapezoid" else build_rule(times, times[i])

        def f(c):
            return _residual(consts, times, log_values, i, c, method, rule)

        f_lo, f_hi = f(lo), f(hi)
        if f_lo * f_hi > 0:
            raise SolverError(
                "NO_ROOT_IN_BRACKET",
                f"residual has one sign on (z_inf, 1) at t={times[i]:.6g} "
                f"({f_lo:.3e}, {f_hi:.3e})",
            )
        c = brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
        log_values[i] = np.log(c)
        residuals[i] = f(c)
    values = np.exp(log_values)
    values[-1] = 1.0
    return BoundaryGrid(times, values, consts, method, residuals)


def boundary_residual(grid: BoundaryGrid, i: int, candidate: float, method: str | None = None) -> float:
    """Residual of the boundary equation at node ``i`` for a trial value.

    Later nodes take their solved values; node ``i`` takes ``candidate``.
    At ``i = N`` the integral is empty and the residual is zero.
    """
    N = grid.n_steps
    if not 0 <= i <= N:
        raise DomainError("NODE_OUT_OF_RANGE", f"i must lie in [0, {N}]")
    if not grid.consts.z_inf < candidate <= 1.0:
        raise DomainError("CANDIDATE_OUT_OF_BRACKET", "candidate must lie in (z_inf, 1]")
    if i == N:
        return 0.0
    return _residual(grid.consts, grid.times, grid.log_values, i, candidate, method or grid.method)


def boundary_at(grid: BoundaryGrid, t):
    """Boundary at arbitrary times, linear in ``(t, log z*)`` between nodes."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0) or np.any(ta > grid.T) or np.any(np.isnan(ta)):
        raise DomainError("TIME_OUT_OF_RANGE", "t must lie in [0, T]")
    out = np.exp(np.interp(ta, grid.times, grid.log_values))
    idx = np.minimum(np.searchsorted(grid.times, ta), grid.n_steps)
    on_node = grid.times[idx] == ta
    out = np.where(on_node, grid.values[idx], out)
    return float(out) if out.ndim == 0 else out
