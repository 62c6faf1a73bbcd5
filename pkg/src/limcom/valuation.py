"""Value functions of the stopping problem and the dual value function.

Notation: ``z = lambda / y**gamma`` is the dual ratio, ``b(t) = z*(t)`` the
free boundary, ``p = 1/gamma - 1`` and ``tau = T - t``.

* ``h`` is the obstacle, ``Q`` the early-exercise premium and ``g = Q + h``
  the stopping value; ``Q = 0`` and ``g = h`` for ``z <= b(t)``.
* The dual value is ``J(t, lambda, y) = y * Jhat(t, z) + y (1 - e^{-r_hat tau}) / r_hat``
  with ``Jhat(t, z) = -int_z^inf g(t, u) du + gamma/(1-gamma) (1 - e^{-K tau})/K z**(1/gamma)``
  in the no-jump region, and linear in ``lambda`` with slope ``U_d`` below
  the boundary.
* ``dJ/dlambda`` is the continuation value promised to the agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

from .boundary import BoundaryGrid, kernel_args, kernel_sums
from .errors import DomainError, SolverError
from .model import DerivedConstants, autarky_value, dual_utility
from .quadrature import TimeRule, build_rule

JR = "JR"
NR = "NR"
# residual level below which the local boundary equation counts as tangent
_FLAT = 1e-11


@dataclass(frozen=True, eq=False)
class ValuationContext:
    """Boundary plus tolerances shared by all value-function evaluations.

    Parameters
    ----------
    consts : DerivedConstants
    grid : BoundaryGrid
        Must have been solved from ``consts``.
    quad_tol : float
        Absolute tolerance of the adaptive outer integral in
        :func:`dual_J` with ``method="outer"``.
    tail_tol : float
        Truncation tolerance of that outer integral.
    """

    consts: DerivedConstants
    grid: BoundaryGrid
    quad_tol: float = 1e-9
    tail_tol: float = 1e-9
    _rules: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.grid.consts != self.consts:
            raise DomainError("CONTEXT_MISMATCH", "grid was solved from different constants")

    @classmethod
    def from_grid(cls, grid: BoundaryGrid, **kw) -> "ValuationContext":
        return cls(grid.consts, grid, **kw)

    @property
    def T(self) -> float:
        return self.consts.T

    def rule(self, t: float) -> tuple[TimeRule, np.ndarray]:
        """Time rule on ``[t, T]`` and the log-boundary at its nodes."""
        return self._local(float(t))[:2]

    def boundary(self, t):
        """Boundary ``z*(t)``.

        Grid nodes return the solved values. Between nodes the boundary
        equation is solved afresh at ``t`` with the later nodes held fixed,
        so that ``Q(t, z*(t)) = 0`` holds at every ``t`` and not only on the
        grid (plain log-linear interpolation leaves a residual of order
        ``dt**2`` near maturity). Within the last cells before ``T`` these
        off-node roots are not monotone at the level of the grid's own
        discretization error; the node values are.
        """
        ta = np.asarray(t, dtype=float)
        if ta.ndim == 0:
            return self._local(float(ta))[2]
        return np.array([self._local(float(x))[2] for x in ta.ravel()]).reshape(ta.shape)

    def _local(self, t: float):
        hit = self._rules.get(t)
        if hit is None:
            hit = self._solve_local(t)
            if len(self._rules) > 4096:
                self._rules.clear()
            self._rules[t] = hit
        return hit

    def _solve_local(self, t: float):
        grid, c = self.grid, self.consts
        _check_t(t, c.T)
        lv = grid.log_values
        if t == c.T:
            return build_rule(grid.times, t), np.zeros(0), 1.0
        # snap times within rounding of a node (simulation grids are built separately)
        j = int(np.argmin(np.abs(grid.times - t)))
        if grid.times[j] != t and abs(grid.times[j] - t) <= 1e-12 * c.T:
            return self._local(float(grid.times[j]))
        rule = build_rule(grid.times, t)
        lb = rule.log_boundary(lv)
        k = int(np.searchsorted(grid.times, t, side="right")) - 1
        if grid.times[k] == t:
            return rule, lb, float(grid.values[k])
        # first partial cell: log b linear between (t, log c) and the next node
        part = rule.left == k
        s = grid.times[k] + rule.frac[part] * (grid.times[k + 1] - grid.times[k])
        wgt = (s - t) / (grid.times[k + 1] - t)

        def with_candidate(lc):
            out = lb.copy()
            out[part] = (1.0 - wgt) * lc + wgt * lv[k + 1]
            return out

        def resid(zc):
            lc = math.log(zc)
            sk, sr = kernel_sums(c, rule, with_candidate(lc), lc)
            return float(zc**c.power * sk - sr)

        # bracket by the neighbouring nodes first; close to T the discrete root
        # can sit slightly above the next node. Just left of a node the
        # equation is nearly tangent (no sign change) and the interpolant is
        # already a root to rounding level.
        b_lo, b_hi = float(grid.values[k]), float(grid.values[k + 1])
        f_lo, f_hi = resid(b_lo), resid(b_hi)
        if f_lo * f_hi <= 0:
            lo, hi = b_lo, b_hi
        elif abs(f_hi) > _FLAT and f_hi * resid(1.0) <= 0:
            lo, hi = b_hi, 1.0
        else:
            zc = math.exp(np.interp(t, grid.times, lv))
            return rule, with_candidate(math.log(zc)), zc
        zc = brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return rule, with_candidate(math.log(zc)), float(zc)


def _check_t(t, T):
    if not 0.0 <= t <= T:
        raise DomainError("TIME_OUT_OF_RANGE", f"t={t!r} outside [0, {T!r}]")


def _positive(x, name):
    a = np.asarray(x, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError("NONPOSITIVE_ARGUMENT", f"{name} must be positive")
    return a


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def _horizon(c, tau):
    """``(1 - e^{-c tau}) / c``."""
    return -math.expm1(-c * tau) / c


def obstacle_h(t: float, z, consts: DerivedConstants):
    """Obstacle ``h(t, z) = ((1-e^{-rho_hat tau})/rho_hat - (1-e^{-K tau})/K z**p) / (1-gamma)``."""
    _check_t(t, consts.T)
    z = _positive(z, "z")
    tau = consts.T - t
    g = consts.gamma
    return _out((_horizon(consts.rho_hat, tau) - _horizon(consts.K, tau) * z**consts.power) / (1.0 - g))


def premium_Q(ctx: ValuationContext, t: float, z):
    """Early-exercise premium ``Q(t, z)`` from its integral representation.

    ``Q = (z**p int e^{-K xi} N(dg) ds - int e^{-rho_hat xi} N(d1) ds) / (1-gamma)``
    above the boundary and zero on or below it.
    """
    c = ctx.consts
    _check_t(t, c.T)
    z = _positive(z, "z")
    out = np.zeros(z.shape)
    above = z > ctx.boundary(t)
    if t < c.T and np.any(above):
        rule, lb = ctx.rule(t)
        za = z[above]
        d1, dg, wk, wr = kernel_args(c, rule, lb, np.log(za))
        out[above] = (za**c.power * (ndtr(dg) @ wk) - ndtr(d1) @ wr) / (1.0 - c.gamma)
    return _out(out)


def stop_value_g(ctx: ValuationContext, t: float, z):
    """Stopping value ``g = Q + h``.

    Above the boundary it is evaluated in the complementary form
    ``(int e^{-rho_hat xi} N(-d1) ds - z**p int e^{-K xi} N(-dg) ds) / (1-gamma)``,
    which keeps full relative accuracy in the far tail where ``g -> 0``.
    """
    c = ctx.consts
    _check_t(t, c.T)
    z = _positive(z, "z")
    out = np.asarray(obstacle_h(t, z, c), dtype=float).copy()
    above = z > ctx.boundary(t)
    if t < c.T and np.any(above):
        rule, lb = ctx.rule(t)
        za = z[above]
        d1, dg, wk, wr = kernel_args(c, rule, lb, np.log(za))
        out[above] = (ndtr(-d1) @ wr - za**c.power * (ndtr(-dg) @ wk)) / (1.0 - c.gamma)
    return _out(out)


def premium_Q_infinity(z, consts: DerivedConstants):
    """Infinite-horizon premium, zero for ``z <= z_inf``."""
    z = _positive(z, "z")
    g, K, am, zi = consts.gamma, consts.K, consts.alpha_minus, consts.z_inf
    coef = -(1.0 / g) * (1.0 / K) * (1.0 / am) * zi ** (consts.power - am)
    val = coef * z**am + (z**consts.power / K - 1.0 / consts.rho_hat) / (1.0 - g)
    return _out(np.where(z > zi, val, 0.0))


def g_infinity(z, consts: DerivedConstants):
    """Infinite-horizon stopping value ``Q_inf + h_inf``."""
    z = _positive(z, "z")
    h_inf = (1.0 / consts.rho_hat - z**consts.power / consts.K) / (1.0 - consts.gamma)
    return _out(premium_Q_infinity(z, consts) + h_inf)


def _ratio(ctx, lam, y):
    lam = _positive(lam, "lambda")
    y = _positive(y, "y")
    lam, y = np.broadcast_arrays(lam, y)
    return lam, y, lam / y**ctx.consts.gamma


def _g_tail_integral(ctx, t, z):
    """``int_z^inf g(t, u) du`` for ``z > b(t)`` via Fubini.

    For each ``s`` the integral over ``u`` of the normal kernels is
    elementary (integration by parts against the log-normal density),
    leaving a single time integral on the same rule as ``Q``.
    """
    c = ctx.consts
    g = c.gamma
    k = 1.0 / g
    rule, lb = ctx.rule(t)
    d1, dg, wk, wr = kernel_args(c, rule, lb, np.log(z))
    xi = rule.xi
    v2 = c.vol**2 * xi
    v = np.sqrt(v2)
    B = np.exp(lb)
    zc = z[..., None]
    a1 = -zc * ndtr(-d1) + B * np.exp(0.5 * v2 - c.drift_1 * xi) * ndtr(v - d1)
    ag = g * (-zc**k * ndtr(-dg) + B**k * np.exp(k * (0.5 * k * v2 - c.drift_gamma * xi)) * ndtr(k * v - dg))
    return (a1 @ wr - ag @ wk) / (1.0 - g)


def _g_tail_outer(ctx, t, z):
    """Adaptive reference for ``int_z^inf g(t, u) du`` with tail truncation."""
    u_cap = 1e6 * ctx.boundary(t)
    L_cap = math.log(u_cap / z)

    def f(L):
        u = z * math.exp(L)
        return stop_value_g(ctx, t, u) * u

    # u_max doubles at every step
    total = 0.0
    a, width = 0.0, math.log(2.0)
    while True:
        b = min(a + width, L_cap)
        part, _ = quad(f, a, b, epsabs=ctx.quad_tol, epsrel=1e-12, limit=200)
        total += part
        if abs(part) < ctx.tail_tol:
            return total
        if b >= L_cap:
            raise SolverError("TAIL_NOT_CONVERGED",
                              f"outer integral still {part:.3e} at u = 1e6 z*(t)")
        a = b


def _jhat_nr(ctx, t, z, method):
    c = ctx.consts
    tau = c.T - t
    if method == "outer":
        G = np.array([_g_tail_outer(ctx, t, float(zz)) for zz in np.ravel(z)]).reshape(z.shape)
    else:
        G = _g_tail_integral(ctx, t, z)
    return -G + c.gamma / (1.0 - c.gamma) * _horizon(c.K, tau) * z ** (1.0 / c.gamma)


def dual_J(ctx: ValuationContext, t: float, lam, y, method: str = "closed"):
    """Dual value function ``J(t, lambda, y)``.

    Parameters
    ----------
    method : {"closed", "outer"}
        ``"closed"`` (default) integrates ``g`` over the dual ratio in closed
        form inside the time integral. ``"outer"`` performs that integral
        numerically with adaptive quadrature and doubling tail truncation;
        it is slower and serves as a cross-check.

    Raises
    ------
    SolverError
        ``TAIL_NOT_CONVERGED`` (``method="outer"`` only).
    """
    c = ctx.consts
    _check_t(t, c.T)
    lam, y, z = _ratio(ctx, lam, y)
    if t == c.T:
        return _out(np.zeros(z.shape))
    b = ctx.boundary(t)
    zz = np.maximum(z, b)
    jhat = _jhat_nr(ctx, t, zz, method)
    tau = c.T - t
    J = y * jhat + _horizon(c.r_hat, tau) * y
    jump = z <= b
    if np.any(jump):
        ud = autarky_value(t, y, c.params)
        J = np.where(jump, J + (lam - b * y**c.gamma) * ud, J)
    return _out(J)


def marginal_dual(ctx: ValuationContext, t: float, lam, y):
    """Promised value ``w = dJ/dlambda``.

    Above the boundary,
    ``w = y**(1-gamma)/(1-gamma) int e^{-rho_hat xi} N(-d1) ds
    + lambda**p/(1-gamma) int e^{-K xi} N(dg) ds``; on or below it,
    ``w = U_d(t, y)``.
    """
    c = ctx.consts
    _check_t(t, c.T)
    lam, y, z = _ratio(ctx, lam, y)
    if t == c.T:
        return _out(np.zeros(z.shape))
    ud = autarky_value(t, y, c.params)
    out = np.array(ud, dtype=float, copy=True).reshape(z.shape)
    above = z > ctx.boundary(t)
    if np.any(above):
        rule, lb = ctx.rule(t)
        za = z[above]
        d1, dg, wk, wr = kernel_args(c, rule, lb, np.log(za))
        m = (ndtr(-d1) @ wr + za**c.power * (ndtr(dg) @ wk)) / (1.0 - c.gamma)
        out[above] = y[above] ** (1.0 - c.gamma) * m
    return _out(out)


def classify_region(ctx: ValuationContext, t: float, lam, y):
    """``"JR"`` where ``lambda <= z*(t) y**gamma`` (jump region), else ``"NR"``."""
    _check_t(t, ctx.T)
    lam, y, z = _ratio(ctx, lam, y)
    out = np.where(z <= ctx.boundary(t), JR, NR)
    return str(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HJBResidual:
    """Both branches of the dual HJB variational inequality at a point.

    ``pde`` is ``J_t + sigma^2/2 y^2 J_yy + mu y J_y + (r-rho) lambda J_lambda
    - r J + y + u~(lambda)``; ``gradient`` is ``J_lambda - U_d``.
    """

    pde: float
    gradient: float
    region: str
    scale: float


def hjb_residual(ctx: ValuationContext, t: float, lam: float, y: float,
                 h_t: float = 1e-3, h_rel: float = 1e-3) -> HJBResidual:
    """Central finite-difference evaluation of the dual HJB at ``(t, lambda, y)``.

    ``scale = |y| + |u~(lambda)|`` is returned for normalising ``pde``.

    Raises
    ------
    SolverError
        ``STENCIL_ACROSS_BOUNDARY`` if any stencil point lies in a different
        region than the centre.
    """
    c = ctx.consts
    p = c.params
    if not h_t <= t <= c.T - h_t:
        raise DomainError("TIME_OUT_OF_RANGE", "stencil leaves [0, T]")
    hl, hy = h_rel * lam, h_rel * y
    pts = [(t, lam, y), (t + h_t, lam, y), (t - h_t, lam, y), (t, lam + hl, y),
           (t, lam - hl, y), (t, lam, y + hy), (t, lam, y - hy)]
    regions = {classify_region(ctx, *q) for q in pts}
    if len(regions) > 1:
        raise SolverError("STENCIL_ACROSS_BOUNDARY", f"stencil at t={t!r} straddles the boundary")
    J0, Jtp, Jtm, Jlp, Jlm, Jyp, Jym = (dual_J(ctx, *q) for q in pts)
    Jt = (Jtp - Jtm) / (2 * h_t)
    Jl = (Jlp - Jlm) / (2 * hl)
    Jy = (Jyp - Jym) / (2 * hy)
    Jyy = (Jyp - 2 * J0 + Jym) / hy**2
    ut = dual_utility(lam, c.gamma)
    pde = Jt + 0.5 * p.sigma**2 * y**2 * Jyy + p.mu * y * Jy + (p.r - p.rho) * lam * Jl - p.r * J0 + y + ut
    grad = Jl - autarky_value(t, y, p)
    return HJBResidual(float(pde), float(grad), regions.pop(), abs(y) + abs(ut))
