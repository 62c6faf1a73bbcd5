"""Model primitives: parameters, derived constants, CRRA utility and the
normal-distribution kernels shared by the integral representations.

All rates are per year and time is measured in years.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, InfeasiblePromiseError, ParameterError


@dataclass(frozen=True)
class ModelParams:
    """Economic primitives of the contracting problem.

    Parameters
    ----------
    rho : float
        Agent's discount rate.
    r : float
        Risk-free rate used by the principal, ``0 < r <= rho``.
    mu, sigma : float
        Drift and volatility of the geometric Brownian income.
    gamma : float
        Relative risk aversion, positive and different from one.
    T : float
        Contract horizon in years.
    y0 : float
        Initial income.
    w0 : float
        Promised value at inception (utils).
    """

    rho: float = 0.04
    r: float = 0.04
    mu: float = 0.02
    sigma: float = 0.1
    gamma: float = 3.0
    T: float = 30.0
    y0: float = 1.0
    w0: float = -5.0

    def replace(self, **changes) -> "ModelParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ModelParams(**values)

    @property
    def rho_hat(self) -> float:
        g = self.gamma
        return self.rho - (1.0 - g) * self.mu + 0.5 * g * (1.0 - g) * self.sigma**2

    @property
    def r_hat(self) -> float:
        return self.r - self.mu

    @property
    def K(self) -> float:
        return self.r + (self.rho - self.r) / self.gamma

    def violations(self) -> list[str]:
        """Names of every failed assumption (empty when the set is admissible)."""
        out = []
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                out.append(f"{f.name.upper()}_NOT_FINITE")
        if out:
            return out
        if self.gamma <= 0:
            out.append("GAMMA_NONPOSITIVE")
        elif self.gamma == 1:
            out.append("GAMMA_EQUALS_ONE")
        if self.sigma <= 0:
            out.append("SIGMA_NONPOSITIVE")
        if self.mu <= 0:
            out.append("MU_NONPOSITIVE")
        if self.T <= 0:
            out.append("HORIZON_NONPOSITIVE")
        if self.y0 <= 0:
            out.append("Y0_NONPOSITIVE")
        if self.r <= 0:
            out.append("R_NONPOSITIVE")
        if self.r > self.rho:
            out.append("R_EXCEEDS_RHO")
        if out:
            return out
        if self.rho_hat <= 0:
            out.append("RHO_HAT_NONPOSITIVE")
        if self.r_hat <= 0:
            out.append("R_HAT_NONPOSITIVE")
        if self.K <= 0:
            out.append("K_NONPOSITIVE")
        if self.mu <= 0.5 * self.sigma**2:
            out.append("DRIFT_BELOW_HALF_VARIANCE")
        return out


@dataclass(frozen=True)
class DerivedConstants:
    """Constants computable from :class:`ModelParams` alone.

    ``alpha_plus`` and ``alpha_minus`` are the roots of
    ``f(a) = (g s)^2/2 a^2 + (r_hat - rho_hat + (g s)^2/2) a - rho_hat``;
    ``z_inf`` is the infinite-horizon boundary level and ``z_T = 1`` the
    terminal one.
    """

    params: ModelParams
    rho_hat: float
    r_hat: float
    K: float
    alpha_plus: float
    alpha_minus: float
    z_inf: float
    z_T: float = 1.0

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def T(self) -> float:
        return self.params.T

    @property
    def vol(self) -> float:
        """Volatility of the dual ratio, gamma * sigma."""
        return self.params.gamma * self.params.sigma

    @property
    def power(self) -> float:
        """Exponent 1/gamma - 1 of the dual ratio in the obstacle."""
        return 1.0 / self.params.gamma - 1.0

    @property
    def drift_1(self) -> float:
        return self.r_hat - self.rho_hat + 0.5 * self.vol**2

    @property
    def drift_gamma(self) -> float:
        s2 = self.params.sigma**2
        return self.r_hat - self.rho_hat - 0.5 * self.vol**2 + self.params.gamma * s2

    def char_poly(self, alpha):
        """Characteristic quadratic whose roots are ``alpha_plus/minus``."""
        a = 0.5 * self.vol**2
        return a * alpha**2 + self.drift_1 * alpha - self.rho_hat


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Validate ``params`` and compute the derived constants.

    Raises
    ------
    ParameterError
        Carrying the first failed assumption as ``code``; every violation is
        listed in the message and in ``err.violations``.
    """
    bad = params.violations()
    if bad:
        err = ParameterError(bad[0], "violated: " + ", ".join(bad))
        err.violations = bad
        raise err
    g = params.gamma
    rho_hat, r_hat, K = params.rho_hat, params.r_hat, params.K
    a = 0.5 * (g * params.sigma) ** 2
    b = r_hat - rho_hat + a
    c = -rho_hat
    # cancellation-free quadratic roots; c < 0 so the discriminant is positive
    q = -0.5 * (b + math.copysign(math.sqrt(b * b - 4 * a * c), b))
    roots = sorted([q / a, c / q])
    alpha_minus, alpha_plus = roots
    base = rho_hat * (alpha_minus * g + g - 1.0) / (K * alpha_minus * g)
    z_inf = base ** (g / (g - 1.0))
    return DerivedConstants(params, rho_hat, r_hat, K, alpha_plus, alpha_minus, z_inf)


def check_promise(params: ModelParams, t: float = 0.0) -> None:
    """Raise :class:`InfeasiblePromiseError` if ``w0`` is below autarky."""
    ud = autarky_value(t, params.y0, params)
    if params.w0 < ud:
        raise InfeasiblePromiseError(f"w0={params.w0!r} below autarky value {ud!r}")
    if params.gamma > 1 and params.w0 >= 0:
        raise InfeasiblePromiseError(f"w0={params.w0!r} must be negative when gamma > 1")


def _positive(x, name, code):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(code, f"{name} must be positive")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def utility(c, gamma: float):
    """CRRA utility ``c**(1-gamma) / (1-gamma)``."""
    c = _positive(c, "consumption", "NONPOSITIVE_CONSUMPTION")
    return _out(c ** (1.0 - gamma) / (1.0 - gamma))


def dual_utility(z, gamma: float):
    """Convex dual ``max_c {z u(c) - c} = gamma/(1-gamma) z**(1/gamma)``."""
    z = _positive(z, "z", "NONPOSITIVE_DUAL_WEIGHT")
    return _out(gamma / (1.0 - gamma) * z ** (1.0 / gamma))


def autarky_value(t, y, params: ModelParams):
    """Agent's value of walking away at time ``t`` with income ``y``.

    ``y**(1-gamma)/(1-gamma) * (1 - exp(-rho_hat (T-t))) / rho_hat``.
    """
    t = np.asarray(t, dtype=float)
    y = _positive(y, "income", "NONPOSITIVE_INCOME")
    if np.any(t > params.T) or np.any(t < 0):
        raise DomainError("TIME_OUT_OF_RANGE", "t must lie in [0, T]")
    rh = params.rho_hat
    g = params.gamma
    return _out(y ** (1.0 - g) / (1.0 - g) * (-np.expm1(-rh * (params.T - t))) / rh)


def normal_cdf(x):
    """Standard normal distribution function."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DomainError("NAN_INPUT", "normal_cdf received NaN")
    return _out(ndtr(x))


def d_factors(xi, ratio, consts: DerivedConstants):
    """Arguments ``(d1, dgamma)`` of the normal kernels.

    For ``xi > 0`` they are ``(log ratio + m xi) / (gamma sigma sqrt(xi))``
    with drifts ``consts.drift_1`` and ``consts.drift_gamma``. At ``xi == 0``
    the value is the sign of ``log ratio`` times infinity (zero when the
    ratio is one), so the kernels evaluate to 1, 1/2 or 0.
    """
    xi = np.asarray(xi, dtype=float)
    ratio = _positive(ratio, "ratio", "NONPOSITIVE_RATIO")
    if np.any(xi < 0):
        raise DomainError("NEGATIVE_ELAPSED_TIME", "xi must be nonnegative")
    xi, lr = np.broadcast_arrays(xi, np.log(ratio))
    d1 = np.empty(xi.shape)
    dg = np.empty(xi.shape)
    pos = xi > 0
    sq = consts.vol * np.sqrt(xi[pos])
    d1[pos] = (lr[pos] + consts.drift_1 * xi[pos]) / sq
    dg[pos] = (lr[pos] + consts.drift_gamma * xi[pos]) / sq
    lim = np.where(lr[~pos] > 0, np.inf, np.where(lr[~pos] < 0, -np.inf, 0.0))
    d1[~pos] = lim
    dg[~pos] = lim
    return _out(d1), _out(dg)


def laplace_normal_integral(c, d):
    """Closed form of ``int_0^inf exp(-c x) N(d sqrt(x)) dx``.

    Equals ``(1 + d / sqrt(d**2 + 2c)) / (2c)`` for ``c > 0``.
    """
    c = _positive(c, "c", "NONPOSITIVE_DECAY")
    d = np.asarray(d, dtype=float)
    return _out((1.0 + d / np.sqrt(d * d + 2.0 * c)) / (2.0 * c))


def first_best_consumption(t, s, w, params: ModelParams):
    """Full-commitment consumption at time ``s`` for a contract starting at ``t``.

    The principal bears all risk, so consumption is deterministic and
    decays at rate ``(rho - r)/gamma``; its level delivers exactly ``w``.
    """
    g = params.gamma
    s = np.asarray(s, dtype=float)
    if not 0 <= t <= params.T or np.any(s < t) or np.any(s > params.T):
        raise DomainError("TIME_OUT_OF_RANGE", "need 0 <= t <= s <= T")
    if not w * (1.0 - g) > 0:
        raise InfeasiblePromiseError(f"first-best needs w(1-gamma) > 0, got w={w!r}")
    K = params.K
    level = (K * (1.0 - g) * w / (-math.expm1(-K * (params.T - t)))) ** (1.0 / (1.0 - g))
    return _out(np.exp(-(params.rho - params.r) / g * (s - t)) * level)
