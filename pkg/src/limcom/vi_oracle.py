"""Finite-difference oracle for the early-exercise premium.

Solves the zero-obstacle variational inequality in ``zeta = log z``,

    min(-dQ/dt - L Q - f, Q) = 0,   Q(T, .) = 0,
    L = (g s)^2/2 d2/dzeta2 + (r_hat - rho_hat + (g s)^2/2) d/dzeta - rho_hat,
    f(zeta) = (exp(zeta (1/g - 1)) - 1) / (1 - g),

backwards in time with a theta-scheme (two fully implicit start-up steps)
and projected SOR at every step. The method shares nothing with the
integral-equation solver beyond the model constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SolverError
from .model import DerivedConstants
from .valuation import obstacle_h


@dataclass(frozen=True, eq=False)
class FDSolution:
    """Lattice solution ``Q_hat[k, j]`` at ``(times[k], zeta[j])``.

    ``thetas[k]`` is the weight used for the step from ``times[k+1]`` to
    ``times[k]``; ``iterations[k]`` the PSOR sweeps it took.
    """

    consts: DerivedConstants
    times: np.ndarray
    zeta: np.ndarray
    Q_hat: np.ndarray
    thetas: np.ndarray
    iterations: np.ndarray
    tol: float
    omega: float
    boundary: np.ndarray = field(default=None, repr=False)

    @property
    def d_zeta(self) -> float:
        return float(self.zeta[1] - self.zeta[0])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def default_domain(consts: DerivedConstants) -> tuple[float, float]:
    """Log-ratio interval wide enough for the obstacle to be inactive at the top."""
    lz = math.log(consts.z_inf)
    spread = consts.vol * math.sqrt(consts.T)
    return lz - 1.5, max(3.5, lz + 5.0 * spread)


def _source(consts, zeta):
    return (np.exp(zeta * consts.power) - 1.0) / (1.0 - consts.gamma)


def _operator(consts, dz):
    a = 0.5 * consts.vol**2 / dz**2
    b = consts.drift_1 / (2.0 * dz)
    # coefficients of Q[j-1], Q[j], Q[j+1] in L Q
    return a - b, -2.0 * a - consts.rho_hat, a + b


def _step_system(consts, dz, dt, theta, q_next, zeta):
    lo, di, up = _operator(consts, dz)
    A_next = np.zeros_like(q_next)
    A_next[1:-1] = lo * q_next[:-2] + di * q_next[1:-1] + up * q_next[2:]
    rhs = q_next + (1.0 - theta) * dt * A_next + dt * _source(consts, zeta)
    # M = I - theta dt L
    return (-theta * dt * lo, 1.0 - theta * dt * di, -theta * dt * up), rhs


def _residual(M, q, rhs):
    ml, md, mu = M
    r = np.zeros_like(q)
    r[1:-1] = ml * q[:-2] + md * q[1:-1] + mu * q[2:] - rhs[1:-1]
    return r


def _psor(M, rhs, q, omega, tol, max_iter):
    """Red-black projected SOR for ``min(M q - rhs, q) = 0`` on interior nodes."""
    ml, md, mu = M
    n = q.size
    red = np.arange(1, n - 1, 2)
    black = np.arange(2, n - 1, 2)
    w = omega
    prev = np.inf
    for it in range(1, max_iter + 1):
        change = 0.0
        for idx in (red, black):
            gs = (rhs[idx] - ml * q[idx - 1] - mu * q[idx + 1]) / md
            new = np.maximum(q[idx] + w * (gs - q[idx]), 0.0)
            change = max(change, float(np.max(np.abs(new - q[idx]))))
            q[idx] = new
        if not math.isfinite(change) or change > 1e3 * prev:
            w = 0.5 * (1.0 + w)  # relaxation too aggressive
        if change < tol:
            return it
        prev = change
    raise SolverError("PSOR_NOT_CONVERGED", f"change {change:.3e} after {max_iter} sweeps")


def solve_vi_fd(consts: DerivedConstants, domain: tuple[float, float] | None = None,
                n_time: int = 400, n_space: int = 400, theta: float = 0.5,
                omega: float = 1.2, tol: float = 1e-10, max_iter: int = 20000,
                rannacher_steps: int = 2) -> FDSolution:
    """Solve the log-space variational inequality on an ``n_time x n_space`` lattice.

    Parameters
    ----------
    domain : (zeta_min, zeta_max), optional
        Defaults to :func:`default_domain`. Needs ``zeta_min < log z_inf - 1``
        and ``zeta_max > 3``.
    theta : float
        Implicitness weight; 0.5 is Crank-Nicolson.
    rannacher_steps : int
        Number of fully implicit steps taken first, to damp the start-up
        oscillations from the kink of the payoff at ``z = 1``.

    Boundary values are ``Q = 0`` at ``zeta_min`` and the obstacle-free
    solution ``Q = -h`` at ``zeta_max``.
    """
    zmin, zmax = default_domain(consts) if domain is None else domain
    if not zmin < math.log(consts.z_inf) - 1 or not zmax > 3:
        raise DomainError("FD_DOMAIN_TOO_SMALL", "need zeta_min < log z_inf - 1 and zeta_max > 3")
    if n_time < 50 or n_space < 50:
        raise DomainError("GRID_TOO_SMALL", "n_time and n_space must be at least 50")
    times = np.linspace(0.0, consts.T, n_time + 1)
    zeta = np.linspace(zmin, zmax, n_space + 1)
    dz, dt = zeta[1] - zeta[0], times[1] - times[0]
    Q = np.zeros((n_time + 1, n_space + 1))
    thetas = np.zeros(n_time)
    iters = np.zeros(n_time, dtype=int)
    z_top = math.exp(zmax)
    for k in range(n_time - 1, -1, -1):
        th = 1.0 if (n_time - 1 - k) < rannacher_steps else theta
        M, rhs = _step_system(consts, dz, dt, th, Q[k + 1], zeta)
        q = Q[k + 1].copy()
        q[0] = 0.0
        q[-1] = -obstacle_h(float(times[k]), z_top, consts)
        iters[k] = _psor(M, rhs, q, omega, tol, max_iter)
        Q[k] = q
        thetas[k] = th
    sol = FDSolution(consts, times, zeta, Q, thetas, iters, tol, omega)
    object.__setattr__(sol, "boundary", fd_boundary(sol))
    return sol


def fd_boundary(sol: FDSolution) -> np.ndarray:
    """Boundary estimate ``z_fd(t_k)``.

    The smallest lattice ``zeta`` with ``Q_hat > 10 tol``, exponentiated,
    then made non-decreasing in time by a backward running minimum. At
    ``T`` (where ``Q_hat = 0``) the first node with a positive source term
    is used, i.e. ``z >= 1``.
    """
    thr = 10.0 * sol.tol
    nt = sol.times.size
    out = np.empty(nt)
    for k in range(nt):
        pos = np.nonzero(sol.Q_hat[k, :-1] > thr)[0]
        if k == nt - 1 or pos.size == 0:
            pos = np.nonzero(_source(sol.consts, sol.zeta) > 0)[0]
        out[k] = math.exp(sol.zeta[pos[0]])
    return np.minimum.accumulate(out[::-1])[::-1]


@dataclass(frozen=True)
class ComplementarityReport:
    """Residual statistics of the discrete complementarity problem.

    ``pde`` residuals are per unit time (the step equation divided by dt).
    """

    max_min_residual: float
    quantiles: dict
    continuation_max_abs_pde: float
    stopped_min_pde: float
    stopped_max_abs_q: float


def complementarity_report(sol: FDSolution) -> ComplementarityReport:
    """Check ``min(M q - rhs, q) = 0`` node by node on the interior."""
    dz, dt = sol.d_zeta, sol.dt
    thr = 10.0 * sol.tol
    mins, cont, stop_r, stop_q = [], [], [], []
    for k in range(sol.times.size - 1):
        M, rhs = _step_system(sol.consts, dz, dt, sol.thetas[k], sol.Q_hat[k + 1], sol.zeta)
        q = sol.Q_hat[k]
        r = _residual(M, q, rhs)[1:-1] / dt
        qi = q[1:-1]
        mins.append(np.minimum(r * dt, qi))
        c = qi > thr
        cont.append(np.abs(r[c]))
        stop_r.append(r[~c])
        stop_q.append(np.abs(qi[~c]))
    allm = np.abs(np.concatenate(mins))
    cont, stop_r, stop_q = (np.concatenate(x) for x in (cont, stop_r, stop_q))
    return ComplementarityReport(
        max_min_residual=float(allm.max()),
        quantiles={q: float(np.quantile(allm, q)) for q in (0.5, 0.9, 0.99)},
        continuation_max_abs_pde=float(cont.max()) if cont.size else 0.0,
        stopped_min_pde=float(stop_r.min()) if stop_r.size else 0.0,
        stopped_max_abs_q=float(stop_q.max()) if stop_q.size else 0.0,
    )
