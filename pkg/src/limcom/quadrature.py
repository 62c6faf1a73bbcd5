"""Quadrature over the remaining horizon ``s in [t, T]``.

The integrands are normal kernels of ``log(z / b(s)) / sqrt(s - t)`` where
``b`` is the boundary interpolated linearly in log between grid nodes. Two
features drive the rule:

* the ``1/sqrt(s - t)`` scaling makes the integrand vary on every scale near
  ``s = t``; on the first two grid cells we substitute ``s - t = u**2`` and
  split ``u`` geometrically towards zero;
* the interpolated boundary has kinks at the grid nodes, so every panel is
  aligned with the grid and integrated by Gauss-Legendre.

The same rule is used to solve for the boundary and to evaluate the value
functions, which keeps value matching ``Q(t, b(t)) = 0`` exact up to the
root-finder tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class TimeRule:
    """Nodes and weights for ``int_t^T f(s) ds`` on a boundary grid.

    Attributes
    ----------
    xi : ndarray
        Elapsed times ``s - t`` of the quadrature nodes.
    weights : ndarray
        Quadrature weights.
    left : ndarray of int
        Index ``k`` of the grid cell ``[t_k, t_k+1]`` containing each node.
    frac : ndarray
        Position of each node inside its cell, in ``(0, 1)``.
    """

    xi: np.ndarray
    weights: np.ndarray
    left: np.ndarray
    frac: np.ndarray

    def log_boundary(self, log_values: np.ndarray) -> np.ndarray:
        """Interpolated ``log b(s)`` at the nodes given node values ``log b(t_k)``."""
        return (1.0 - self.frac) * log_values[self.left] + self.frac * log_values[self.left + 1]

    def __len__(self) -> int:
        return self.xi.size


def build_rule(times: np.ndarray, t: float, order: int = 8, far_order: int = 4,
               n_near: int = 8, n_grade: int = 20) -> TimeRule:
    """Quadrature rule for ``int_t^T`` on the grid ``times``.

    Parameters
    ----------
    times : ndarray
        Increasing grid ``t_0 < ... < t_N = T``.
    t : float
        Lower limit, ``t_0 <= t <= T``.
    order : int
        Gauss-Legendre points per sub-panel near ``s = t``.
    far_order : int
        Points per panel once ``s - t`` exceeds ``n_near`` cells, where the
        integrand is smooth on the scale of a cell.
    n_near : int
        Number of cells integrated with ``order`` points.
    n_grade : int
        Number of geometric refinements of the square-root panels.
    """
    N = times.size - 1
    if t >= times[-1]:
        empty = np.zeros(0)
        return TimeRule(empty, empty, np.zeros(0, dtype=int), empty)
    j = min(int(np.searchsorted(times, t, side="right")) - 1, N - 1)
    ends = times[j + 1:] - t

    xg, wg = _gauss(order)
    # square-root panels on the first two cells
    near_end = ends[min(1, ends.size - 1)]
    geo = near_end * 4.0 ** -np.arange(1, n_grade + 1)
    cuts = np.unique(np.concatenate([[0.0], geo, ends[ends <= near_end]]))
    ua, ub = np.sqrt(cuts[:-1]), np.sqrt(cuts[1:])
    u = (ua[:, None] + (ub - ua)[:, None] * xg).ravel()
    xi_parts = [u * u]
    w_parts = [(2.0 * u * ((ub - ua)[:, None] * wg).ravel())]

    # ordinary panels on the remaining cells
    rest = ends[ends >= near_end]
    if rest.size > 1:
        a, b = rest[:-1], rest[1:]
        h = b - a
        n_hi = min(n_near, a.size)
        for lo, hi, q in ((0, n_hi, order), (n_hi, a.size, far_order)):
            if hi > lo:
                xq, wq = _gauss(q)
                xi_parts.append((a[lo:hi, None] + h[lo:hi, None] * xq).ravel())
                w_parts.append((h[lo:hi, None] * wq).ravel())
    xi = np.concatenate(xi_parts)
    weights = np.concatenate(w_parts)
    s = t + xi
    left = np.clip(np.searchsorted(times, s, side="right") - 1, 0, N - 1)
    frac = (s - times[left]) / (times[left + 1] - times[left])
    return TimeRule(xi, weights, left, frac)
