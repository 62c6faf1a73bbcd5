import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from limcom import DomainError, SolverError, boundary_at, boundary_residual, derive_constants, solve_boundary
from limcom.quadrature import build_rule
from limcom.verify import BASELINE

Z_INF = 0.43557121277770737602


def test_rule_integrates_sqrt_singular_kernels():
    times = np.linspace(0.0, 30.0, 65)
    for t in (0.0, 7.3, 29.9):
        rule = build_rule(times, t)
        f = lambda x: math.erfc(0.3 / math.sqrt(x)) * math.exp(-0.05 * x) if x > 0 else 0.0
        got = np.sum(rule.weights * np.array([f(x) for x in rule.xi]))
        ref = integrate.quad(lambda u: 2 * u * f(u * u), 0, math.sqrt(30.0 - t),
                             epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-13)
        assert rule.weights.sum() == pytest.approx(30.0 - t, rel=1e-13)
        assert np.all((rule.frac >= 0) & (rule.frac <= 1))


def test_rule_at_terminal_time_is_empty():
    times = np.linspace(0.0, 1.0, 9)
    assert len(build_rule(times, 1.0)) == 0


def test_boundary_structure(grid, consts):
    v = grid.values
    assert v[-1] == 1.0
    assert np.all(np.diff(v) > 0)
    assert np.all(v[:-1] > Z_INF) and np.all(v[:-1] < 1)
    assert grid.max_residual() <= 1e-9
    assert grid.times.size == 257


def test_residual_at_solution_and_terminal(grid):
    for i in (0, 17, 128, 255):
        assert abs(boundary_residual(grid, i, float(grid.values[i]))) <= 1e-9
    N = grid.n_steps
    assert boundary_residual(grid, N, 0.7) == 0.0
    with pytest.raises(DomainError):
        boundary_residual(grid, 0, 0.3)
    with pytest.raises(DomainError):
        boundary_residual(grid, N + 1, 0.7)


def test_residual_changes_sign_on_bracket(grid, consts):
    zs = np.linspace(consts.z_inf * (1 + 1e-9), 1.0, 40)
    r = np.array([boundary_residual(grid, 0, z) for z in zs])
    flips = np.nonzero(np.sign(r[:-1]) != np.sign(r[1:]))[0]
    assert flips.size == 1
    assert zs[flips[0]] <= grid.values[0] <= zs[flips[0] + 1]


def test_trapezoid_option(consts, grid):
    trap = solve_boundary(consts, 256, method="trapezoid")
    assert trap.max_residual() <= 1e-9
    assert np.all(np.diff(trap.values) > 0)
    # O(dt^1.5) error of the plain rule near s = t, largest close to T
    err = abs(trap.values[0] - grid.values[0])
    assert err < 2e-4
    finer = solve_boundary(consts, 512, method="trapezoid")
    assert abs(finer.values[0] - grid.values[0]) < err


def test_grid_convergence(consts):
    z0 = [solve_boundary(consts, n).values[0] for n in (64, 128, 256, 512)]
    diffs = np.abs(np.diff(z0))
    assert np.all(diffs[1:] < diffs[:-1])
    # at least first order
    assert np.all(diffs[1:] / diffs[:-1] < 0.55)


def test_richardson(consts, grid):
    ext = solve_boundary(consts, 256, richardson=True)
    assert ext.n_steps == 128
    assert ext.values[-1] == 1.0
    assert abs(ext.values[0] - grid.values[0]) < 1e-6


def test_approach_to_infinite_horizon(params):
    z0 = [solve_boundary(derive_constants(params.replace(T=T)), int(4 * T)).values[0]
          for T in (30.0, 60.0, 120.0, 200.0)]
    assert np.all(np.diff(z0) < 0)
    assert np.all(np.array(z0) > Z_INF)


def test_small_grid_rejected(consts):
    with pytest.raises(DomainError):
        solve_boundary(consts, 4)
    with pytest.raises(DomainError):
        solve_boundary(consts, 16, method="simpson")


def test_no_root_reported():
    # a consts object whose z_inf lies above the true boundary
    from dataclasses import replace
    c = derive_constants(BASELINE)
    bad = replace(c, z_inf=0.99)
    with pytest.raises(SolverError) as err:
        solve_boundary(bad, 16)
    assert err.value.code == "NO_ROOT_IN_BRACKET"


def test_boundary_at_nodes_and_ends(grid):
    assert boundary_at(grid, grid.T) == 1.0
    assert np.array_equal(boundary_at(grid, grid.times), grid.values)
    with pytest.raises(DomainError):
        boundary_at(grid, -0.1)
    with pytest.raises(DomainError):
        boundary_at(grid, grid.T + 0.1)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(0.0, 30.0, exclude_max=True))
def test_boundary_at_between_nodes(grid, t):
    k = int(np.searchsorted(grid.times, t, side="right")) - 1
    v = boundary_at(grid, t)
    frac = (t - grid.times[k]) / (grid.times[k + 1] - grid.times[k])
    if frac == 0:
        assert v == grid.values[k]
    elif 1e-9 < frac < 1 - 1e-9:
        assert grid.values[k] < v < grid.values[k + 1]
    else:
        assert grid.values[k] <= v <= grid.values[k + 1]
