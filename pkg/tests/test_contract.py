import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limcom import (
    DomainError,
    IncomePath,
    InfeasiblePromiseError,
    ValuationContext,
    autarky_value,
    classify_region,
    derive_constants,
    dual_J,
    infinite_horizon_contract,
    marginal_dual,
    monte_carlo_check,
    run_contract,
    simulate_income,
    solve_boundary,
    solve_lambda_star,
)
from limcom.contract import ContractPath, aligned_boundary_steps, contract_arrays, income_paths, standard_normals


@pytest.fixture(scope="module")
def lam(ctx):
    return solve_lambda_star(ctx, 0.0, 1.0, -5.0)


@pytest.fixture(scope="module")
def ctx_impatient(params):
    c = derive_constants(params.replace(rho=0.07))
    return ValuationContext.from_grid(solve_boundary(c, 300))


def test_lambda_star_baseline(ctx, lam):
    assert abs(marginal_dual(ctx, 0.0, lam, 1.0) + 5.0) <= 1e-9
    assert classify_region(ctx, 0.0, lam, 1.0) == "NR"
    assert lam > ctx.boundary(0.0)


def test_lambda_star_at_autarky(ctx, params):
    for t, y in ((0.0, 1.0), (5.0, 1.7)):
        ud = autarky_value(t, y, params)
        assert solve_lambda_star(ctx, t, y, ud) == pytest.approx(ctx.boundary(t) * y**3, rel=1e-14)


@pytest.mark.parametrize("k", [0.5, 2.0])
def test_lambda_star_homogeneity(ctx, lam, k):
    assert solve_lambda_star(ctx, 0.0, k, k ** (1 - 3.0) * -5.0) == pytest.approx(k**3 * lam, rel=1e-8)


def test_lambda_star_infeasible(ctx):
    with pytest.raises(InfeasiblePromiseError) as err:
        solve_lambda_star(ctx, 0.0, 1.0, -8.0)
    assert err.value.code == "W_INFEASIBLE"
    with pytest.raises(InfeasiblePromiseError):
        solve_lambda_star(ctx, 0.0, 1.0, 0.5)


def test_income_deterministic_limit(params):
    # sigma enters only the noise term; the drift-only path is exact
    p = params.replace(sigma=1e-300)
    path = simulate_income(p, 60, seed=3)
    assert np.allclose(path.values, np.exp(p.mu * path.times), rtol=1e-14, atol=0)
    assert path.values[0] == p.y0


def test_income_mean(params):
    _, Y = income_paths(params, 1, seed=5, path_indices=np.arange(100_000))
    yT = Y[:, -1]
    se = yT.std(ddof=1) / math.sqrt(yT.size)
    assert abs(yT.mean() - math.exp(params.mu * params.T)) <= 3 * se
    assert np.all(Y > 0)


def test_income_determinism(params):
    a = simulate_income(params, 50, seed=9, path_index=4)
    b = simulate_income(params, 50, seed=9, path_index=4)
    assert np.array_equal(a.values, b.values)
    # order independence: a path does not depend on the batch it is drawn in
    _, Y = income_paths(params, 50, 9, [7, 4, 1])
    assert np.array_equal(Y[1], a.values)
    assert not np.array_equal(simulate_income(params, 50, seed=10, path_index=4).values, a.values)


def test_normals_are_standard():
    z = standard_normals(0, np.arange(200), 500).ravel()
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    assert np.isfinite(z).all()


def test_rising_income_ratchet(ctx, lam):
    times = ctx.grid.times
    Y = np.exp(0.05 * times)
    path = run_contract(ctx, IncomePath(times, Y, 0), lam)
    expect = np.maximum.accumulate(np.maximum(ctx.grid.values * Y**3, lam)) ** (1 / 3)
    assert np.allclose(path.C_star, expect, rtol=1e-14)
    assert np.all(np.diff(path.C_star) >= 0)
    assert path.jr_hit.any()
    assert path.X_star[0] == lam


def test_constant_income_never_hits(ctx_impatient):
    times = ctx_impatient.grid.times
    lam = solve_lambda_star(ctx_impatient, 0.0, 0.5, -5.0)
    path = run_contract(ctx_impatient, IncomePath(times, np.full(times.size, 0.5), 0), lam)
    assert np.all(path.X_star == lam)
    assert not path.jr_hit.any()
    slope = np.diff(np.log(path.C_star)) / np.diff(times)
    assert np.allclose(slope, -0.01, atol=1e-12)


def test_contract_path_invariants(ctx, lam, params):
    times, Y = income_paths(params, 256, 21, np.arange(50))
    arr = contract_arrays(ctx, times, Y, lam)
    X, w, ud, hit = arr["X_star"], arr["w_star"], arr["U_d"], arr["jr_hit"]
    assert np.all(np.diff(X, axis=1) >= 0)
    assert np.all(w >= ud - 1e-5)
    assert np.all(np.abs(w[hit] - ud[hit]) <= 1e-5)
    assert hit.any()
    assert np.all(np.abs(w[:, 0] + 5.0) <= 1e-9)
    assert np.all(np.diff(arr["C_star"], axis=1) >= 0)
    lam_s = arr["lambda_s"]
    assert np.all(lam_s >= ctx.grid.values * Y**3 * (1 - 1e-12))


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), index=st.integers(0, 10**9))
def test_running_max_property(ctx_impatient, seed, index):
    p = ctx_impatient.consts.params
    lam = solve_lambda_star(ctx_impatient, 0.0, 1.0, -5.0)
    path = simulate_income(p, 300, seed, index)
    cp = run_contract(ctx_impatient, path, lam)
    drift = np.exp((p.rho - p.r) * path.times)
    ref = np.maximum(np.maximum.accumulate(drift * path.values**3 * ctx_impatient.grid.values), lam)
    assert np.allclose(cp.X_star, ref, rtol=1e-14)
    # log C falls at (rho - r)/gamma between hits
    dlog = np.diff(np.log(cp.C_star))[~cp.jr_hit[1:]] / (path.times[1] - path.times[0])
    assert np.allclose(dlog, -0.01, atol=1e-9)


def test_contract_rows(ctx, lam, params):
    path = simulate_income(params, 256, 2)
    cp = run_contract(ctx, path, lam)
    rows = list(cp.rows())
    assert ContractPath.COLUMNS == ("t", "Y", "X_star", "lambda_s", "C_star", "w_star", "U_d", "region")
    assert len(rows) == 257
    assert {r[-1] for r in rows} <= {"JR_HIT", "NR"}
    assert rows[0][-1] == "NR"
    with pytest.raises(DomainError):
        run_contract(ctx, path, -1.0)


def test_aligned_steps():
    assert aligned_boundary_steps(256, 600) == 600
    assert aligned_boundary_steps(1000, 300) == 1200
    assert aligned_boundary_steps(300, 300) == 300


def test_infinite_horizon(consts, ctx_long):
    y = 1.3
    floor = y ** (1 - 3) / ((1 - 3) * consts.rho_hat)
    ih = infinite_horizon_contract(consts, y, floor)
    assert ih.lambda_star == pytest.approx(consts.z_inf * y**3, rel=1e-14)
    ih = infinite_horizon_contract(consts, 1.0, -5.0)
    assert ih.promised_value(ih.lambda_star, 1.0) == pytest.approx(-5.0, abs=1e-12)
    for k in (0.5, 2.0):
        other = infinite_horizon_contract(consts, k, k ** (1 - 3) * -5.0)
        assert other.lambda_star == pytest.approx(k**3 * ih.lambda_star, rel=1e-12)
    lam200 = solve_lambda_star(ctx_long, 0.0, 1.0, -5.0)
    assert lam200 == pytest.approx(ih.lambda_star, rel=1e-3)
    with pytest.raises(InfeasiblePromiseError):
        infinite_horizon_contract(consts, 1.0, -30.0)


def test_infinite_horizon_paths(consts, params):
    ih = infinite_horizon_contract(consts, 1.0, -5.0)
    times, Y = income_paths(params, 300, 4, np.arange(5))
    X, lam_s = ih.costate(times, Y)
    assert np.all(np.diff(X, axis=1) >= 0)
    assert np.all(lam_s >= consts.z_inf * Y**3 * (1 - 1e-14))
    assert np.allclose(ih.consumption(times, Y), lam_s ** (1 / 3))


def test_monte_carlo_small_noise(params):
    p = params.replace(sigma=0.02)
    ctx = ValuationContext.from_grid(solve_boundary(derive_constants(p), 300))
    lam = solve_lambda_star(ctx, 0.0, 1.0, -5.0)
    mc = monte_carlo_check(ctx, p, lam, n_paths=2000, seed=1, n_steps=300)
    assert mc.agent_target == -5.0
    assert mc.principal_target == pytest.approx(dual_J(ctx, 0.0, lam, 1.0) + 5.0 * lam)
    assert mc.principal_ok() and mc.agent_ok()


def test_monte_carlo_baseline_small(ctx_baseline_sim, params):
    ctx, lam = ctx_baseline_sim
    mc = monte_carlo_check(ctx, params, lam, n_paths=4000, seed=3, n_steps=300)
    assert mc.n_paths == 4000 and mc.n_steps == 300
    assert mc.principal_ok() and mc.agent_ok()
    again = monte_carlo_check(ctx, params, lam, n_paths=4000, seed=3, n_steps=300, chunk=1500)
    assert again.principal == pytest.approx(mc.principal, rel=1e-12)
    with pytest.raises(DomainError):
        monte_carlo_check(ctx, params, lam, n_paths=10)


@pytest.fixture(scope="module")
def ctx_baseline_sim(consts):
    ctx = ValuationContext.from_grid(solve_boundary(consts, 300))
    return ctx, solve_lambda_star(ctx, 0.0, 1.0, -5.0)
