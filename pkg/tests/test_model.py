import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from limcom import (
    DomainError,
    InfeasiblePromiseError,
    ModelParams,
    ParameterError,
    autarky_value,
    d_factors,
    derive_constants,
    dual_utility,
    first_best_consumption,
    laplace_normal_integral,
    normal_cdf,
    utility,
)
from limcom.model import check_promise

# mpmath at 40 digits
ALPHA_MINUS = -1.2338540395721414477
ALPHA_PLUS = 0.90052070623880811441
Z_INF = 0.43557121277770737602
NCDF_196 = 0.97500210485177956586
LAPLACE_004_1 = 24.528130608117202907
LAPLACE_005_M2 = 0.12270403350410393500
C_FB_0 = 1.3217467496534632138
U_D_0 = -7.7686983985157017107


def test_derived_constants_baseline(consts):
    assert consts.rho_hat == pytest.approx(0.05, abs=1e-15)
    assert consts.r_hat == pytest.approx(0.02, abs=1e-15)
    assert consts.K == pytest.approx(0.04, abs=1e-15)
    assert consts.alpha_minus == pytest.approx(ALPHA_MINUS, rel=1e-14)
    assert consts.alpha_plus == pytest.approx(ALPHA_PLUS, rel=1e-14)
    assert consts.z_inf == pytest.approx(Z_INF, rel=1e-13)
    assert consts.z_T == 1.0


def test_derived_constants_impatient(params):
    c = derive_constants(params.replace(rho=0.07))
    assert c.rho_hat == pytest.approx(0.08, abs=1e-15)
    assert c.K == pytest.approx(0.05, abs=1e-15)


def test_characteristic_roots(consts):
    # 0.045 a^2 + 0.015 a - 0.05 = 0
    for a in (consts.alpha_minus, consts.alpha_plus):
        assert abs(0.045 * a * a + 0.015 * a - 0.05) < 1e-12
        assert abs(consts.char_poly(a)) < 1e-12
    assert consts.alpha_minus < -1


@pytest.mark.parametrize("change, code", [
    (dict(sigma=0.2), "RHO_HAT_NONPOSITIVE"),
    (dict(mu=0.05), "R_HAT_NONPOSITIVE"),
    (dict(gamma=1.0), "GAMMA_EQUALS_ONE"),
    (dict(gamma=-1.0), "GAMMA_NONPOSITIVE"),
    (dict(sigma=0.0), "SIGMA_NONPOSITIVE"),
    (dict(r=0.05), "R_EXCEEDS_RHO"),
    (dict(T=0.0), "HORIZON_NONPOSITIVE"),
    (dict(mu=0.004), "DRIFT_BELOW_HALF_VARIANCE"),
    (dict(rho=float("nan")), "RHO_NOT_FINITE"),
])
def test_named_violations(params, change, code):
    with pytest.raises(ParameterError) as err:
        derive_constants(params.replace(**change))
    assert code in err.value.violations
    assert code in str(err.value)


def test_promise_feasibility(params):
    check_promise(params)
    with pytest.raises(InfeasiblePromiseError) as err:
        check_promise(params.replace(w0=-100.0))
    assert err.value.code == "W_INFEASIBLE"
    with pytest.raises(InfeasiblePromiseError):
        check_promise(params.replace(w0=1.0))


def test_utility_values():
    assert utility(1.0, 3.0) == -0.5
    assert utility(1.0, 0.5) == 2.0
    assert utility(2.0, 3.0) == -0.125
    with pytest.raises(DomainError):
        utility(0.0, 3.0)


def test_dual_utility_values():
    assert dual_utility(1.0, 3.0) == pytest.approx(-1.5)
    assert dual_utility(1.0, 0.5) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        dual_utility(-1.0, 3.0)


@pytest.mark.parametrize("gamma", [0.5, 3.0])
def test_dual_utility_is_a_maximum(gamma):
    # brute force over c
    c = np.linspace(0.01, 10.0, 1000)
    for z in np.geomspace(0.1, 10.0, 25):
        best = z * utility(c, gamma) - c
        assert dual_utility(z, gamma) >= best.max() - 1e-12
        cz = z ** (1 / gamma)
        assert dual_utility(z, gamma) == pytest.approx(z * utility(cz, gamma) - cz, rel=1e-13)


def test_autarky_value(params):
    assert autarky_value(params.T, 1.0, params) == 0.0
    assert autarky_value(0.0, 1.0, params) == pytest.approx(U_D_0, rel=1e-14)
    with pytest.raises(DomainError):
        autarky_value(params.T + 1, 1.0, params)


@given(k=st.floats(0.05, 20.0), y=st.floats(0.1, 10.0), t=st.floats(0.0, 29.0))
def test_autarky_homogeneity(params, k, y, t):
    lhs = autarky_value(t, k * y, params)
    rhs = k ** (1 - params.gamma) * autarky_value(t, y, params)
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_normal_cdf_values():
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_cdf(1.96) - NCDF_196) < 1e-15
    assert normal_cdf(-8.0) < 1e-15
    with pytest.raises(DomainError):
        normal_cdf(float("nan"))


def test_normal_cdf_against_mpmath():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 30
    x = np.linspace(-8, 8, 161)
    ref = np.array([float(mpmath.ncdf(v)) for v in x])
    assert np.max(np.abs(normal_cdf(x) - ref)) <= 1e-12
    assert np.all(np.diff(normal_cdf(x)) >= 0)


@given(x=st.floats(-30.0, 30.0))
def test_normal_cdf_symmetry(x):
    assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) <= 1e-15


def test_d_factors(consts):
    d1, dg = d_factors(1.0, 1.0, consts)
    assert d1 == pytest.approx(0.05, abs=1e-15)
    assert dg == pytest.approx(-0.15, abs=1e-15)
    d1, dg = d_factors(0.0, np.array([0.5, 1.0, 2.0]), consts)
    assert list(normal_cdf(d1)) == [0.0, 0.5, 1.0]
    assert list(normal_cdf(dg)) == [0.0, 0.5, 1.0]
    d1, _ = d_factors(1e-300, 1.0, consts)
    assert abs(d1) < 1e-100
    with pytest.raises(DomainError):
        d_factors(1.0, 0.0, consts)


def _laplace_quad(c, d):
    # u = sqrt(x) removes the sqrt kink at 0
    f = lambda u: 2.0 * u * math.exp(-c * u * u) * float(normal_cdf(d * u))
    return integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]


def test_laplace_values():
    assert laplace_normal_integral(1.0, 0.0) == 0.5
    assert laplace_normal_integral(0.04, 1.0) == pytest.approx(LAPLACE_004_1, rel=1e-13)
    assert laplace_normal_integral(0.05, -2.0) == pytest.approx(LAPLACE_005_M2, rel=1e-12)
    with pytest.raises(DomainError):
        laplace_normal_integral(0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.01, 1.0), d=st.floats(-3.0, 3.0))
def test_laplace_identity_property(c, d):
    assert laplace_normal_integral(c, d) == pytest.approx(_laplace_quad(c, d), rel=1e-8)


def test_first_best(params):
    assert first_best_consumption(0.0, 0.0, -5.0, params) == pytest.approx(C_FB_0, rel=1e-14)
    assert abs(first_best_consumption(0.0, 0.0, -5.0, params) - 1.321750) < 1e-5
    flat = first_best_consumption(0.0, np.array([0.0, 15.0, 30.0]), -5.0, params)
    assert flat[0] == flat[1] == flat[2]
    p3 = params.replace(rho=0.07)
    c = first_best_consumption(0.0, np.array([0.0, 10.0]), -5.0, p3)
    assert math.log(c[1] / c[0]) / 10.0 == pytest.approx(-0.01, rel=1e-12)
    with pytest.raises(InfeasiblePromiseError):
        first_best_consumption(0.0, 0.0, 5.0, params)


@pytest.mark.parametrize("rho", [0.04, 0.07])
def test_first_best_promise_keeping(params, rho):
    p = params.replace(rho=rho)
    f = lambda s: math.exp(-rho * s) * utility(first_best_consumption(0.0, s, -5.0, p), p.gamma)
    val = integrate.quad(f, 0, p.T, epsabs=1e-13, epsrel=1e-13)[0]
    assert abs(val + 5.0) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(rho=st.floats(0.02, 0.12), mu=st.floats(0.011, 0.03), sigma=st.floats(0.05, 0.14),
       gamma=st.floats(1.5, 6.0))
def test_roots_and_bounds_for_admissible_params(rho, mu, sigma, gamma):
    p = ModelParams(rho=rho, r=min(0.04, rho), mu=mu, sigma=sigma, gamma=gamma)
    if p.violations():
        return
    c = derive_constants(p)
    assert abs(c.char_poly(c.alpha_minus)) < 1e-12
    assert abs(c.char_poly(c.alpha_plus)) < 1e-12
    assert c.alpha_minus < -1
    assert 0 < c.z_inf < 1
