import math

import numpy as np
import pytest

from leibniz import distributions as dist
from leibniz import models, oracle

# q = 0.5, theta = 1; region quadrature and adaptive Simpson agree to <= 1.3e-10
FROZEN_DERIVATIVES = {
    "independent": -0.715750508603688,
    "fgm": -0.8486013290248673,
    "lognormal_0.1": -0.33773670757141633,
    "lognormal_0.9": -0.6132975717104694,
    "clayton_gamma_0.5": -0.974759092055022,
    "clayton_gamma_1": -0.6777435916184571,
    "clayton_gamma_2": -0.15938245960944383,
}
OPTION_DERIVATIVE = 0.0986049831194943


@pytest.mark.parametrize("key, settings", models.TABLE1_CONFIGS)
def test_log_inventory_oracle_backends_agree(key, settings):
    o = oracle.truth_log_inventory(models.make_density(settings), 0.5, 1.0)
    assert o.discrepancy < 1e-8
    assert o.derivative == pytest.approx(FROZEN_DERIVATIVES[key], abs=1e-9)


def test_independent_probability_closed_form():
    # P((X1+1)(X2+1) < e^q) = int_0^{e^q-1} e^-x (1 - e^{-(e^q/(x+1) - 1)}) dx, fixed at order 64
    d = models.make_density({"kind": "independent"})
    res = oracle.log_inventory_probability(d, 0.5, 1.0, order=64)
    assert res.value == pytest.approx(0.11941098124472457, abs=1e-12)
    assert res.value == pytest.approx(oracle.log_inventory_probability_simpson(d, 0.5, 1.0),
                                      abs=1e-10)


@pytest.mark.parametrize("theta", [0.5, 0.9, 1.2])
def test_independent_derivative_against_closed_form(theta):
    # P = int_0^{A} e^-x (1 - exp(theta - e^q / (x + theta))) dx with A = e^q/theta - theta;
    # differentiate under the integral (the boundary term vanishes since the integrand is 0 at A)
    q, eq = 0.5, math.exp(0.5)
    a = eq / theta - theta

    def integrand(x):
        return -math.exp(-x) * math.exp(theta - eq / (x + theta)) * (1 + eq / (x + theta) ** 2)

    from leibniz.numerics import adaptive_simpson
    ref = adaptive_simpson(integrand, 0.0, a, tol=1e-13)
    d = models.make_density({"kind": "independent"})
    # central-difference step error of the oracle is O(delta^2) ~ 1e-8 here
    assert oracle.truth_log_inventory(d, q, theta).derivative == pytest.approx(ref, abs=1e-7)


def test_empty_region_has_zero_derivative():
    d = models.make_density({"kind": "fgm"})
    assert oracle.truth_log_inventory(d, 0.5, 1.3).derivative == 0.0
    assert oracle.log_inventory_probability(d, 0.5, 1.3).value == 0.0


def test_oracle_step_size_stable():
    d = models.make_density({"kind": "clayton_gamma", "shape": 2.0})
    a = oracle.truth_log_inventory(d, 0.5, 1.0, cross_check=False).derivative
    b = oracle.truth_log_inventory(d, 0.5, 1.0, delta=2e-4, cross_check=False).derivative
    assert abs(a - b) < 1e-6


def test_no_region_oracle_for_products():
    with pytest.raises(oracle.NoOracle):
        oracle.log_inventory_probability(dist.ProductDensity((dist.Exponential(),) * 2), 0.5, 1.0)


@pytest.mark.parametrize("theta", [0.2, 0.5, 0.8])
def test_max_threshold_truths(theta):
    assert oracle.truth_max_threshold(models.uniform_square(), theta) == 2 * theta
    # P(max <= t) = t^4 for density 4 x1 x2
    assert oracle.truth_max_threshold(models.beta_product(), theta) == pytest.approx(4 * theta ** 3,
                                                                                    abs=1e-7)


@pytest.mark.parametrize("phi", ["linear", "quadratic", "constant"])
@pytest.mark.parametrize("density", [dist.independent(dist.Exponential()), dist.fgm_exponential(),
                                     dist.BivariateLogNormal(0.6)])
def test_ipalr_identity(phi, density):
    m = models.model_smooth_log_shift(density, phi)
    assert oracle.verify_identity_ipalr(m, 500) < 1e-5


def test_option_oracle_value_and_cross_check():
    o = oracle.truth_option_2period(models.AmericanOptionModel())
    assert o.derivative == pytest.approx(OPTION_DERIVATIVE, abs=1e-9)
    assert o.discrepancy < 1e-7
    assert o.quad_error < 1e-8


def test_option_inner_closed_form_matches_quadrature():
    m = models.AmericanOptionModel()
    s = np.array([80.0, 100.0, 130.0])
    np.testing.assert_allclose(oracle._call_forward(m, s, 0.5),
                               oracle._call_forward_quadrature(m, s, 0.5, 128), rtol=1e-10)


def test_option_without_early_exercise_is_european():
    m = models.AmericanOptionModel()
    # never exercising early leaves a European call on the dividend-adjusted spot
    euro = math.exp(-m.r * m.maturity) * float(oracle._call_forward(m, m.s_tilde0, m.maturity))
    assert oracle.option_2period_value(m, 1e9) == pytest.approx(euro, rel=1e-9)


def test_option_oracle_refuses_three_periods():
    m = models.AmericanOptionModel(dividends=(1.0, 1.0), dates=(0.3, 0.6, 1.0),
                                   thresholds=(110.0, 110.0))
    with pytest.raises(oracle.NoOracle):
        oracle.truth_option_2period(m)


@pytest.mark.parametrize("theta", [0.1, 0.4, 0.9])
def test_gg1_two_customer_enumeration(theta):
    # second customer waits 0.25 exactly when the first is admitted
    value, deriv = oracle.truth_gg1_enumerate(models.gg1_two_customer_benchmark(), theta)
    assert value == pytest.approx(0.25 * theta, abs=1e-15)
    assert deriv == pytest.approx(0.25, abs=1e-15)


def test_gg1_enumeration_refuses_x_dependent_services():
    with pytest.raises(oracle.NoOracle):
        oracle.truth_gg1_enumerate(models.gg1_five_customer_benchmark(), 0.4)


def test_mc_fd_oracle_is_crn_and_seeded():
    m = models.gg1_two_customer_benchmark()
    r = oracle.mc_fd_oracle(m, 0.4, 0.05, n_reps=50_000)
    assert abs(r.mean - 0.25) < 4 * r.std_error
    assert r == oracle.mc_fd_oracle(m, 0.4, 0.05, n_reps=50_000)


def test_empty_region_as_q_goes_to_minus_infinity():
    d = models.make_density({"kind": "fgm"})
    assert oracle.truth_log_inventory(d, -math.inf, 1.0).derivative == 0.0


def test_max_threshold_near_zero():
    assert oracle.truth_max_threshold(models.uniform_square(), 1e-9) == pytest.approx(0.0, abs=1e-8)
    assert oracle.truth_max_threshold(models.uniform_square(), 0.0) == 0.0


def test_option_oracle_vanishes_when_threshold_never_binds():
    m = models.AmericanOptionModel(dividends=(0.0,), thresholds=(1e4,))
    assert oracle.truth_option_2period(m).derivative == pytest.approx(0.0, abs=1e-10)
    low_vol = models.AmericanOptionModel(sigma=0.01, thresholds=(120.0,))
    assert oracle.truth_option_2period(low_vol).derivative == pytest.approx(0.0, abs=1e-10)
