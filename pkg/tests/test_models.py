import math

import numpy as np
import pytest

from leibniz import distributions as dist
from leibniz import models


@pytest.fixture
def option():
    return models.AmericanOptionModel()


def test_max_threshold_performance():
    m = models.model_max_threshold(models.uniform_square())
    x = np.array([[0.2, 0.4], [0.6, 0.1], [0.5, 0.5]])
    np.testing.assert_array_equal(m.performance(x, 0.5), [1.0, 0.0, 1.0])
    np.testing.assert_array_equal(m.outer(x, 0.5), m.performance(x, 0.5))


def test_max_threshold_rejects_unbounded_support():
    with pytest.raises(ValueError):
        models.model_max_threshold(dist.fgm_exponential())


@pytest.mark.parametrize("name, settings", models.TABLE1_CONFIGS)
def test_log_inventory_models_build(name, settings, rng):
    m = models.model_log_inventory(models.make_density(settings), 0.5)
    assert m.theta_range == (0.0, pytest.approx(math.exp(0.25)))
    x = m.sample(rng, 500)
    np.testing.assert_array_equal(m.performance(x, 1.0), m.outer(x, 1.0))


def test_log_inventory_augmented_region_agrees_for_theta_at_least_one(rng):
    m = models.model_log_inventory(models.make_density({"kind": "fgm"}), 0.5)
    x = m.sample(rng, 2000)
    for theta in (1.0, 1.1):
        np.testing.assert_array_equal(m.region.contains(m.region_map(x, theta)).astype(float),
                                      m.performance(x, theta))


def test_log_inventory_augmented_region_differs_below_one():
    # log(x1 + theta) can exceed q when theta < 1 and x2 is small
    m = models.model_log_inventory(models.make_density({"kind": "fgm"}), 0.5)
    x = np.array([[1.5, 0.01]])
    assert m.performance(x, 0.2)[0] == 1.0
    assert not m.region.contains(m.region_map(x, 0.2))[0]


def test_log_inventory_rejects_bounded_marginals():
    with pytest.raises(ValueError):
        models.model_log_inventory(models.uniform_square())


@pytest.mark.parametrize("phi", ["linear", "quadratic", "constant"])
def test_smooth_phi_gradient(phi, rng):
    m = models.model_smooth_log_shift(dist.independent(dist.Exponential()), phi)
    y = rng.normal(size=(10, 2))
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        np.testing.assert_allclose(m.phi_grad(y)[:, k], (m.phi(y + e) - m.phi(y - e)) / (2 * h),
                                   atol=1e-7)


def test_bridge_network_longest_path():
    m = models.bridge_network()
    x = np.array([[0.5, 0.2, 0.1, 0.3, 0.6]])
    # paths: 0.8, 0.8, 1.2
    assert m.performance(x, 1.2)[0] == 1.0
    assert m.performance(x, 1.19)[0] == 0.0
    np.testing.assert_array_equal(m.outer(x, 1.2), m.performance(x, 1.2))


def test_san_paths_variant_uses_active_edges():
    m = models.bridge_network(transform="paths")
    assert m.active_coords == models.BRIDGE_ACTIVE
    x = np.array([[0.5, 0.2, 0.1, 0.3, 0.6]])
    np.testing.assert_array_equal(m.outer(x, 1.2), m.performance(x, 1.2))
    s = m.transform.s_closed(x, 2.0)
    np.testing.assert_allclose(np.einsum("...ij,...j->...i", m.transform.jacobian(x, 2.0), s),
                               m.transform.dtheta_g(x, 2.0), atol=1e-14)


@pytest.mark.parametrize("paths, active", [
    (((1, 1, 0), (1, 1, 0)), None),
    (((1, 0, 1), (0, 1, 1)), (2, 2)),
])
def test_san_rejects_bad_incidence(paths, active):
    laws = [dist.Exponential()] * 3
    with pytest.raises(ValueError):
        models.model_san_density(laws, paths, transform="paths", active=active)


def test_san_rank_deficient_active_set():
    laws = [dist.Exponential()] * 3
    with pytest.raises(models.RankDeficientIncidence):
        models.model_san_density(laws, ((1, 1, 0), (1, 1, 1)), transform="paths", active=(0, 1))


def test_option_escrow_and_adjusted_spot(option):
    assert option.escrow(0) == pytest.approx(2.0)
    assert option.s_tilde0 == pytest.approx(100 - 2 * math.exp(-0.025))
    two = models.AmericanOptionModel(dividends=(1.0, 2.0), dates=(0.25, 0.5, 1.0),
                                     thresholds=(110.0, 110.0))
    assert two.escrow(0) == pytest.approx(1.0 + 2.0 * math.exp(-0.05 * 0.25))
    assert two.escrow(1) == pytest.approx(2.0)


def test_option_h_inverse(option, rng):
    x = rng.normal(size=20)
    y = option.h(x, 97.0, 0.5)
    np.testing.assert_allclose(option.h_inverse(y, 97.0, 0.5), x, atol=1e-12)
    h = 1e-6
    np.testing.assert_allclose(option.dh_dx(x, 97.0, 0.5),
                               (option.h(x + h, 97.0, 0.5) - option.h(x - h, 97.0, 0.5)) / (2 * h),
                               rtol=1e-8)


def test_option_payoff_branches(option):
    # first-step innovation far up: exercise at t1; far down: hold and expire worthless
    x = np.array([[3.0, 0.0], [-3.0, -3.0]])
    cum = option.h(3.0, option.s_tilde0, 0.5) + 2.0
    pay = option.payoff(x)
    assert pay[0] == pytest.approx(math.exp(-0.025) * (cum - 100.0))
    assert pay[1] == 0.0


def test_option_branch_override_matches_natural_decision(option, rng):
    x = rng.normal(size=(200, 2))
    tilde = option.h(x[:, 0], option.s_tilde0, 0.5)
    ex = tilde + 2.0 > 105.0
    forced = np.where(ex, option.payoff(x, branch=(0, tilde, True)),
                      option.payoff(x, branch=(0, tilde, False)))
    np.testing.assert_allclose(forced, option.payoff(x), rtol=1e-14)


def test_option_validation():
    with pytest.raises(models.InvalidThresholds):
        models.AmericanOptionModel(thresholds=(95.0,))
    with pytest.raises(ValueError):
        models.AmericanOptionModel(dates=(1.0, 0.5))


def test_option_theta_range(option):
    assert option.in_range(105.0)
    assert not option.in_range(99.0)
    assert option.with_threshold(120.0).thresholds == (120.0,)


@pytest.mark.parametrize("gaps, expected", [
    # services 1.0 then 0.5 with gap 0.75: second customer waits 0.25 iff first admitted
    ((0.75,), {(True, True): 0.25, (True, False): 0.25, (False, True): 0.0, (False, False): 0.0}),
])
def test_gg1_two_customer_waits(gaps, expected):
    m = models.gg1_two_customer_benchmark()
    for (a1, a2), w in expected.items():
        z = np.array([[0.1 if a1 else 0.9, 0.1 if a2 else 0.9, *gaps]])
        assert m.performance(z, 0.5)[0] == pytest.approx(w)


def test_gg1_lindley_recursion_by_hand():
    m = models.GG1Model(3, models.constant_service(2.0), models.constant_service(1.0),
                        models.deterministic_interarrival(1.0), statistic="total_wait")
    s = np.array([[2.0, 2.0, 1.0]])
    ds = np.array([[1.0, 1.0, 0.0]])
    y = np.array([[1.0, 1.5]])
    # W = 0, 1, 1.5
    tot, dtot = m.lindley(s, ds, y)
    assert tot[0] == pytest.approx(2.5)
    assert dtot[0] == pytest.approx(1.0 + 2.0)


def test_gg1_override_pins_admission():
    m = models.gg1_five_customer_benchmark()
    z = np.array([[0.1, 0.9, 0.5, 0.2, 0.7, 1.0, 1.0, 1.0, 1.0]])
    a, _ = m.evaluate(z, 0.4, override=(1, True))
    b, _ = m.evaluate(z, 0.4, override=(1, False))
    assert a[0] > b[0]


@pytest.mark.parametrize("bad", [{"kind": "nope"}, {"kind": "independent", "marginal": "weibull"}])
def test_make_density_rejects_unknown(bad):
    with pytest.raises(ValueError):
        models.make_density(bad)


def test_beta_product_density():
    d = models.beta_product()
    assert d.pdf(np.array([0.5, 0.5])) == pytest.approx(1.0)
    assert d.pdf(np.array([0.2, 0.9])) == pytest.approx(4 * 0.2 * 0.9)


def test_option_payoff_nonnegative(option, rng):
    assert np.all(option.payoff(rng.normal(size=(5000, 2))) >= 0)


def test_option_zero_volatility_is_deterministic():
    m = models.AmericanOptionModel(sigma=0.0, thresholds=(120.0,))
    x = np.random.default_rng(0).normal(size=(5, 2))
    # S~0 e^{r t1} + D < s: never exercised early
    assert m.h(0.0, m.s_tilde0, 0.5) + 2.0 < 120.0
    expected = math.exp(-0.05) * max(m.s_tilde0 * math.exp(0.05) - 100.0, 0.0)
    np.testing.assert_allclose(m.payoff(x), expected, rtol=1e-12)


@pytest.mark.parametrize("m, expected", [
    (models.GG1Model(4, models.constant_service(0.0), models.constant_service(0.0),
                     models.exponential_interarrival()), 0.0),
    (models.GG1Model(4, models.constant_service(1.0), models.constant_service(1.0),
                     models.deterministic_interarrival(2.0), statistic="total_wait"), 0.0),
])
def test_gg1_trivial_queues(m, expected, rng):
    np.testing.assert_array_equal(m.performance(m.sample(rng, 100), 0.5), expected)


def test_parallel_edges_performance():
    m = models.model_san_density([dist.Exponential()] * 2, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(m.performance(np.array([[0.5, 1.5], [0.5, 0.9]]), 1.0), [0.0, 1.0])
