import math

import numpy as np
import pytest
from scipy import special

from leibniz import checks, models, oracle
from leibniz import distributions as dist
from leibniz import estimators as est
from leibniz.estimators import EstimatorConfig

# E(1{(X1+1)(X2+1) < e^0.5} | X1 = 0) for Exp(1) margins: 1 - exp(1 - e^0.5);
# adaptive Simpson on the same expectation gives 0.4772862410151664
INDEPENDENT_FACE_EXPECTATION = 0.4772862410151655
INDEPENDENT_ORACLE = -0.715750508603688
FGM_ORACLE = -0.8486013290248673


def log_inventory(key):
    return models.model_log_inventory(models.make_density(dict(models.TABLE1_CONFIGS)[key]), 0.5)


def test_block_streams_are_distinct_and_reproducible():
    a = est.block_rng(0, 0).random(4)
    np.testing.assert_array_equal(a, est.block_rng(0, 0).random(4))
    assert not np.array_equal(a, est.block_rng(0, 1).random(4))
    assert not np.array_equal(a, est.block_rng(1, 0).random(4))
    assert not np.array_equal(a, est.block_rng(0, 0, family=1).random(4))


@pytest.mark.parametrize("n_reps, block", [(10, 4), (1024, 1024), (3000, 1024), (2, 1024)])
def test_replicate_counts_rows(n_reps, block):
    r = est.replicate(lambda rng, size: np.ones(size), n_reps, 0, block_size=block)
    assert r.n_reps == n_reps
    assert r.mean == 1.0
    assert r.std_error == 0.0


def test_replicate_standard_error():
    r = est.replicate(lambda rng, size: rng.standard_normal(size), 40_000, 5)
    assert r.std_error == pytest.approx(1 / math.sqrt(40_000), rel=0.02)
    assert abs(r.mean) < 4 * r.std_error


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_worker_count_does_not_change_result(workers):
    m = log_inventory("fgm")
    base = est.leibniz_integral_estimate(m, 1.0, EstimatorConfig(n_reps=4000, seed=9))
    other = est.leibniz_integral_estimate(m, 1.0, EstimatorConfig(n_reps=4000, seed=9,
                                                                  workers=workers))
    assert base == other


def test_replicate_rejects_tiny_budget():
    with pytest.raises(ValueError):
        est.replicate(lambda rng, size: np.ones(size), 1, 0)


@pytest.mark.parametrize("kwargs", [{"fd_delta": 0.0}, {"n_reps": 1}, {"surface_reps": 1}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EstimatorConfig(**kwargs)


def test_fd_crn_and_independent_streams():
    m = log_inventory("independent")
    crn = est.fd_estimate(m, 1.0, EstimatorConfig(n_reps=20_000, seed=4))
    ind = est.fd_estimate(m, 1.0, EstimatorConfig(n_reps=20_000, seed=4, crn=False))
    assert abs(crn.mean - INDEPENDENT_ORACLE) < 4 * crn.std_error
    assert abs(ind.mean - INDEPENDENT_ORACLE) < 4 * ind.std_error
    assert ind.std_error > 2 * crn.std_error


def test_fd_step_must_stay_in_range():
    with pytest.raises(est.ThetaOutOfRange):
        est.fd_estimate(log_inventory("fgm"), 1.27, EstimatorConfig(fd_delta=0.02))


def test_divergence_path_is_zero_outside_region():
    m = log_inventory("independent")
    x = np.array([[5.0, 5.0], [0.1, 0.1]])
    out = est.leibniz_divergence_path(m, x, 1.0)
    assert out[0] == 0.0
    assert out[1] != 0.0


def test_divergence_path_closed_form_for_exponential():
    # score is (-1, -1), so the sample is -(v1 + v2) + div v inside the region
    m = log_inventory("independent")
    x = np.array([[0.1, 0.2]])
    c = m.chart
    expected = -np.sum(c.velocity(x, 1.0)) + c.cross_partials(x, 1.0)[0]
    assert est.leibniz_divergence_path(m, x, 1.0)[0] == pytest.approx(expected, abs=1e-14)


def test_volume_path_for_exponential_is_two_inside():
    m = log_inventory("independent")
    x = np.array([[0.1, 0.2], [3.0, 3.0]])
    np.testing.assert_allclose(est.leibniz_volume_path(m, x, 1.0), [2.0, 0.0])


def test_independent_surface_term():
    expected = -2 * INDEPENDENT_FACE_EXPECTATION
    assert 1 - math.exp(1 - math.exp(0.5)) == pytest.approx(INDEPENDENT_FACE_EXPECTATION, abs=1e-15)
    s = est.surface_term(log_inventory("independent"), 1.0, EstimatorConfig(n_reps=20_000, seed=3))
    assert abs(s.value - expected) < 4 * s.std_error
    assert s.draws == 20_000


def test_fgm_surface_has_two_sampled_faces():
    s = est.surface_term(log_inventory("fgm"), 1.0, EstimatorConfig(surface_reps=500, seed=3))
    kinds = [c.kind for c in s.faces]
    assert kinds == ["transformed_cdf", "transformed_cdf"]
    assert s.draws == 1000
    assert all(c.value < 0 for c in s.faces)


@pytest.mark.parametrize("key, draws", [
    ("independent", 0), ("fgm", 2 * 700), ("lognormal_0.1", 0), ("lognormal_0.9", 0),
    ("clayton_gamma_0.5", 0), ("clayton_gamma_1", 0), ("clayton_gamma_2", 0),
])
def test_boundary_draw_counters(key, draws):
    r = est.leibniz_integral_estimate(log_inventory(key), 1.0,
                                      EstimatorConfig(n_reps=500, surface_reps=700, seed=0))
    assert r.boundary_draws == draws


@pytest.mark.parametrize("key, truth", [("independent", INDEPENDENT_ORACLE), ("fgm", FGM_ORACLE)])
@pytest.mark.parametrize("name", ["leibniz_integral", "leibniz_divergence", "fd"])
def test_estimators_unbiased_against_frozen_oracle(key, truth, name):
    r = est.run_estimator(name, log_inventory(key), 1.0, EstimatorConfig(n_reps=10_000, seed=21))
    assert abs(r.mean - truth) <= 4 * r.std_error
    assert not r.unstable


def test_frozen_oracles_reproduce():
    d = models.make_density({"kind": "independent", "marginal": "exponential"})
    assert oracle.truth_log_inventory(d, 0.5, 1.0).derivative == pytest.approx(INDEPENDENT_ORACLE,
                                                                              abs=1e-8)


def test_point_mass_surface_is_minus_infinity():
    r = est.leibniz_integral_estimate(log_inventory("clayton_gamma_0.5"), 1.0,
                                      EstimatorConfig(n_reps=2000, seed=0))
    assert r.unstable
    assert r.mean == -math.inf
    assert {c.kind for c in r.surface_breakdown} == {"point_mass"}


def test_theta_out_of_range():
    with pytest.raises(est.ThetaOutOfRange):
        est.leibniz_divergence_estimate(log_inventory("fgm"), 2.0)


def test_ipa_lr_refuses_indicator():
    with pytest.raises(est.NotDifferentiable):
        est.ipa_lr_estimate(log_inventory("fgm"), 1.0)


def test_ipa_lr_linear_log_shift():
    # d/dtheta E(log(X1 + t) + log(X2 + t)) = 2 E(1 / (X + t)) = 2 e^t E1(t)
    m = models.model_smooth_log_shift(dist.independent(dist.Exponential()), "linear")
    truth = 2 * math.e * special.exp1(1.0)
    r = est.ipa_lr_estimate(m, 1.0, EstimatorConfig(n_reps=20_000, seed=1))
    assert abs(r.mean - truth) < 4 * r.std_error


def test_san_scale_transform_has_no_surface():
    s = est.surface_term(models.bridge_network(), 1.0, EstimatorConfig(n_reps=200))
    assert s.value == 0.0
    assert s.draws == 200  # Exp faces reduce to the marginal and are evaluated, phi kills them


def test_san_single_edge_matches_density():
    m = models.model_san_density([dist.Exponential()], [[1]])
    r = est.leibniz_divergence_estimate(m, 1.0, EstimatorConfig(n_reps=40_000, seed=2))
    assert abs(r.mean - math.exp(-1)) < 4 * r.std_error


def test_san_scale_and_paths_agree():
    cfg = EstimatorConfig(n_reps=40_000, seed=6)
    a = est.leibniz_integral_estimate(models.bridge_network(), 3.0, cfg)
    b = est.leibniz_integral_estimate(models.bridge_network(transform="paths"), 3.0, cfg)
    assert abs(a.mean - b.mean) < 4 * math.hypot(a.std_error, b.std_error)


def test_option_threshold_derivative_against_quadrature():
    m = models.AmericanOptionModel()
    truth = oracle.truth_option_2period(m).derivative
    r = est.option_threshold_derivative(m, n_reps=10_000, seed=0)
    assert abs(r.mean - truth) < 3 * r.std_error


def test_dpa_two_customer_is_exact():
    m = models.gg1_two_customer_benchmark()
    _, truth = oracle.truth_gg1_enumerate(m, 0.4)
    assert truth == pytest.approx(0.25, abs=1e-15)
    r = est.dpa_derivative(m, 0.4, n_reps=2000)
    assert r.mean == pytest.approx(0.25, abs=1e-14)


def test_dpa_rejects_theta_outside_unit_interval():
    with pytest.raises(est.ThetaOutOfRange):
        est.dpa_derivative(models.gg1_two_customer_benchmark(), 1.2)


@pytest.mark.parametrize("name, model", [
    ("conditional_leibniz", models.bridge_network()),
    ("dpa", models.AmericanOptionModel()),
])
def test_dispatch_rejects_mismatched_models(name, model):
    with pytest.raises(est.NotDifferentiable):
        est.run_estimator(name, model, 1.0, EstimatorConfig(n_reps=10))


def test_unknown_estimator():
    with pytest.raises(ValueError):
        est.run_estimator("magic", log_inventory("fgm"), 1.0, EstimatorConfig())


def test_flipped_surface_sign_is_caught(monkeypatch):
    # outward normals point down on lower faces; reversing them must break unbiasedness
    original = est._faces

    def flipped(m):
        return [(pos, i, e, -sign) for pos, i, e, sign in original(m)]

    monkeypatch.setattr(est, "_faces", flipped)
    (res,) = checks.run_checks(["estimators_match_oracle"])
    assert not res.passed


def test_fd_of_theta_free_performance_is_exactly_zero():
    m = models.model_log_inventory(dist.fgm_exponential(), math.inf)
    r = est.fd_estimate(m, 1.0, EstimatorConfig(n_reps=1000))
    assert r.mean == 0.0 and r.std_error == 0.0


def test_max_threshold_uniform_path_value():
    m = models.model_max_threshold(models.uniform_square())
    x = np.array([[0.3, 0.4], [0.6, 0.4]])
    np.testing.assert_allclose(est.leibniz_divergence_path(m, x, 0.5), [4.0, 0.0])


def test_lognormal_surface_is_exactly_zero():
    s = est.surface_term(log_inventory("lognormal_0.9"), 1.0)
    assert s.value == 0.0 and s.std_error == 0.0 and s.draws == 0


def test_clayton_faces_are_deterministic():
    s = est.surface_term(log_inventory("clayton_gamma_1"), 1.0)
    assert s.draws == 0
    assert all(c.kind == "point_mass" and c.draws == 0 for c in s.faces)


def test_ipa_lr_path_linear_closed_form():
    m = models.model_smooth_log_shift(dist.independent(dist.Exponential()), "linear")
    x = np.array([[0.2, 1.5]])
    assert est.ipa_lr_path(m, x, 0.7)[0] == pytest.approx(1 / 0.9 + 1 / 2.2, abs=1e-14)
    c = models.model_smooth_log_shift(dist.independent(dist.Exponential()), "constant")
    assert est.ipa_lr_path(c, x, 0.7)[0] == 0.0


def test_option_threshold_far_out_has_zero_derivative():
    m = models.AmericanOptionModel(dividends=(0.0,), thresholds=(1e4,))
    r = est.option_threshold_derivative(m, n_reps=2000)
    assert r.mean == pytest.approx(0.0, abs=1e-12)


def test_option_exercise_gap_sign(rng):
    # at the threshold, continuing is worth more than exercising, so exercise - continue < 0
    m = models.AmericanOptionModel()
    x = m.sample(rng, 200_000)
    tilde = m.thresholds[0] - m.escrow(0)
    gap = m.payoff(x, branch=(0, tilde, True)) - m.payoff(x, branch=(0, tilde, False))
    assert gap.mean() + 4 * gap.std() / math.sqrt(gap.size) < 0


@pytest.mark.slow
def test_option_against_mc_fd():
    m = models.AmericanOptionModel()
    ref = oracle.mc_fd_oracle(m, 105.0, 0.25)
    r = est.option_threshold_derivative(m, n_reps=100_000, seed=1)
    assert abs(r.mean - ref.mean) < 3 * math.hypot(r.std_error, ref.std_error)


def test_queue_with_irrelevant_admission_has_zero_derivative():
    m = models.GG1Model(5, models.constant_service(0.8), models.constant_service(0.8),
                        models.exponential_interarrival())
    r = est.dpa_derivative(m, 0.5, n_reps=3000)
    assert abs(r.mean) <= 3 * r.std_error + 1e-15


@pytest.mark.slow
def test_dpa_five_customer_against_mc_fd():
    m = models.gg1_five_customer_benchmark()
    ref = oracle.mc_fd_oracle(m, 0.4, 0.01)
    r = est.dpa_derivative(m, 0.4, n_reps=50_000, seed=2)
    assert abs(r.mean - ref.mean) < 3 * math.hypot(r.std_error, ref.std_error)


@pytest.mark.slow
def test_bridge_against_mc_fd():
    m = models.bridge_network()
    ref = oracle.mc_fd_oracle(m, 3.0, 0.02)
    r = est.leibniz_divergence_estimate(m, 3.0, EstimatorConfig(n_reps=200_000, seed=3))
    assert abs(r.mean - ref.mean) < 3 * math.hypot(r.std_error, ref.std_error)


def test_parallel_edges_match_product_rule():
    # d/dtheta F(theta)^2 = 2 F f for two independent Exp(1) edges
    m = models.model_san_density([dist.Exponential()] * 2, [[1, 0], [0, 1]])
    truth = 2 * (1 - math.exp(-1.0)) * math.exp(-1.0)
    r = est.leibniz_divergence_estimate(m, 1.0, EstimatorConfig(n_reps=40_000, seed=4))
    assert abs(r.mean - truth) < 3 * r.std_error
