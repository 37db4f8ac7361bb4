"""Invariant suite run by ``leibniz verify``.

Each check returns a :class:`CheckResult` with the largest observed error
against its tolerance.  The suite is deterministic (fixed seeds).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import distributions as dist
from . import estimators as est
from . import models, numerics, oracle
from .transforms import chart_contains, s_vector


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self):
        out = asdict(self)
        for k in ("max_error", "tolerance"):
            if not math.isfinite(out[k]):
                out[k] = str(out[k])
        return out


CHECKS: list[tuple[str, Callable]] = []


def check(name):
    def wrap(fn):
        CHECKS.append((name, fn))
        return fn
    return wrap


def _result(name, err, tol, detail=""):
    return CheckResult(name, bool(err <= tol), float(err), float(tol), detail)


def _joints():
    return [(n, models.make_density(s)) for n, s in models.TABLE1_CONFIGS] + [
        ("gaussian_lognormal", dist.CopulaJoint(dist.Gaussian(0.5), dist.LogNormal(), dist.LogNormal())),
        ("clayton_uniform", dist.CopulaJoint(dist.Clayton(2.0), dist.Uniform01(), dist.Uniform01())),
        ("fgm_uniform", dist.CopulaJoint(dist.FGM(-0.7), dist.Uniform01(), dist.Uniform01())),
    ]


# ---------------------------------------------------------------------------
# numerics

@check("invert_small_identity")
def _invert(name):
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (2, 3, 4):
        m = rng.normal(size=(1000, n, n)) + 3 * np.eye(n)
        inv, _ = numerics.invert_small(m)
        worst = max(worst, float(np.max(np.abs(m @ inv - np.eye(n)))))
    return _result(name, worst, 1e-10)


@check("leibniz_rules_agree")
def _lemma(name):
    worst = 0.0
    for case in numerics.builtin_moving_domain_cases():
        th = 1.0 if case.name != "square" else 0.5
        surf, div, ref = numerics.verify_leibniz_rules(case, th)
        worst = max(worst, abs(surf - div) / 1e-6, abs(surf - ref) / 1e-5)
    return _result(name, worst, 1.0, "errors scaled by 1e-6 (forms) and 1e-5 (reference)")


@check("mollifier_uniform_convergence")
def _mollify(name):
    worst = 0.0
    for j in (5, 10, 40):
        grid = np.concatenate([np.linspace(-1, -2.0 / j, 25), np.linspace(2.0 / j, 1, 25)])
        for y in grid:
            val = numerics.mollify_1d(lambda z: (np.asarray(z) > 0).astype(float), j, y)
            worst = max(worst, abs(val - float(y > 0)))
    return _result(name, worst, 1e-10)


@check("region_quadrature_stable")
def _quad(name):
    r = numerics.Region2D((0.0, math.exp(0.5) - 1),
                          x2_upper=lambda x1: math.exp(0.5) / (x1 + 1) - 1)
    res = numerics.integrate_region_2d(lambda a, b: np.exp(-a - b), r, 16)
    ref = numerics.adaptive_simpson(
        lambda a: math.exp(-a) * -math.expm1(-(math.exp(0.5) / (a + 1) - 1)),
        0.0, math.exp(0.5) - 1, tol=1e-12)
    return _result(name, abs(res.value - ref), 1e-8, f"value {res.value:.12f}")


# ---------------------------------------------------------------------------
# distributions

@check("score_matches_log_pdf_fd")
def _score(name):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _, d in _joints():
        x = d.sample(rng, 1000)
        h = 1e-6 * np.abs(x)
        num = np.stack([(d.logpdf(x + h * e) - d.logpdf(x - h * e)) / (2 * h[:, k])
                        for k, e in enumerate(np.eye(2))], axis=-1)
        s = d.score_x(x)
        scale = np.maximum(np.abs(num), 1.0)
        worst = max(worst, float(np.max(np.abs(s - num) / scale)))
    return _result(name, worst, 1e-6)


@check("copula_margins_and_mass")
def _copula(name):
    u = np.linspace(0.01, 0.99, 50)
    worst = 0.0
    for c in (dist.Independence(), dist.Clayton(0.5), dist.Clayton(3.0), dist.FGM(1.0),
              dist.FGM(-1.0), dist.Gaussian(0.6)):
        margin = max(float(np.max(np.abs(c.cdf(u, np.ones_like(u)) - u))),
                     float(np.max(np.abs(c.cdf(np.ones_like(u), u) - u))))
        r = numerics.Region2D((0.0, 1.0), x2_upper=np.ones_like, grade_x1=True, grade_x2=True)
        with np.errstate(all="ignore"):
            mass = numerics.integrate_region_2d(
                lambda a, b: np.nan_to_num(c.density(a, b), posinf=0.0), r, 16, fail_tol=1e-3).value
        worst = max(worst, margin / 1e-10, abs(mass - 1) / 1e-6)
    return _result(name, worst, 1.0, "margin errors / 1e-10 and mass errors / 1e-6")


@check("boundary_conditional_ks")
def _ks(name):
    rng = np.random.default_rng(3)
    worst = 0.0
    for d in (models.make_density({"kind": "fgm", "alpha": 1.0}),
              dist.CopulaJoint(dist.Clayton(1.0), dist.Uniform01(), dist.Uniform01())):
        face = (0, 0.0) if isinstance(d.copula, dist.FGM) else (0, 1.0)
        bc = d.boundary_conditional(face)
        pts = bc.sample(rng, 10_000)
        worst = max(worst, stats.kstest(pts[:, 1], bc.cdf).statistic)
    return _result(name, worst, 0.02)


@check("copula_preserves_marginals")
def _margins(name):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _, d in _joints():
        x = d.sample(rng, 10_000)
        for k, m in enumerate(d.marginals):
            worst = max(worst, stats.kstest(x[:, k], m.cdf).statistic)
    return _result(name, worst, 0.02)


# ---------------------------------------------------------------------------
# transforms and models

@check("chart_indicator_equivalence")
def _chart(name):
    rng = np.random.default_rng(5)
    mism = 0
    m = models.model_log_inventory(models.make_density({"kind": "independent"}), 0.5)
    for th in np.concatenate([rng.uniform(0.05, 1.0, 10), rng.uniform(1.0, math.exp(0.25) - 0.01, 10)]):
        x = rng.exponential(size=(10_000, 2)) * 0.5
        direct = m.performance(x, th) > 0
        mism += int(np.sum(chart_contains(m.chart, x, th) != direct))
        if th >= 1.0:
            # the auxiliary coordinate log(x1 + t) <= the sum only when t >= 1
            mism += int(np.sum(m.region.contains(m.region_map(x, th)) != direct))
    return _result(name, mism, 0, "mismatching points")


@check("chart_roundtrip_and_velocity")
def _roundtrip(name):
    rng = np.random.default_rng(6)
    c = models.model_log_inventory(models.make_density({"kind": "independent"}), 0.5).chart
    worst = 0.0
    for th in (0.3, 0.8, 1.0, 1.2):
        v = rng.uniform(0.01, 0.99, (200, 2))
        x = c.h(v, th)
        worst = max(worst, float(np.max(np.abs(c.h(c.h_inverse(x, th), th) - x))) / 1e-10)
        fd = (c.h(v, th + 1e-6) - c.h(v, th - 1e-6)) / 2e-6
        rel = np.abs(fd - c.dtheta_h(v, th)) / np.maximum(np.abs(fd), 1e-3)
        worst = max(worst, float(np.max(rel)) / 1e-5)
    return _result(name, worst, 1.0, "scaled by 1e-10 (roundtrip) and 1e-5 (velocity)")


@check("log_inventory_s_and_d_constants")
def _sd(name):
    rng = np.random.default_rng(7)
    m = models.model_log_inventory(models.make_density({"kind": "independent"}), 0.5)
    x = rng.exponential(size=(500, 2))
    s = s_vector(m.transform, x, 1.0)
    d = est.d_values(m, x, 1.0)
    return _result(name, max(float(np.max(np.abs(s - 1))), float(np.max(np.abs(d - 2)))), 1e-12)


@check("ipa_lr_identity")
def _ipalr(name):
    d = models.make_density({"kind": "fgm", "alpha": 1.0})
    worst = max(oracle.verify_identity_ipalr(models.model_smooth_log_shift(d, p), 500)
                for p in ("linear", "quadratic", "constant"))
    return _result(name, worst, 1e-5)


@check("san_image_theta_free")
def _san(name):
    rng = np.random.default_rng(8)
    m = models.bridge_network()
    x = m.sample(rng, 10_000)
    bad = sum(int(np.sum(m.transform.g(x, th) < 0)) for th in (0.5, 1.0, 3.0, 10.0))
    surf = est.surface_term(m, 3.0, est.EstimatorConfig(n_reps=100))
    return _result(name, bad + abs(surf.value), 0.0, "negative image coordinates + |surface|")


@check("option_branch_consistency")
def _option(name):
    rng = np.random.default_rng(9)
    m = models.AmericanOptionModel(dividends=(2.0, 1.0), dates=(0.3, 0.6, 1.0),
                                   thresholds=(110.0, 108.0), k=1)
    x = m.sample(rng, 5000)
    base = m.payoff(x)
    st = np.full(len(x), m.s_tilde0)
    for i in range(2):
        st = m.h(x[:, i], st, m.dt(i))
    ex = st + m.escrow(1) > m.thresholds[1]
    br = np.where(ex, m.payoff(x, branch=(1, st, True)), m.payoff(x, branch=(1, st, False)))
    return _result(name, float(np.max(np.abs(br - base))), 0.0)


# ---------------------------------------------------------------------------
# estimators

@check("surface_gating_counters")
def _gating(name):
    cfg = est.EstimatorConfig(n_reps=2000, surface_reps=3000, seed=1)
    draws = {}
    for key in ("lognormal_0.9", "clayton_gamma_1", "independent", "fgm"):
        m = models.model_log_inventory(models.make_density(dict(models.TABLE1_CONFIGS)[key]), 0.5)
        draws[key] = est.leibniz_integral_estimate(m, 1.0, cfg).boundary_draws
    expected = {"lognormal_0.9": 0, "clayton_gamma_1": 0, "independent": 0, "fgm": 6000}
    err = sum(abs(draws[k] - expected[k]) for k in expected)
    return _result(name, err, 0, str(draws))


@check("instability_detection")
def _instability(name):
    cfg = est.EstimatorConfig(n_reps=10_000, seed=2)
    flags = {}
    for shape in (0.5, 2.0):
        m = models.model_log_inventory(dist.clayton_gamma(shape), 0.5)
        flags[shape] = est.leibniz_integral_estimate(m, 1.0, cfg).unstable
    return _result(name, 0 if flags == {0.5: True, 2.0: False} else 1, 0, str(flags))


@check("determinism_across_workers")
def _determinism(name):
    m = models.model_log_inventory(models.make_density({"kind": "fgm"}), 0.5)
    a = est.leibniz_integral_estimate(m, 1.0, est.EstimatorConfig(n_reps=5000, seed=11, workers=1))
    b = est.leibniz_integral_estimate(m, 1.0, est.EstimatorConfig(n_reps=5000, seed=11, workers=4))
    return _result(name, 0 if a == b else 1, 0)


@check("estimators_match_oracle")
def _unbiased(name):
    cfg = est.EstimatorConfig(n_reps=10_000, seed=3)
    worst = 0.0
    for key in ("independent", "fgm", "lognormal_0.1", "clayton_gamma_2"):
        d = models.make_density(dict(models.TABLE1_CONFIGS)[key])
        truth = oracle.truth_log_inventory(d, 0.5, 1.0, cross_check=False).derivative
        m = models.model_log_inventory(d, 0.5)
        for e in ("leibniz_integral", "leibniz_divergence"):
            r = est.run_estimator(e, m, 1.0, cfg)
            worst = max(worst, abs(r.mean - truth) / r.std_error)
    return _result(name, worst, 4.0, "max |estimate - truth| / SE")


# ---------------------------------------------------------------------------
# oracle

@check("oracle_backends_agree")
def _oracle(name):
    worst = 0.0
    for key, settings in models.TABLE1_CONFIGS:
        o = oracle.truth_log_inventory(models.make_density(settings), 0.5, 1.0)
        worst = max(worst, o.discrepancy)
    return _result(name, worst, 1e-7)


@check("oracle_fd_step_stable")
def _oracle_step(name):
    d = models.make_density({"kind": "fgm"})
    a = oracle.truth_log_inventory(d, 0.5, 1.0, cross_check=False).derivative
    b = oracle.truth_log_inventory(d, 0.5, 1.0, delta=5e-5, cross_check=False).derivative
    return _result(name, abs(a - b), 1e-6)


@check("option_quadrature_stable")
def _option_quad(name):
    m = models.AmericanOptionModel()
    a = oracle.option_2period_value(m, order=64)
    b = oracle.option_2period_value(m, order=128)
    return _result(name, abs(a - b), 1e-8)


def run_checks(names=None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        if names is not None and name not in names:
            continue
        start = time.perf_counter()
        try:
            res = fn(name)
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(name, False, math.inf, 0.0, f"{type(exc).__name__}: {exc}")
        out.append(CheckResult(res.name, res.passed, res.max_error, res.tolerance, res.detail,
                               time.perf_counter() - start))
    return out
