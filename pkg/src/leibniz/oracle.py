"""Deterministic ground truth for the benchmark derivatives.

Expectations of indicator performances are computed by region quadrature
and differentiated by a central difference with a small step; a second,
independent backend (adaptive Simpson on a one-dimensional conditional-CDF
form) cross-checks the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np
from scipy import special

from . import distributions as dist
from .estimators import EstimatorConfig, fd_estimate
from .models import AmericanOptionModel, GG1Model, Model
from .numerics import (NonConvergent, Region2D, adaptive_simpson, central_difference,
                       gauss_legendre, integrate_region_2d)
from .transforms import s_vector

ORACLE_DELTA = 1e-4


class NoOracle(LookupError):
    pass


@dataclass(frozen=True)
class OracleValue:
    derivative: float
    value: float
    quad_error: float
    order: int
    cross_check: Optional[float] = None

    @property
    def discrepancy(self) -> float:
        return abs(self.derivative - self.cross_check) if self.cross_check is not None else 0.0


# ---------------------------------------------------------------------------
# log-inventory region probability

def _upper2(x1, theta, q):
    return math.exp(q) / (x1 + theta) - theta


def log_inventory_probability(d, q: float, theta: float, *, order: int = 32):
    """``P((X1 + t)(X2 + t) < e^q)`` by graded tensor Gauss-Legendre.

    Copula densities are integrated in the copula scale, where the region is
    ``u2 < F2(B2(Q1(u1)))`` and the integrand is the bounded-mass copula
    density; the bivariate lognormal is integrated in log coordinates.
    Returns a :class:`~leibniz.numerics.QuadratureResult`.
    """
    x1_max = math.exp(q) / theta - theta
    if not x1_max > 0:
        from .numerics import QuadratureResult
        return QuadratureResult(0.0, 0.0, order)
    if isinstance(d, dist.CopulaJoint):
        m1, m2, cop = d.m1, d.m2, d.copula

        def upper(u1):
            x1 = m1.quantile(u1)
            return m2.cdf(np.maximum(_upper2(x1, theta, q), 0.0))

        region = Region2D((0.0, float(m1.cdf(x1_max))), x2_upper=upper,
                          grade_x1=True, grade_x2=True)
        with np.errstate(all="ignore"):
            return integrate_region_2d(lambda u, v: _safe(cop.density(u, v)), region, order)
    if isinstance(d, dist.BivariateLogNormal):
        r = d.rho
        # z = log x; truncate the lower tail where the normal mass is < 1e-16
        lo = -8.5

        def upper(z1):
            return np.log(np.maximum(_upper2(np.exp(z1), theta, q), 1e-300))

        def pdf(z1, z2):
            qf = (z1 * z1 - 2 * r * z1 * z2 + z2 * z2) / (1 - r * r)
            return np.exp(-0.5 * qf) / (2 * math.pi * math.sqrt(1 - r * r))

        region = Region2D((lo, math.log(x1_max)), x2_upper=upper,
                          x2_lower=lambda z1: np.full_like(z1, lo))
        return integrate_region_2d(pdf, region, order)
    raise NoOracle(f"no region oracle for {type(d).__name__}")


def _safe(v):
    return np.where(np.isfinite(v), v, 0.0)


def log_inventory_probability_simpson(d, q: float, theta: float, tol: float = 1e-11) -> float:
    """Same probability as ``int_0^{F1(x1max)} P(X2 <= B2 | X1 = Q1(u)) du``."""
    x1_max = math.exp(q) / theta - theta
    if not x1_max > 0:
        return 0.0
    m1 = d.marginals[0]

    def integrand(u):
        if u <= 0.0:
            u = 1e-300
        x1 = float(m1.quantile(u))
        b = _upper2(x1, theta, q)
        if b <= 0:
            return 0.0
        return float(d.conditional_cdf_2_given_1(x1, b))

    top = float(m1.cdf(x1_max))
    # split near the origin where the conditional CDF changes fastest
    cuts = [0.0] + [top * 10.0 ** -k for k in range(8, 0, -1)] + [top]
    return sum(adaptive_simpson(integrand, a, b, tol=tol) for a, b in zip(cuts[:-1], cuts[1:]))


def truth_log_inventory(d, q: float, theta: float, *, delta: float = ORACLE_DELTA,
                        order: int = 32, cross_check: bool = True) -> OracleValue:
    """Derivative of ``P(log(X1 + t) + log(X2 + t) < q)`` at ``t = theta``.

    Raises
    ------
    NonConvergent
        If the region quadrature fails its refinement check.
    """
    if q == -math.inf or math.exp(q) <= theta ** 2 + delta:
        return OracleValue(0.0, 0.0, 0.0, order, 0.0 if cross_check else None)
    res = {}

    def prob(t):
        r = log_inventory_probability(d, q, t, order=order)
        res[t] = r
        return r.value

    deriv = central_difference(prob, theta, delta)
    centre = log_inventory_probability(d, q, theta, order=order)
    err = max(r.error for r in res.values())
    check = None
    if cross_check:
        check = central_difference(lambda t: log_inventory_probability_simpson(d, q, t),
                                   theta, delta)
    return OracleValue(deriv, centre.value, err, max(r.order for r in res.values()), check)


# ---------------------------------------------------------------------------
# threshold indicator

def truth_max_threshold(d, theta: float, *, delta: float = ORACLE_DELTA) -> float:
    """Derivative of ``P(max(X1, X2) <= theta)``; exact for the uniform square."""
    if theta <= 0:
        return 0.0
    if all(isinstance(m, dist.Uniform01) for m in d.marginals) and \
            isinstance(getattr(d, "copula", None), dist.Independence):
        return 2.0 * theta

    def prob(t):
        region = Region2D((0.0, t), x2_upper=lambda x1: np.full_like(x1, t))
        return integrate_region_2d(lambda a, b: d.pdf(np.stack([a, b], axis=-1)), region, 16).value

    return central_difference(prob, theta, min(delta, 0.5 * theta))


# ---------------------------------------------------------------------------
# pointwise IPA-LR reduction

def verify_identity_ipalr(m: Model, n_points: int = 500, *, seed: int = 0,
                          theta_range=(0.5, 2.0), delta: float = 1e-5) -> float:
    """Max discrepancy between the volume-form integrand and ``d/dtheta phi(g)``.

    At random ``(x, theta)`` the left side is
    ``phi(g) d + s . grad log f phi + phi div s + grad_x(phi o g) . s`` and the
    right side a central difference in theta.  Errors are relative with a
    unit floor on the scale (``|L - R| / max(1, |R|)``).
    """
    rng = np.random.default_rng(seed)
    x = m.sample(rng, n_points)
    thetas = rng.uniform(*theta_range, n_points)
    t = m.transform
    worst = 0.0
    for xi, th in zip(x, thetas):
        xi = xi[None, :]
        y = t.g(xi, th)
        phi = m.phi(y)[0]
        s = s_vector(t, xi, th)[0]
        score = m.density.score_x(xi)[0]
        div_s = float(t.div_s(xi, th)[0])
        d = -(s @ score + div_s)
        grad_x = t.jacobian(xi, th)[0].T @ m.phi_grad(y)[0]
        lhs = phi * d + (s @ score) * phi + phi * div_s + grad_x @ s
        rhs = central_difference(lambda u: float(m.phi(t.g(xi, u))[0]), th, delta)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst


# ---------------------------------------------------------------------------
# American call, two periods

def _call_forward(m: AmericanOptionModel, s_tilde1, dt):
    """``E((h(X, S, dt) - K)^+)`` under GBM (undiscounted Black-Scholes)."""
    s = np.asarray(s_tilde1, dtype=float)
    vol = m.sigma * math.sqrt(dt)
    d1 = (np.log(s / m.K) + (m.r + 0.5 * m.sigma ** 2) * dt) / vol
    return s * math.exp(m.r * dt) * special.ndtr(d1) - m.K * special.ndtr(d1 - vol)


def _call_forward_quadrature(m: AmericanOptionModel, s_tilde1, dt, order):
    """Same expectation by Gauss-Legendre split at the strike crossing."""
    nodes, weights = gauss_legendre(order)
    out = []
    for s in np.atleast_1d(s_tilde1):
        kink = float(m.h_inverse(m.K, s, dt))
        hi = 12.0
        if kink >= hi:
            out.append(0.0)
            continue
        lo = max(kink, -12.0)
        z = 0.5 * (hi - lo) * (nodes + 1) + lo
        w = 0.5 * (hi - lo) * weights
        out.append(float(np.sum(w * (m.h(z, s, dt) - m.K) * np.exp(-0.5 * z * z)))
                   / math.sqrt(2 * math.pi))
    return np.asarray(out)


def option_2period_value(m: AmericanOptionModel, s: Optional[float] = None, *,
                         order: int = 64, inner: str = "closed") -> float:
    """``E(J_T)`` for the two-period call with threshold ``s``.

    The outer normal innovation is integrated with Gauss-Legendre on
    ``[-12, x*]`` and ``[x*, 12]`` (panels of ``order`` nodes, graded near
    the split), ``x*`` being where the cum-dividend price crosses ``s``.
    """
    if m.n_periods != 2:
        raise NoOracle("only the two-period oracle is implemented")
    s = m.thresholds[0] if s is None else s
    dt1, dt2 = m.dt(0), m.dt(1)
    esc = m.escrow(0)
    xstar = float(m.h_inverse(s - esc, m.s_tilde0, dt1))
    nodes, weights = gauss_legendre(order)
    disc = math.exp(-m.r * m.maturity)
    growth = math.exp(m.r * (m.maturity - m.dates[0]))
    total = 0.0
    below = -12.0 + (xstar + 12.0) * np.linspace(0, 1, 9)
    above = xstar + (12.0 - xstar) * np.linspace(0, 1, 9)
    for edges, exercised in ((below, False), (above, True)):
        for a, b in zip(edges[:-1], edges[1:]):
            if b <= a:
                continue
            z = 0.5 * (b - a) * (nodes + 1) + a
            w = 0.5 * (b - a) * weights * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            st1 = m.h(z, m.s_tilde0, dt1)
            if exercised:
                total += float(np.sum(w * (st1 + esc - m.K) * growth))
            else:
                cont = (_call_forward(m, st1, dt2) if inner == "closed"
                        else _call_forward_quadrature(m, st1, dt2, order))
                total += float(np.sum(w * cont))
    return disc * total


def truth_option_2period(m: AmericanOptionModel, *, order: int = 64,
                         rel_delta: float = 1e-3) -> OracleValue:
    """Derivative of the two-period expected payoff in the threshold."""
    if m.n_periods != 2:
        raise NoOracle("only the two-period oracle is implemented")
    s = m.thresholds[0]
    deriv = central_difference(lambda t: option_2period_value(m, t, order=order), s, rel_delta * s)
    check = central_difference(lambda t: option_2period_value(m, t, order=order, inner="quadrature"),
                               s, rel_delta * s)
    v1 = option_2period_value(m, s, order=order)
    v2 = option_2period_value(m, s, order=2 * order)
    if abs(v1 - v2) > 1e-6:
        raise NonConvergent(f"option quadrature changed by {abs(v1 - v2):.3g} on refinement")
    return OracleValue(deriv, v2, abs(v1 - v2), 2 * order, check)


# ---------------------------------------------------------------------------
# queue

def truth_gg1_enumerate(m: GG1Model, theta: float):
    """Exact ``(E psi, dE psi / dtheta)`` when services ignore ``x`` and gaps are fixed.

    The admission flags partition ``(0, 1)^n`` into boxes with probability
    ``theta^a (1 - theta)^b``; on each box the performance is constant in
    ``x`` so the expectation is a finite sum.
    """
    n = m.n_customers
    pats = np.array(list(product([True, False], repeat=n)))
    x = np.full(pats.shape, 0.5)
    s, ds = m.services(x, theta, pats)
    probe = np.stack([m.service_plus(theta, np.full(n, u)) for u in (0.1, 0.9)])
    if not np.allclose(probe[0], probe[1]):
        raise NoOracle("enumeration oracle needs services that ignore x")
    y = np.asarray(m.interarrival(None, (len(pats), n - 1)), dtype=float)
    val, dval = m.lindley(s, ds, y)
    a = pats.sum(axis=1)
    b = n - a
    p = theta ** a * (1 - theta) ** b
    dp = (a * theta ** np.maximum(a - 1, 0) * (1 - theta) ** b
          - b * theta ** a * (1 - theta) ** np.maximum(b - 1, 0))
    return float(np.sum(p * val)), float(np.sum(dp * val + p * dval))


def mc_fd_oracle(m, theta: float, delta: float, n_reps: int = 1_000_000, seed: int = 12345):
    """Common-random-numbers central difference of the simulated mean."""
    return fd_estimate(m, theta, EstimatorConfig(fd_delta=delta, n_reps=n_reps, seed=seed,
                                                 crn=True, block_size=65536))
