"""Marginal laws, bivariate copulas and joint densities with analytic scores.

Joint densities expose what the derivative estimators need: a sampler, the
gradient of ``log f`` in ``x``, boundary densities of the marginals and a
sampler for the conditional law of ``X`` on each face of its support.
All array methods are vectorised over leading axes; points carry their
coordinates in the last axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

_TINY = 2.0 ** -54


class OutsideSupport(ValueError):
    pass


class NumericalInversionFailure(ArithmeticError):
    pass


class UnsupportedConditional(NotImplementedError):
    """No built-in sampler exists for this boundary conditional."""


def uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1)."""
    return rng.random(size) + _TINY


def bisect_increasing(fun: Callable, target, lo, hi, *, tol: float = 1e-12,
                      max_iter: int = 200):
    """Vectorised bisection for ``fun(x) = target`` with ``fun`` increasing."""
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    if np.any(fun(lo) > target) or np.any(fun(hi) < target):
        raise NumericalInversionFailure("target not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = fun(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol):
            return 0.5 * (lo + hi)
    raise NumericalInversionFailure(f"bisection did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# marginals

class Marginal:
    """Univariate law with density, CDF, quantile and score ``d/dx log pdf``."""

    support: tuple[float, float] = (-math.inf, math.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def logpdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def score(self, x):
        raise NotImplementedError

    def boundary_density(self, endpoint: float) -> float:
        """Limit of the density at a finite support endpoint (may be inf)."""
        a, b = self.support
        eps = 1e-300 if endpoint == a else -1e-300
        if endpoint not in (a, b):
            raise OutsideSupport(f"{endpoint} is not an endpoint of {self.support}")
        return float(self.pdf(np.asarray(endpoint + eps)))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.quantile(uniform_open(rng, size))

    def mean(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(Marginal):
    rate: float = 1.0
    support = (0.0, math.inf)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)

    def cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(np.asarray(x, dtype=float), 0.0))

    def quantile(self, p):
        return -np.log1p(-np.asarray(p, dtype=float)) / self.rate

    def score(self, x):
        return np.full(np.shape(x), -self.rate)

    def boundary_density(self, endpoint):
        if endpoint != 0.0:
            raise OutsideSupport(endpoint)
        return self.rate

    def mean(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class Gamma(Marginal):
    """Gamma(shape, 1)."""

    shape: float = 1.0
    support = (0.0, math.inf)

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("shape must be positive")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.shape - 1.0) * np.log(x) - x - special.gammaln(self.shape)

    def cdf(self, x):
        return special.gammainc(self.shape, np.maximum(np.asarray(x, dtype=float), 0.0))

    def quantile(self, p):
        return special.gammaincinv(self.shape, np.asarray(p, dtype=float))

    def score(self, x):
        x = np.asarray(x, dtype=float)
        return (self.shape - 1.0) / x - 1.0

    def boundary_density(self, endpoint):
        if endpoint != 0.0:
            raise OutsideSupport(endpoint)
        if self.shape < 1:
            return math.inf
        return 1.0 if self.shape == 1 else 0.0

    def sample(self, rng, size):
        # numpy's standard_gamma is the Marsaglia-Tsang squeeze (with the
        # U^(1/a) boost for shape < 1)
        return rng.standard_gamma(self.shape, size)

    def mean(self):
        return self.shape


@dataclass(frozen=True)
class LogNormal(Marginal):
    mu: float = 0.0
    sigma: float = 1.0
    support = (0.0, math.inf)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        z = (lx - self.mu) / self.sigma
        return -0.5 * z * z - lx - math.log(self.sigma * math.sqrt(2 * math.pi))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return special.ndtr((np.log(x) - self.mu) / self.sigma)

    def quantile(self, p):
        return np.exp(self.mu + self.sigma * special.ndtri(np.asarray(p, dtype=float)))

    def score(self, x):
        x = np.asarray(x, dtype=float)
        return -((np.log(x) - self.mu) / self.sigma ** 2 + 1.0) / x

    def boundary_density(self, endpoint):
        if endpoint != 0.0:
            raise OutsideSupport(endpoint)
        return 0.0

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma ** 2)


@dataclass(frozen=True)
class Uniform01(Marginal):
    support = (0.0, 1.0)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0) & (x <= 1), 0.0, -np.inf)

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def quantile(self, p):
        return np.asarray(p, dtype=float)

    def score(self, x):
        return np.zeros(np.shape(x))

    def boundary_density(self, endpoint):
        if endpoint not in (0.0, 1.0):
            raise OutsideSupport(endpoint)
        return 1.0

    def mean(self):
        return 0.5


@dataclass(frozen=True)
class Normal(Marginal):
    mu: float = 0.0
    sigma: float = 1.0

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * math.sqrt(2 * math.pi))

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def quantile(self, p):
        return self.mu + self.sigma * special.ndtri(np.asarray(p, dtype=float))

    def score(self, x):
        return -(np.asarray(x, dtype=float) - self.mu) / self.sigma ** 2

    def mean(self):
        return self.mu


@dataclass(frozen=True)
class Beta(Marginal):
    """Beta(a, b) on (0, 1); Beta(2, 1) has density 2x."""

    a: float = 1.0
    b: float = 1.0
    support = (0.0, 1.0)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return ((self.a - 1) * np.log(x) + (self.b - 1) * np.log1p(-x)
                    - special.betaln(self.a, self.b))

    def cdf(self, x):
        return special.betainc(self.a, self.b, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def quantile(self, p):
        return special.betaincinv(self.a, self.b, np.asarray(p, dtype=float))

    def score(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a - 1) / x - (self.b - 1) / (1 - x)

    def boundary_density(self, endpoint):
        if endpoint not in (0.0, 1.0):
            raise OutsideSupport(endpoint)
        p = self.a if endpoint == 0.0 else self.b
        if p < 1:
            return math.inf
        if p > 1:
            return 0.0
        return math.exp(-special.betaln(self.a, self.b))

    def mean(self):
        return self.a / (self.a + self.b)


# ---------------------------------------------------------------------------
# copulas

class Copula:
    """Bivariate copula; all built-ins are exchangeable in (u, v)."""

    def cdf(self, u, v):
        raise NotImplementedError

    def density(self, u, v):
        raise NotImplementedError

    def dlog_du(self, u, v):
        """``d/du log c(u, v)``."""
        raise NotImplementedError

    def h(self, u, v):
        """Conditional CDF ``P(V <= v | U = u) = dC/du``."""
        raise NotImplementedError

    def h_inverse(self, u, w):
        """Solve ``h(u, v) = w`` for v; bisection fallback."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        u, w = np.broadcast_arrays(u, w)
        return bisect_increasing(lambda v: self.h(u, v), w, 0.0, 1.0)

    def boundary_law(self, u0: float):
        """Law of V given U = u0 for u0 in {0, 1}.

        Returns ``("independent", None)``, ``("point_mass", v)`` or
        ``("transformed", None)``.
        """
        raise NotImplementedError

    def sample(self, rng, size):
        u = uniform_open(rng, size)
        v = self.h_inverse(u, uniform_open(rng, size))
        return u, v


@dataclass(frozen=True)
class Independence(Copula):
    def cdf(self, u, v):
        return np.asarray(u) * np.asarray(v)

    def density(self, u, v):
        return np.ones(np.broadcast_shapes(np.shape(u), np.shape(v)))

    def dlog_du(self, u, v):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v)))

    def h(self, u, v):
        return np.broadcast_to(np.asarray(v, dtype=float),
                               np.broadcast_shapes(np.shape(u), np.shape(v))).copy()

    def h_inverse(self, u, w):
        return np.broadcast_to(np.asarray(w, dtype=float),
                               np.broadcast_shapes(np.shape(u), np.shape(w))).copy()

    def boundary_law(self, u0):
        return "independent", None


@dataclass(frozen=True)
class Clayton(Copula):
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Clayton alpha must be positive")

    def _log_a(self, u, v):
        # log(u^-a + v^-a - 1), stable for tiny u, v
        a = self.alpha
        lse = np.logaddexp(-a * np.log(u), -a * np.log(v))
        return lse + np.log(-np.expm1(-lse))

    def cdf(self, u, v):
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.exp(-self._log_a(u, v) / self.alpha)
        return np.where((u <= 0) | (v <= 0), 0.0, out)

    def log_density(self, u, v):
        a = self.alpha
        return (math.log1p(a) - (1 + a) * (np.log(u) + np.log(v))
                - (2 + 1 / a) * self._log_a(u, v))

    def density(self, u, v):
        return np.exp(self.log_density(np.asarray(u, float), np.asarray(v, float)))

    def dlog_du(self, u, v):
        a = self.alpha
        u, v = np.asarray(u, float), np.asarray(v, float)
        ratio = np.exp(-a * np.log(u) - self._log_a(u, v))  # u^-a / A
        return (-(1 + a) + (2 * a + 1) * ratio) / u

    def h(self, u, v):
        a = self.alpha
        u, v = np.asarray(u, float), np.asarray(v, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(-(a + 1) * np.log(u) - (1 / a + 1) * self._log_a(u, v))
        out = np.where(u <= 0, np.where(v > 0, 1.0, 0.0), out)
        return np.where(v <= 0, 0.0, out)

    def h_inverse(self, u, w):
        a = self.alpha
        u, w = np.asarray(u, float), np.asarray(w, float)
        # v^-a = (w^(-a/(1+a)) - 1) u^-a + 1, kept in logs for tiny u
        with np.errstate(divide="ignore"):
            log_t = np.logaddexp(np.log(np.expm1(-a / (1 + a) * np.log(w))) - a * np.log(u), 0.0)
        return np.exp(-log_t / a)

    def boundary_law(self, u0):
        if u0 == 0.0:
            return "point_mass", 0.0
        return "transformed", None

    def kendall_tau(self) -> float:
        return self.alpha / (self.alpha + 2.0)


@dataclass(frozen=True)
class FGM(Copula):
    """Farlie-Gumbel-Morgenstern copula, ``alpha`` in [-1, 1]."""

    alpha: float = 1.0

    def __post_init__(self):
        if not -1 <= self.alpha <= 1:
            raise ValueError("FGM alpha must lie in [-1, 1]")

    def cdf(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        return u * v * (1 + self.alpha * (1 - u) * (1 - v))

    def density(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        return 1 + self.alpha * (1 - 2 * u) * (1 - 2 * v)

    def dlog_du(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        return -2 * self.alpha * (1 - 2 * v) / self.density(u, v)

    def h(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        return v + self.alpha * v * (1 - v) * (1 - 2 * u)

    def h_inverse(self, u, w):
        u, w = np.asarray(u, float), np.asarray(w, float)
        k = self.alpha * (1 - 2 * u)
        # k v^2 - (1 + k) v + w = 0, smaller root; rationalised to avoid k -> 0 loss
        disc = np.sqrt((1 + k) ** 2 - 4 * k * w)
        return 2 * w / ((1 + k) + disc)

    def boundary_law(self, u0):
        return ("independent", None) if self.alpha == 0 else ("transformed", None)


@dataclass(frozen=True)
class Gaussian(Copula):
    rho: float = 0.0

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise ValueError("Gaussian rho must lie in (-1, 1)")

    def cdf(self, u, v):
        from scipy.stats import multivariate_normal

        a = special.ndtri(np.asarray(u, float))
        b = special.ndtri(np.asarray(v, float))
        cov = [[1.0, self.rho], [self.rho, 1.0]]
        pts = np.stack(np.broadcast_arrays(a, b), axis=-1)
        return multivariate_normal(mean=[0, 0], cov=cov).cdf(pts)

    def log_density(self, u, v):
        r = self.rho
        a = special.ndtri(np.asarray(u, float))
        b = special.ndtri(np.asarray(v, float))
        return (-0.5 * math.log1p(-r * r)
                - (r * r * (a * a + b * b) - 2 * r * a * b) / (2 * (1 - r * r)))

    def density(self, u, v):
        return np.exp(self.log_density(u, v))

    def dlog_du(self, u, v):
        r = self.rho
        a = special.ndtri(np.asarray(u, float))
        b = special.ndtri(np.asarray(v, float))
        dda = -(r * r * a - r * b) / (1 - r * r)
        return dda / (np.exp(-0.5 * a * a) / math.sqrt(2 * math.pi))

    def h(self, u, v):
        r = self.rho
        a = special.ndtri(np.asarray(u, float))
        b = special.ndtri(np.asarray(v, float))
        return special.ndtr((b - r * a) / math.sqrt(1 - r * r))

    def h_inverse(self, u, w):
        r = self.rho
        a = special.ndtri(np.asarray(u, float))
        return special.ndtr(r * a + math.sqrt(1 - r * r) * special.ndtri(np.asarray(w, float)))

    def boundary_law(self, u0):
        if self.rho == 0:
            return "independent", None
        return "point_mass", (u0 if self.rho > 0 else 1.0 - u0)


# ---------------------------------------------------------------------------
# boundary conditionals

class BoundaryKind(enum.Enum):
    REDUCES_TO_MARGINAL = "reduces_to_marginal"
    POINT_MASS = "point_mass"
    TRANSFORMED_CDF = "transformed_cdf"
    VANISHING = "vanishing"


@dataclass(frozen=True)
class BoundaryConditional:
    """Law of ``X`` given ``X_i = endpoint`` on one face of the support.

    ``density`` is the marginal density of ``X_i`` at the face.  For
    ``POINT_MASS`` the conditional law is concentrated on ``point``; for
    ``TRANSFORMED_CDF`` the other coordinate is drawn by inverting ``cdf``.
    """

    index: int
    endpoint: float
    kind: BoundaryKind
    density: float
    point: Optional[tuple] = None
    cdf: Optional[Callable] = None
    sampler: Optional[Callable] = None

    def sample(self, rng, size) -> np.ndarray:
        if self.kind is BoundaryKind.POINT_MASS:
            return np.tile(np.asarray(self.point, dtype=float), (size, 1))
        if self.sampler is None:
            raise UnsupportedConditional(f"no sampler for {self.kind.value} face")
        return self.sampler(rng, size)


def conditional_cdf_fgm_at_zero(m2: Marginal, x2, alpha: float = 1.0):
    """``P(X2 <= x2 | X1 = 0)`` under an FGM copula: ``F + a F (1 - F)``.

    At ``alpha = 1`` this is ``2 F2(x2) - F2(x2)^2``.
    """
    f2 = m2.cdf(x2)
    return f2 + alpha * f2 * (1 - f2)


def sample_fgm_at_zero(m2: Marginal, rng, size, alpha: float = 1.0):
    """Draw ``X2 | X1 = 0`` under FGM by solving the quadratic in ``F2``."""
    w = uniform_open(rng, size)
    return m2.quantile(FGM(alpha).h_inverse(np.zeros_like(w), w))


# ---------------------------------------------------------------------------
# joint densities

class JointDensity2:
    """Bivariate input law on a rectangle."""

    marginals: tuple[Marginal, Marginal]
    theta_dependent: bool = False
    name: str = "joint"

    @property
    def support(self):
        return tuple(m.support for m in self.marginals)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def logpdf(self, x):
        raise NotImplementedError

    def score_x(self, x):
        raise NotImplementedError

    def score_theta(self, x, theta):
        """``d/dtheta log f``; identically zero for the built-ins."""
        return np.zeros(np.shape(x)[:-1])

    def sample(self, rng, size) -> np.ndarray:
        raise NotImplementedError

    def conditional_cdf_2_given_1(self, x1, x2):
        """``P(X2 <= x2 | X1 = x1)``."""
        raise NotImplementedError

    def boundary_conditional(self, face) -> BoundaryConditional:
        raise NotImplementedError

    def _check_interior(self, x):
        x = np.asarray(x, dtype=float)
        for i, (a, b) in enumerate(self.support):
            xi = x[..., i]
            if np.any(~(xi > a) | ~(xi < b)):
                raise OutsideSupport(f"coordinate {i} outside ({a}, {b})")
        return x


@dataclass(frozen=True)
class CopulaJoint(JointDensity2):
    """``f(x) = c(F1(x1), F2(x2)) f1(x1) f2(x2)``."""

    copula: Copula
    m1: Marginal
    m2: Marginal
    name: str = "copula"

    @property
    def marginals(self):
        return (self.m1, self.m2)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        u, v = self.m1.cdf(x[..., 0]), self.m2.cdf(x[..., 1])
        return (np.log(self.copula.density(u, v))
                + self.m1.logpdf(x[..., 0]) + self.m2.logpdf(x[..., 1]))

    def score_x(self, x):
        x = self._check_interior(x)
        x1, x2 = x[..., 0], x[..., 1]
        u, v = self.m1.cdf(x1), self.m2.cdf(x2)
        s1 = self.copula.dlog_du(u, v) * self.m1.pdf(x1) + self.m1.score(x1)
        s2 = self.copula.dlog_du(v, u) * self.m2.pdf(x2) + self.m2.score(x2)
        return np.stack([s1, s2], axis=-1)

    def sample(self, rng, size):
        u, v = self.copula.sample(rng, size)
        return np.stack([self.m1.quantile(u), self.m2.quantile(v)], axis=-1)

    def conditional_cdf_2_given_1(self, x1, x2):
        return self.copula.h(self.m1.cdf(x1), self.m2.cdf(x2))

    def boundary_conditional(self, face):
        i, endpoint = face
        m_i, m_j = self.marginals[i], self.marginals[1 - i]
        lo, hi = m_i.support
        if endpoint not in (lo, hi) or not math.isfinite(endpoint):
            raise UnsupportedConditional(f"face {face} is not a finite endpoint")
        dens = m_i.boundary_density(endpoint)
        u0 = 0.0 if endpoint == lo else 1.0
        law, v0 = self.copula.boundary_law(u0)
        # a point-mass face stays a point mass even with zero density; it contributes 0 either way
        if dens == 0.0 and law != "point_mass":
            return BoundaryConditional(i, endpoint, BoundaryKind.VANISHING, 0.0)

        def place(other):
            pts = np.empty((len(other), 2))
            pts[:, i] = endpoint
            pts[:, 1 - i] = other
            return pts

        if law == "independent":
            return BoundaryConditional(
                i, endpoint, BoundaryKind.REDUCES_TO_MARGINAL, dens,
                cdf=m_j.cdf, sampler=lambda rng, n: place(m_j.sample(rng, n)))
        if law == "point_mass":
            other = m_j.support[0] if v0 == 0.0 else m_j.support[1]
            if not math.isfinite(other):
                raise UnsupportedConditional(f"point mass at infinite endpoint for face {face}")
            pt = [0.0, 0.0]
            pt[i], pt[1 - i] = endpoint, other
            return BoundaryConditional(i, endpoint, BoundaryKind.POINT_MASS, dens, point=tuple(pt))
        if isinstance(self.copula, FGM) or isinstance(self.copula, Clayton):
            cop = self.copula

            def cdf(xj):
                return cop.h(np.full(np.shape(xj), u0), m_j.cdf(xj))

            def sampler(rng, n):
                w = uniform_open(rng, n)
                return place(m_j.quantile(cop.h_inverse(np.full(n, u0), w)))

            return BoundaryConditional(i, endpoint, BoundaryKind.TRANSFORMED_CDF, dens,
                                       cdf=cdf, sampler=sampler)
        raise UnsupportedConditional(f"{type(self.copula).__name__} face {face}")


@dataclass(frozen=True)
class BivariateLogNormal(JointDensity2):
    """``(log X1, log X2)`` standard bivariate normal with correlation ``rho``."""

    rho: float = 0.0
    name: str = "lognormal"

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")

    @property
    def marginals(self):
        return (LogNormal(), LogNormal())

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z1, z2 = np.log(x[..., 0]), np.log(x[..., 1])
        r = self.rho
        q = (z1 * z1 - 2 * r * z1 * z2 + z2 * z2) / (1 - r * r)
        return -0.5 * q - math.log(2 * math.pi) - 0.5 * math.log1p(-r * r) - z1 - z2

    def score_x(self, x):
        x = self._check_interior(x)
        z1, z2 = np.log(x[..., 0]), np.log(x[..., 1])
        r = self.rho
        g1 = -(z1 - r * z2) / (1 - r * r) - 1.0
        g2 = -(z2 - r * z1) / (1 - r * r) - 1.0
        return np.stack([g1 / x[..., 0], g2 / x[..., 1]], axis=-1)

    def sample(self, rng, size):
        n = rng.standard_normal((size, 2)) if np.ndim(size) == 0 else rng.standard_normal((*size, 2))
        chol = np.array([[1.0, 0.0], [self.rho, math.sqrt(1 - self.rho ** 2)]])
        return np.exp(n @ chol.T)

    def conditional_cdf_2_given_1(self, x1, x2):
        with np.errstate(divide="ignore"):
            z1, z2 = np.log(x1), np.log(x2)
        return special.ndtr((z2 - self.rho * z1) / math.sqrt(1 - self.rho ** 2))

    def boundary_conditional(self, face):
        i, endpoint = face
        if endpoint != 0.0:
            raise UnsupportedConditional(f"face {face} is not a finite endpoint")
        return BoundaryConditional(i, endpoint, BoundaryKind.VANISHING, 0.0)


@dataclass(frozen=True)
class ProductDensity:
    """Independent n-variate law (edge lengths of a network)."""

    marginals: tuple
    name: str = "product"

    @property
    def dim(self):
        return len(self.marginals)

    @property
    def support(self):
        return tuple(m.support for m in self.marginals)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(m.logpdf(x[..., k]) for k, m in enumerate(self.marginals))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score_x(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([m.score(x[..., k]) for k, m in enumerate(self.marginals)], axis=-1)

    def score_theta(self, x, theta):
        return np.zeros(np.shape(x)[:-1])

    def sample(self, rng, size):
        u = uniform_open(rng, (size, self.dim))
        return np.stack([m.quantile(u[:, k]) for k, m in enumerate(self.marginals)], axis=-1)

    def boundary_conditional(self, face):
        i, endpoint = face
        m = self.marginals[i]
        if not math.isfinite(endpoint) or endpoint not in m.support:
            raise UnsupportedConditional(f"face {face} is not a finite endpoint")
        dens = m.boundary_density(endpoint)
        if dens == 0.0:
            return BoundaryConditional(i, endpoint, BoundaryKind.VANISHING, 0.0)
        return BoundaryConditional(i, endpoint, BoundaryKind.REDUCES_TO_MARGINAL, dens)


# ---------------------------------------------------------------------------
# convenience constructors and sampling entry point

def independent(m1: Marginal, m2: Optional[Marginal] = None) -> CopulaJoint:
    return CopulaJoint(Independence(), m1, m2 if m2 is not None else m1, name="independent")


def fgm_exponential(alpha: float = 1.0) -> CopulaJoint:
    return CopulaJoint(FGM(alpha), Exponential(), Exponential(), name=f"fgm({alpha:g})")


def clayton_gamma(shape: float, alpha: float = 1.0) -> CopulaJoint:
    return CopulaJoint(Clayton(alpha), Gamma(shape), Gamma(shape),
                       name=f"clayton({alpha:g})-gamma({shape:g})")


def sample_joint(d, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from a joint density; a single point when ``size`` is None."""
    if size is None:
        return d.sample(rng, 1)[0]
    return d.sample(rng, size)


def score_x(d, x):
    return d.score_x(x)


def boundary_conditional(d, face) -> BoundaryConditional:
    return d.boundary_conditional(face)
