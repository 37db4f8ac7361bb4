"""Benchmark problems: threshold indicator, log-inventory cycle, stochastic
activity network, American call with threshold exercise, and a G/G/1 queue
with parameter-dependent admission.

A :class:`Model` bundles a density with a performance ``psi(x, theta)``
and, where available, a push-out transform with outer function ``phi`` and a
domain chart.  The option and queue models carry their own simulators and
are consumed by the conditional estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from . import distributions as dist
from .transforms import (DomainChart, RegionU, Transform,
                         log_inventory_chart, log_shift_transform, scale_transform,
                         scaling_chart)


class InvalidThresholds(ValueError):
    pass


class RankDeficientIncidence(ValueError):
    pass


@dataclass(frozen=True)
class Model:
    """A density plus ``psi(x, theta)`` and the structures the estimators use.

    ``phi`` acts on the transform image; ``phi_grad`` is set only for smooth
    outer functions (indicator models leave it None).  ``active`` lists the
    coordinates the transform acts on; the rest are held fixed (conditioned
    on) by the integral estimator.
    """

    name: str
    density: object
    performance: Callable
    theta_range: tuple
    transform: Optional[Transform] = None
    phi: Optional[Callable] = None
    phi_grad: Optional[Callable] = None
    chart: Optional[DomainChart] = None
    region: Optional[RegionU] = None
    region_map: Optional[Callable] = None
    q: Optional[float] = None
    active: Optional[tuple] = None
    params: dict = field(default_factory=dict, compare=False)

    @property
    def distribution(self) -> str:
        return getattr(self.density, "name", type(self.density).__name__)

    @property
    def dim(self) -> int:
        return len(self.density.marginals)

    @property
    def active_coords(self) -> tuple:
        return self.active if self.active is not None else tuple(range(self.dim))

    def sample(self, rng, size) -> np.ndarray:
        return self.density.sample(rng, size)

    def in_range(self, theta) -> bool:
        lo, hi = self.theta_range
        return lo < theta < hi

    def outer(self, x, theta):
        """``phi(g(x, theta))``."""
        return self.phi(self.transform.g(x, theta))


# ---------------------------------------------------------------------------
# threshold indicator on the unit square

def model_max_threshold(d) -> Model:
    """``psi = 1{max(X1, X2) <= theta}`` on ``(0, 1)^2``.

    Chart ``h(v, theta) = theta v``; transform ``g = x / theta`` with
    ``phi(y) = 1{max y <= 1}``, whose image is theta-free so the surface part
    vanishes on the lower faces and ``phi`` kills the upper ones.
    """
    for m in d.marginals:
        if m.support != (0.0, 1.0):
            raise ValueError("max-threshold model needs marginals on (0, 1)")

    def perf(x, th):
        return (np.max(np.asarray(x, float), axis=-1) <= th).astype(float)

    return Model(
        name="max_threshold",
        density=d,
        performance=perf,
        theta_range=(0.0, 1.0),
        transform=scale_transform(2),
        phi=lambda y: (np.max(y, axis=-1) <= 1.0).astype(float),
        chart=scaling_chart(2),
    )


# ---------------------------------------------------------------------------
# log-inventory cycle indicator

def model_log_inventory(d, q: float = 0.5) -> Model:
    """``psi = 1{log(X1 + theta) + log(X2 + theta) < q}`` on the positive quadrant.

    The region is nonempty for ``theta < exp(q / 2)``; the chart is the
    recursive inventory chart and the transform is the log-shift with
    ``s = (1, 1)``.
    """
    for m in d.marginals:
        if m.support[0] != 0.0 or m.support[1] != math.inf:
            raise ValueError("log-inventory model needs marginals on (0, inf)")

    def perf(x, th):
        x = np.asarray(x, float)
        return (np.sum(np.log(x + th), axis=-1) < q).astype(float)

    def augmented(x, th):
        # (g1, g2) = (sum log, log of first coordinate); same indicator on (-inf, q)^2
        lg = np.log(np.asarray(x, float) + th)
        return np.stack([lg.sum(axis=-1), lg[..., 0]], axis=-1)

    return Model(
        name="log_inventory",
        density=d,
        performance=perf,
        theta_range=(0.0, math.exp(q / 2)),
        transform=log_shift_transform(2),
        phi=lambda y: (np.sum(y, axis=-1) < q).astype(float),
        chart=log_inventory_chart(q),
        region=RegionU((-math.inf, -math.inf), (q, q)),
        region_map=augmented,
        q=q,
    )


def model_smooth_log_shift(d, phi: str = "linear") -> Model:
    """Smooth ``phi(log(x + theta))`` for checking the IPA-LR reduction."""
    phis = {
        "linear": (lambda y: y.sum(axis=-1), lambda y: np.ones_like(y)),
        "quadratic": (lambda y: np.sum(y * y, axis=-1) + y[..., 0] * y[..., 1],
                      lambda y: np.stack([2 * y[..., 0] + y[..., 1],
                                          2 * y[..., 1] + y[..., 0]], axis=-1)),
        "constant": (lambda y: np.full(y.shape[:-1], 3.0), lambda y: np.zeros_like(y)),
    }
    f, grad = phis[phi]
    t = log_shift_transform(2)
    return Model(
        name=f"smooth_{phi}",
        density=d,
        performance=lambda x, th: f(t.g(x, th)),
        theta_range=(0.0, math.inf),
        transform=t,
        phi=f,
        phi_grad=grad,
    )


# ---------------------------------------------------------------------------
# stochastic activity network

BRIDGE_PATHS = ((1, 0, 0, 1, 0), (0, 1, 0, 0, 1), (1, 0, 1, 0, 1))
BRIDGE_ACTIVE = (0, 1, 2)


def model_san_density(edge_laws: Sequence, paths, *, transform: str = "scale",
                      active: Optional[Sequence[int]] = None) -> Model:
    """``psi = prod_i 1{0 <= sum_k a_ik X_k <= theta}`` over path rows ``a_i``.

    ``transform="scale"`` pushes out with ``g = x / theta`` on every edge
    (theta-free image, no surface part).  ``transform="paths"`` uses
    ``g_i = p_i(x) / theta`` on the edges listed in ``active`` (one per path)
    and holds the others fixed.
    """
    a = np.asarray(paths, dtype=float)
    if a.ndim != 2 or a.shape[1] != len(edge_laws):
        raise ValueError("incidence rows must have one entry per edge")
    if len({tuple(r) for r in a}) != len(a):
        raise ValueError("incidence rows must be distinct")
    density = dist.ProductDensity(tuple(edge_laws), name="san")

    def longest(x):
        return np.asarray(x, float) @ a.T

    def perf(x, th):
        p = longest(x)
        return np.all((p >= 0) & (p <= th), axis=-1).astype(float)

    if transform == "scale":
        t = scale_transform(len(edge_laws))
        phi = lambda y: np.all(longest(y) <= 1.0, axis=-1).astype(float)  # noqa: E731
        act = None
    elif transform == "paths":
        act = tuple(range(len(a))) if active is None else tuple(active)
        if len(act) != len(a):
            raise RankDeficientIncidence("need exactly one transformed edge per path")
        sub = a[:, act]
        if abs(np.linalg.det(sub)) <= 1e-12:
            raise RankDeficientIncidence(f"incidence restricted to edges {act} is singular")
        rest = tuple(k for k in range(len(edge_laws)) if k not in act)
        t = _san_path_transform(a, act, rest)
        phi = lambda y: np.all(y <= 1.0, axis=-1).astype(float)  # noqa: E731
    else:
        raise ValueError(f"unknown SAN transform {transform!r}")
    return Model(
        name="san",
        density=density,
        performance=perf,
        theta_range=(0.0, math.inf),
        transform=t,
        phi=phi,
        chart=scaling_chart(len(edge_laws),
                            in_v=lambda v: np.all(longest(v) <= 1.0, axis=-1)),
        active=act,
        params={"paths": a.tolist(), "transform": transform},
    )


def _san_path_transform(a, act, rest) -> Transform:
    """Lift the square path transform to take the full edge vector."""
    a_rest = a[:, rest]
    a_inv = np.linalg.inv(a[:, act])
    n = len(act)

    def g(x, th):
        x = np.asarray(x, float)
        return x @ a.T / th

    def jac(x, th):
        return np.broadcast_to(a[:, act] / th, (*np.shape(x)[:-1], n, n)).copy()

    def s(x, th):
        x = np.asarray(x, float)
        c = x[..., rest] @ a_rest.T
        return -(x[..., act] + c @ a_inv.T) / th

    return Transform(n, g, jac, lambda x, th: -g(x, th) / th,
                     lambda x, th: np.full(np.shape(x)[:-1], -n / th),
                     image_note="image shifted by the held-fixed edges; depends on theta",
                     s_closed=s)


def bridge_network(rate: float = 1.0, *, transform: str = "scale") -> Model:
    """Five-edge bridge with Exp(rate) edges and three source-sink paths."""
    laws = [dist.Exponential(rate)] * 5
    return model_san_density(laws, BRIDGE_PATHS, transform=transform,
                             active=BRIDGE_ACTIVE if transform == "paths" else None)


# ---------------------------------------------------------------------------
# American call with threshold exercise

@dataclass(frozen=True)
class AmericanOptionModel:
    """Call on a stock paying cash dividends, exercised at date ``t_i`` when
    the cum-dividend price exceeds ``thresholds[i]``.

    ``dates`` are ``t_1 < ... < t_n = T``; ``dividends`` and ``thresholds``
    have one entry per early date ``t_1 .. t_{n-1}``.  The pre-dividend
    price follows GBM; the cum-dividend price adds back the present value of
    the remaining dividends.  ``k`` selects which threshold plays the role of
    ``theta`` in :meth:`performance`.
    """

    S0: float = 100.0
    K: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    dividends: tuple = (2.0,)
    dates: tuple = (0.5, 1.0)
    thresholds: tuple = (105.0,)
    k: int = 0

    def __post_init__(self):
        n = len(self.dates)
        if len(self.dividends) != n - 1 or len(self.thresholds) != n - 1:
            raise ValueError("need one dividend and one threshold per early date")
        if any(b <= a for a, b in zip((0.0,) + tuple(self.dates), self.dates)):
            raise ValueError("dates must be increasing and positive")
        for s, dv in zip(self.thresholds, self.dividends):
            if not (s > self.K and s > dv):
                raise InvalidThresholds(f"threshold {s} must exceed K={self.K} and dividend {dv}")
        if not 0 <= self.k < n - 1:
            raise ValueError("k must index an early exercise date")

    name = "american_option"

    @property
    def n_periods(self) -> int:
        return len(self.dates)

    @property
    def maturity(self) -> float:
        return self.dates[-1]

    def dt(self, i: int) -> float:
        """Length of period ``i`` (0-based)."""
        return self.dates[i] - (self.dates[i - 1] if i > 0 else 0.0)

    def h(self, x, s, dt):
        return s * np.exp((self.r - 0.5 * self.sigma ** 2) * dt + self.sigma * math.sqrt(dt) * x)

    def h_inverse(self, y, s, dt):
        return (np.log(y) - np.log(s) - (self.r - 0.5 * self.sigma ** 2) * dt) / (
            self.sigma * math.sqrt(dt))

    def dh_dx(self, x, s, dt):
        return self.h(x, s, dt) * self.sigma * math.sqrt(dt)

    def escrow(self, i: int) -> float:
        """Value at ``t_i`` of dividends paid at ``t_i`` and later (0-based ``i``)."""
        t = self.dates[i]
        return sum(d * math.exp(-self.r * (self.dates[m] - t))
                   for m, d in enumerate(self.dividends) if m >= i)

    @property
    def s_tilde0(self) -> float:
        return self.S0 - sum(d * math.exp(-self.r * t) for d, t in zip(self.dividends, self.dates))

    def with_threshold(self, theta: float) -> "AmericanOptionModel":
        th = list(self.thresholds)
        th[self.k] = theta
        return AmericanOptionModel(self.S0, self.K, self.r, self.sigma, self.dividends,
                                   self.dates, tuple(th), self.k)

    @property
    def theta_range(self):
        return (max(self.K, self.dividends[self.k]), math.inf)

    def in_range(self, theta) -> bool:
        lo, hi = self.theta_range
        return lo < theta < hi

    def sample(self, rng, size) -> np.ndarray:
        return rng.standard_normal((size, self.n_periods))

    def payoff(self, x, thresholds=None, branch=None) -> np.ndarray:
        """Discounted payoff ``J_T`` for innovations ``x`` of shape ``(size, n)``.

        ``branch = (k, tilde, exercise)`` overrides the pre-dividend price at
        date ``k`` with ``tilde`` and forces the exercise decision there.
        """
        x = np.asarray(x, dtype=float)
        thr = self.thresholds if thresholds is None else thresholds
        n = self.n_periods
        st = np.full(x.shape[0], self.s_tilde0)
        alive = np.ones(x.shape[0], dtype=bool)
        value = np.zeros(x.shape[0])
        for i in range(n):
            st = self.h(x[:, i], st, self.dt(i))
            if branch is not None and branch[0] == i:
                st = np.broadcast_to(np.asarray(branch[1], float), st.shape).copy()
            if i == n - 1:
                value += np.where(alive, np.maximum(st - self.K, 0.0), 0.0)
                break
            cum = st + self.escrow(i)
            if branch is not None and branch[0] == i:
                ex = alive & np.bool_(branch[2])
            else:
                ex = alive & (cum > thr[i])
            growth = math.exp(self.r * (self.maturity - self.dates[i]))
            value += np.where(ex, (cum - self.K) * growth, 0.0)
            alive &= ~ex
        return math.exp(-self.r * self.maturity) * value

    def performance(self, x, theta):
        th = list(self.thresholds)
        th[self.k] = theta
        return self.payoff(x, thresholds=th)


def model_american_option(p: AmericanOptionModel) -> AmericanOptionModel:
    return p


# ---------------------------------------------------------------------------
# G/G/1 queue with admission-dependent service

def _no_theta_dependence(theta, x):
    return np.zeros(np.shape(x))


@dataclass(frozen=True)
class GG1Model:
    """Single-server FIFO queue; customer ``i`` draws ``X_i ~ U(0, 1)`` and gets
    service ``service_plus(theta, X_i)`` when ``X_i < theta`` and
    ``service_minus(theta, X_i)`` otherwise.

    ``interarrival(rng, shape)`` draws the gaps ``Y_i`` between customers
    ``i`` and ``i + 1``.  ``statistic`` is one of ``mean_wait`` (default),
    ``total_wait`` or ``mean_system``.
    """

    n_customers: int
    service_plus: Callable
    service_minus: Callable
    interarrival: Callable
    dtheta_service_plus: Callable = _no_theta_dependence
    dtheta_service_minus: Callable = _no_theta_dependence
    statistic: str = "mean_wait"
    name: str = "gg1"

    def __post_init__(self):
        if self.n_customers < 1:
            raise ValueError("need at least one customer")
        if self.statistic not in ("mean_wait", "total_wait", "mean_system"):
            raise ValueError(f"unknown statistic {self.statistic!r}")

    theta_range = (0.0, 1.0)

    def in_range(self, theta) -> bool:
        return 0.0 < theta < 1.0

    def sample(self, rng, size) -> np.ndarray:
        n = self.n_customers
        x = dist.uniform_open(rng, (size, n))
        y = np.asarray(self.interarrival(rng, (size, n - 1)), dtype=float).reshape(size, n - 1)
        return np.concatenate([x, y], axis=1)

    def split(self, z):
        z = np.asarray(z, dtype=float)
        n = self.n_customers
        return z[:, :n], z[:, n:]

    def services(self, x, theta, admitted):
        """Service times and their theta-derivatives for given admission flags."""
        sp, sm = self.service_plus(theta, x), self.service_minus(theta, x)
        dp, dm = self.dtheta_service_plus(theta, x), self.dtheta_service_minus(theta, x)
        s = np.where(admitted, sp, sm)
        ds = np.where(admitted, dp, dm)
        return np.asarray(s, float), np.asarray(ds, float)

    def lindley(self, s, ds, y):
        """Statistic and its pathwise theta-derivative via the Lindley recursion."""
        size, n = s.shape
        w = np.zeros(size)
        dw = np.zeros(size)
        tot = np.zeros(size)
        dtot = np.zeros(size)
        for i in range(n):
            if self.statistic == "mean_system":
                tot += w + s[:, i]
                dtot += dw + ds[:, i]
            else:
                tot += w
                dtot += dw
            if i < n - 1:
                nxt = w + s[:, i] - y[:, i]
                busy = nxt > 0
                w = np.where(busy, nxt, 0.0)
                dw = np.where(busy, dw + ds[:, i], 0.0)
        if self.statistic == "total_wait":
            return tot, dtot
        return tot / n, dtot / n

    def evaluate(self, z, theta, override=None):
        """Statistic and IPA derivative; ``override=(i, admitted)`` pins ``X_i = theta^-/+``."""
        x, y = self.split(z)
        admitted = x < theta
        if override is not None:
            i, adm = override
            x = x.copy()
            admitted = admitted.copy()
            x[:, i] = theta
            admitted[:, i] = adm
        s, ds = self.services(x, theta, admitted)
        return self.lindley(s, ds, y)

    def performance(self, z, theta):
        return self.evaluate(z, theta)[0]


def model_gg1(p: GG1Model) -> GG1Model:
    return p


def constant_service(value: float) -> Callable:
    return lambda th, x: np.full(np.shape(x), float(value))


def deterministic_interarrival(value: float) -> Callable:
    return lambda rng, shape: np.full(shape, float(value))


def exponential_interarrival(rate: float = 1.0) -> Callable:
    return lambda rng, shape: rng.exponential(1.0 / rate, shape)


def gg1_two_customer_benchmark() -> GG1Model:
    """Two customers, services 1.0 / 0.5, gap 0.75, total waiting time."""
    return GG1Model(2, constant_service(1.0), constant_service(0.5),
                    deterministic_interarrival(0.75), statistic="total_wait")


def gg1_five_customer_benchmark() -> GG1Model:
    """Five customers, theta- and x-dependent services, Exp(1) gaps, mean system time."""
    return GG1Model(
        5,
        service_plus=lambda th, x: 1.0 + 0.5 * th + 0.2 * x,
        service_minus=lambda th, x: 0.3 + 0.1 * x,
        interarrival=exponential_interarrival(1.0),
        dtheta_service_plus=lambda th, x: np.full(np.shape(x), 0.5),
        statistic="mean_system",
    )


# ---------------------------------------------------------------------------
# catalog used by the experiment runner

TABLE1_CONFIGS = (
    ("independent", {"kind": "independent", "marginal": "exponential"}),
    ("fgm", {"kind": "fgm", "alpha": 1.0}),
    ("lognormal_0.1", {"kind": "lognormal", "rho": 0.1}),
    ("lognormal_0.9", {"kind": "lognormal", "rho": 0.9}),
    ("clayton_gamma_0.5", {"kind": "clayton_gamma", "shape": 0.5, "alpha": 1.0}),
    ("clayton_gamma_1", {"kind": "clayton_gamma", "shape": 1.0, "alpha": 1.0}),
    ("clayton_gamma_2", {"kind": "clayton_gamma", "shape": 2.0, "alpha": 1.0}),
)


def make_marginal(settings) -> dist.Marginal:
    if isinstance(settings, str):
        settings = {"kind": settings}
    kind = settings.get("kind", "exponential")
    if kind == "exponential":
        return dist.Exponential(settings.get("rate", 1.0))
    if kind == "gamma":
        return dist.Gamma(settings.get("shape", 1.0))
    if kind == "lognormal":
        return dist.LogNormal(settings.get("mu", 0.0), settings.get("sigma", 1.0))
    if kind == "uniform":
        return dist.Uniform01()
    if kind == "normal":
        return dist.Normal(settings.get("mu", 0.0), settings.get("sigma", 1.0))
    if kind == "beta":
        return dist.Beta(settings.get("a", 1.0), settings.get("b", 1.0))
    raise ValueError(f"unknown marginal kind {kind!r}")


def make_density(settings: dict):
    """Build a joint density from a config mapping (``kind`` plus parameters)."""
    kind = settings.get("kind")
    if kind == "independent":
        m = make_marginal(settings.get("marginal", "exponential"))
        return dist.independent(m, make_marginal(settings["marginal2"]) if "marginal2" in settings else m)
    if kind == "fgm":
        m = make_marginal(settings.get("marginal", "exponential"))
        return dist.CopulaJoint(dist.FGM(settings.get("alpha", 1.0)), m, m,
                                name=f"fgm({settings.get('alpha', 1.0):g})")
    if kind == "clayton":
        m = make_marginal(settings.get("marginal", "exponential"))
        return dist.CopulaJoint(dist.Clayton(settings.get("alpha", 1.0)), m, m,
                                name=f"clayton({settings.get('alpha', 1.0):g})")
    if kind == "clayton_gamma":
        return dist.clayton_gamma(settings.get("shape", 1.0), settings.get("alpha", 1.0))
    if kind == "gaussian":
        m = make_marginal(settings.get("marginal", "lognormal"))
        return dist.CopulaJoint(dist.Gaussian(settings.get("rho", 0.0)), m, m,
                                name=f"gaussian({settings.get('rho', 0.0):g})")
    if kind == "lognormal":
        return dist.BivariateLogNormal(settings.get("rho", 0.0),
                                       name=f"lognormal({settings.get('rho', 0.0):g})")
    raise ValueError(f"unknown distribution kind {kind!r}")


def uniform_square():
    return dist.independent(dist.Uniform01())


def beta_product():
    """Density ``4 x1 x2`` on the unit square."""
    return dist.CopulaJoint(dist.Independence(), dist.Beta(2.0, 1.0), dist.Beta(2.0, 1.0),
                            name="beta(2,1)^2")


def normal_pdf(x):
    return np.exp(-0.5 * np.asarray(x, float) ** 2) / math.sqrt(2 * math.pi)


def normal_cdf(x):
    return special.ndtr(x)
