"""Stochastic derivative estimators and the replication engine.

Path estimators are vectorised: they take a batch of input points ``x`` of
shape ``(size, n)`` and return one derivative sample per row.  The
replication engine splits the budget into fixed-size blocks with their own
random streams so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .distributions import BoundaryKind
from .models import AmericanOptionModel, GG1Model, Model
from .numerics import SingularMatrix
from .transforms import chart_contains, s_vector

BLOCK_SIZE = 1024
INSTABILITY_BOUND = 1e6
MAX_REDRAWS = 100

# spawn-key tags separating independent stream families
_MAIN, _SURFACE, _MINUS = 0, 1, 2


class ThetaOutOfRange(ValueError):
    pass


class NotDifferentiable(TypeError):
    pass


@dataclass(frozen=True)
class FaceContribution:
    index: int
    endpoint: float
    kind: str
    value: float
    std_error: float
    draws: int


@dataclass(frozen=True)
class DerivativeEstimate:
    """Mean of per-path derivative samples with its standard error.

    ``boundary_draws`` counts fresh samples from face conditionals (faces
    whose conditional is the plain marginal reuse the main stream and add
    nothing).  ``runtime`` is excluded from equality.
    """

    mean: float
    std_error: float
    n_reps: int
    estimator_id: str
    runtime: float = field(default=0.0, compare=False)
    rejected_samples: int = 0
    unstable: bool = False
    boundary_draws: int = 0
    surface_breakdown: Optional[tuple] = None


@dataclass(frozen=True)
class EstimatorConfig:
    fd_delta: float = 0.02
    n_reps: int = 10_000
    surface_reps: Optional[int] = None
    seed: int = 0
    crn: bool = True
    workers: int = 1
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if not self.fd_delta > 0:
            raise ValueError("fd_delta must be positive")
        if self.n_reps < 2:
            raise ValueError("n_reps must be at least 2")
        if self.surface_reps is not None and self.surface_reps < 2:
            raise ValueError("surface_reps must be at least 2")

    @property
    def face_reps(self) -> int:
        return self.n_reps if self.surface_reps is None else self.surface_reps


@dataclass
class PathBatch:
    """Per-path values plus bookkeeping returned by a path function."""

    values: np.ndarray
    rejected: int = 0
    unstable: bool = False


def block_rng(seed: int, block: int, family: int = _MAIN) -> np.random.Generator:
    """Random stream for one block, derived from ``(seed, family, block)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(family, block))))


def replicate(path_fn: Callable, n_reps: int, seed: int, *, workers: int = 1,
              block_size: int = BLOCK_SIZE, family: int = _MAIN,
              estimator_id: str = "custom") -> DerivativeEstimate:
    """Run ``path_fn(rng, size)`` over ``n_reps`` replications.

    The result is bit-identical for a given seed whatever the worker count:
    each block of ``block_size`` rows draws from its own stream and blocks
    are concatenated in index order before aggregation.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be at least 2")
    start = time.perf_counter()
    sizes = [block_size] * (n_reps // block_size)
    if n_reps % block_size:
        sizes.append(n_reps % block_size)

    def run(b):
        out = path_fn(block_rng(seed, b, family), sizes[b])
        if not isinstance(out, PathBatch):
            out = PathBatch(np.asarray(out, dtype=float))
        return out

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(run, range(len(sizes))))
    else:
        batches = [run(b) for b in range(len(sizes))]
    values = np.concatenate([np.asarray(b.values, dtype=float).ravel() for b in batches])
    with np.errstate(invalid="ignore", over="ignore"):
        mean = float(np.mean(values))
        se = float(np.std(values, ddof=1) / math.sqrt(values.size))
    unstable = any(b.unstable for b in batches) or not math.isfinite(mean)
    return DerivativeEstimate(
        mean=mean, std_error=se, n_reps=int(values.size), estimator_id=estimator_id,
        runtime=time.perf_counter() - start,
        rejected_samples=sum(b.rejected for b in batches), unstable=unstable)


def _check_theta(m, theta, delta=0.0):
    if not (m.in_range(theta - delta) and m.in_range(theta + delta)):
        raise ThetaOutOfRange(f"theta={theta} (+/- {delta}) outside {m.theta_range}")


# ---------------------------------------------------------------------------
# finite differences

def fd_estimate(m, theta: float, cfg: EstimatorConfig = EstimatorConfig()) -> DerivativeEstimate:
    """Central difference ``(psi(X, t + d) - psi(X', t - d)) / 2d`` per path.

    With ``cfg.crn`` the same draw is used on both sides (``X' = X``);
    otherwise the minus side uses an independent stream.
    """
    delta = cfg.fd_delta
    _check_theta(m, theta, delta)

    def path(rng, size):
        x = m.sample(rng, size)
        up = m.performance(x, theta + delta)
        if cfg.crn:
            down = m.performance(x, theta - delta)
        else:
            x2 = m.sample(_minus_rng(rng), size)
            down = m.performance(x2, theta - delta)
        return (up - down) / (2 * delta)

    return replicate(path, cfg.n_reps, cfg.seed, workers=cfg.workers,
                     block_size=cfg.block_size, estimator_id="fd")


def _minus_rng(rng):
    # independent child stream for the non-CRN minus side
    return np.random.Generator(np.random.PCG64(rng.bit_generator.random_raw() & ((1 << 63) - 1)))


# ---------------------------------------------------------------------------
# Leibniz divergence estimator

def leibniz_divergence_path(m: Model, x, theta: float) -> np.ndarray:
    """Divergence-form derivative samples for an indicator region given by a chart.

    Inside the region the value is ``l + sum_i score_i vel_i + div(vel)``
    (the outer function is identically one for the chart models); outside it
    is zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape[0])
    inside = chart_contains(m.chart, x, theta)
    if not np.any(inside):
        return out
    xi = x[inside]
    vel = m.chart.velocity(xi, theta)
    score = m.density.score_x(xi)
    out[inside] = (m.density.score_theta(xi, theta)
                   + np.sum(score * vel, axis=-1)
                   + m.chart.cross_partials(xi, theta))
    return out


def leibniz_divergence_estimate(m: Model, theta: float,
                                cfg: EstimatorConfig = EstimatorConfig()) -> DerivativeEstimate:
    _check_theta(m, theta)
    if m.chart is None:
        raise NotDifferentiable(f"{m.name} has no domain chart")

    def path(rng, size):
        return leibniz_divergence_path(m, m.sample(rng, size), theta)

    return replicate(path, cfg.n_reps, cfg.seed, workers=cfg.workers,
                     block_size=cfg.block_size, estimator_id="leibniz_divergence")


# ---------------------------------------------------------------------------
# Leibniz integral estimator: volume + surface

def _s_active(m: Model, x, theta):
    return s_vector(m.transform, x, theta)


def d_values(m: Model, x, theta) -> np.ndarray:
    """``d = -(s . grad_active log f + div s)`` at each row of ``x``."""
    s = _s_active(m, x, theta)
    score = m.density.score_x(x)[..., list(m.active_coords)]
    return -(np.sum(s * score, axis=-1) + m.transform.div_s(x, theta))


def _volume(m: Model, x, theta):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape[0])
    phi = m.outer(x, theta)
    live = phi != 0
    unstable = False
    if np.any(live):
        xl = x[live]
        d = d_values(m, xl, theta)
        unstable = bool(np.any(~np.isfinite(d)) or np.any(np.abs(d) > INSTABILITY_BOUND))
        out[live] = phi[live] * (d + m.density.score_theta(xl, theta))
    return out, unstable


def leibniz_volume_path(m: Model, x, theta: float) -> np.ndarray:
    """Volume part ``phi(g(x, theta)) (d + l)`` of the integral estimator."""
    return _volume(m, x, theta)[0]


def _faces(m: Model):
    """Finite faces of the support for the transformed coordinates, with signs."""
    faces = []
    for pos, i in enumerate(m.active_coords):
        lo, hi = m.density.marginals[i].support
        for endpoint, sign in ((lo, -1.0), (hi, 1.0)):
            if math.isfinite(endpoint):
                faces.append((pos, i, endpoint, sign))
    return faces


def _face_integrand(m: Model, pts, theta, pos):
    """``phi(g) s_pos`` at face points; only evaluated where ``phi`` is nonzero."""
    phi = m.outer(pts, theta)
    out = np.zeros(pts.shape[0])
    live = phi != 0
    if np.any(live):
        out[live] = phi[live] * _s_active(m, pts[live], theta)[:, pos]
    return out


def _marginal_face_values(m: Model, x, theta, faces):
    """Per-path surface samples for faces whose conditional is the marginal law."""
    total = np.zeros(x.shape[0])
    for pos, i, endpoint, sign, bc in faces:
        pts = x.copy()
        pts[:, i] = endpoint
        total += sign * bc.density * _face_integrand(m, pts, theta, pos)
    return total


@dataclass(frozen=True)
class SurfaceTerm:
    value: float
    std_error: float
    faces: tuple
    draws: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _classify(m: Model):
    folded, separate = [], []
    for pos, i, endpoint, sign in _faces(m):
        bc = m.density.boundary_conditional((i, endpoint))
        entry = (pos, i, endpoint, sign, bc)
        (folded if bc.kind is BoundaryKind.REDUCES_TO_MARGINAL else separate).append(entry)
    return folded, separate


def surface_term(m: Model, theta: float, cfg: EstimatorConfig = EstimatorConfig(), *,
                 include_marginal_faces: bool = True) -> SurfaceTerm:
    """Signed sum over finite faces of ``f_i(endpoint) E(phi(g) s_i | X_i = endpoint)``.

    Upper faces enter with ``+``, lower faces with ``-``.  Faces with zero
    marginal density are skipped, point-mass conditionals are evaluated
    deterministically, and the remaining faces average ``cfg.face_reps``
    conditional draws each.  When ``include_marginal_faces`` is False, faces
    whose conditional is the plain marginal are left to the caller.
    """
    folded, separate = _classify(m)
    contributions, draws = [], 0
    reps = cfg.face_reps
    for k, (pos, i, endpoint, sign, bc) in enumerate(separate):
        if bc.kind is BoundaryKind.VANISHING:
            contributions.append(FaceContribution(i, endpoint, bc.kind.value, 0.0, 0.0, 0))
            continue
        if bc.kind is BoundaryKind.POINT_MASS:
            pt = np.asarray([bc.point], dtype=float)
            val = float(_face_integrand(m, pt, theta, pos)[0])
            value = 0.0 if val == 0.0 or bc.density == 0.0 else sign * bc.density * val
            contributions.append(FaceContribution(i, endpoint, bc.kind.value, value, 0.0, 0))
            continue
        pts = bc.sample(block_rng(cfg.seed, k, _SURFACE), reps)
        vals = _face_integrand(m, pts, theta, pos)
        draws += reps
        contributions.append(FaceContribution(
            i, endpoint, bc.kind.value, sign * bc.density * float(np.mean(vals)),
            bc.density * float(np.std(vals, ddof=1)) / math.sqrt(reps), reps))
    if include_marginal_faces and folded:
        def path(rng, size):
            return _marginal_face_values(m, m.sample(rng, size), theta, folded)

        est = replicate(path, reps, cfg.seed, family=_SURFACE + 16, block_size=cfg.block_size)
        draws += reps
        contributions.append(FaceContribution(-1, math.nan, BoundaryKind.REDUCES_TO_MARGINAL.value,
                                              est.mean, est.std_error, reps))
    with np.errstate(invalid="ignore"):
        value = float(sum(c.value for c in contributions))
    se = math.sqrt(sum(c.std_error ** 2 for c in contributions))
    return SurfaceTerm(value, se, tuple(contributions), draws)


def leibniz_integral_estimate(m: Model, theta: float,
                              cfg: EstimatorConfig = EstimatorConfig()) -> DerivativeEstimate:
    """Volume average plus surface term.

    Faces whose conditional law is the marginal are evaluated on the main
    draws (replacing ``x_i`` by the endpoint), so they add no sampling and
    their noise is part of the per-path variance.  The remaining surface
    pieces are independent of the main stream; their standard errors are
    combined with the volume SE in quadrature.
    """
    _check_theta(m, theta)
    if m.transform is None:
        raise NotDifferentiable(f"{m.name} has no push-out transform")
    folded, _ = _classify(m)

    def path(rng, size):
        x = m.sample(rng, size)
        rejected = 0
        if m.transform.s_closed is None:
            x, rejected = _redraw_singular(m, x, theta, rng)
        vol, unstable = _volume(m, x, theta)
        if folded:
            vol = vol + _marginal_face_values(m, x, theta, folded)
        return PathBatch(vol, rejected, unstable)

    est = replicate(path, cfg.n_reps, cfg.seed, workers=cfg.workers,
                    block_size=cfg.block_size, estimator_id="leibniz_integral")
    surf = surface_term(m, theta, cfg, include_marginal_faces=False)
    with np.errstate(invalid="ignore"):
        mean = est.mean + surf.value
    return replace(
        est, mean=mean,
        std_error=math.sqrt(est.std_error ** 2 + surf.std_error ** 2),
        unstable=est.unstable or not surf.finite or not math.isfinite(mean),
        boundary_draws=surf.draws, surface_breakdown=surf.faces)


def _redraw_singular(m: Model, x, theta, rng):
    """Replace rows where ``J_g`` is singular by fresh draws from the same stream."""
    rejected = 0
    for _ in range(MAX_REDRAWS):
        bad = m.transform.singular(x, theta)
        if not np.any(bad):
            return x, rejected
        rejected += int(bad.sum())
        x = x.copy()
        x[bad] = m.sample(rng, int(bad.sum()))
    raise SingularMatrix(f"J_g stayed singular after {MAX_REDRAWS} redraws")


# ---------------------------------------------------------------------------
# IPA-LR for smooth outer functions

def ipa_lr_path(m: Model, x, theta: float) -> np.ndarray:
    """``phi(g) l + grad phi(g) . d_theta g`` for a differentiable ``phi``."""
    if m.phi_grad is None:
        raise NotDifferentiable(f"{m.name} has a discontinuous performance")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = m.transform.g(x, theta)
    return (m.phi(y) * m.density.score_theta(x, theta)
            + np.sum(m.phi_grad(y) * m.transform.dtheta_g(x, theta), axis=-1))


def ipa_lr_estimate(m: Model, theta: float, cfg: EstimatorConfig = EstimatorConfig()):
    _check_theta(m, theta)
    if m.phi_grad is None:
        raise NotDifferentiable(f"{m.name} has a discontinuous performance")

    def path(rng, size):
        return ipa_lr_path(m, m.sample(rng, size), theta)

    return replicate(path, cfg.n_reps, cfg.seed, workers=cfg.workers,
                     block_size=cfg.block_size, estimator_id="ipa_lr")


# ---------------------------------------------------------------------------
# conditional estimators: option threshold and queue admission

def option_threshold_path(m: AmericanOptionModel, x, k: Optional[int] = None) -> np.ndarray:
    """Derivative samples of ``E(J_T)`` with respect to threshold ``s_k``.

    The path is branched at date ``k``: once forced to continue just below
    the threshold and once forced to exercise just above it, reusing all
    other innovations.  The difference is weighted by ``f(x*) / h_x(x*)``
    where ``x*`` is the innovation that puts the cum-dividend price exactly
    on the threshold.
    """
    k = m.k if k is None else k
    x = np.asarray(x, dtype=float)
    st = np.full(x.shape[0], m.s_tilde0)
    for i in range(k):
        st = m.h(x[:, i], st, m.dt(i))
    tilde = m.thresholds[k] - m.escrow(k)
    xstar = m.h_inverse(tilde, st, m.dt(k))
    weight = np.exp(-0.5 * xstar ** 2) / math.sqrt(2 * math.pi) / m.dh_dx(xstar, st, m.dt(k))
    cont = m.payoff(x, branch=(k, tilde, False))
    exer = m.payoff(x, branch=(k, tilde, True))
    return weight * (cont - exer)


def option_threshold_derivative(m: AmericanOptionModel, k: Optional[int] = None, *,
                                n_reps: int = 10_000, seed: int = 0,
                                workers: int = 1) -> DerivativeEstimate:
    def path(rng, size):
        return option_threshold_path(m, m.sample(rng, size), k)

    return replicate(path, n_reps, seed, workers=workers, estimator_id="conditional_leibniz")


def dpa_path(m: GG1Model, z, theta: float) -> np.ndarray:
    """Sum over customers of the admit/reject branch difference plus IPA.

    Admission variables are uniform, so the boundary density is one.
    """
    z = np.asarray(z, dtype=float)
    value, ipa = m.evaluate(z, theta)
    out = ipa.copy()
    for i in range(m.n_customers):
        plus, _ = m.evaluate(z, theta, override=(i, True))
        minus, _ = m.evaluate(z, theta, override=(i, False))
        out += plus - minus
    return out


def dpa_derivative(m: GG1Model, theta: float, *, n_reps: int = 10_000, seed: int = 0,
                   workers: int = 1) -> DerivativeEstimate:
    if not m.in_range(theta):
        raise ThetaOutOfRange(f"theta={theta} outside (0, 1)")

    def path(rng, size):
        return dpa_path(m, m.sample(rng, size), theta)

    return replicate(path, n_reps, seed, workers=workers, estimator_id="dpa")


ESTIMATORS = ("fd", "leibniz_divergence", "leibniz_integral", "ipa_lr",
              "conditional_leibniz", "dpa")


def run_estimator(name: str, m, theta: float, cfg: EstimatorConfig) -> DerivativeEstimate:
    """Dispatch by estimator tag."""
    if name == "fd":
        return fd_estimate(m, theta, cfg)
    if name == "leibniz_divergence":
        return leibniz_divergence_estimate(m, theta, cfg)
    if name == "leibniz_integral":
        return leibniz_integral_estimate(m, theta, cfg)
    if name == "ipa_lr":
        return ipa_lr_estimate(m, theta, cfg)
    if name == "conditional_leibniz":
        if not isinstance(m, AmericanOptionModel):
            raise NotDifferentiable("conditional_leibniz applies to the option model")
        return option_threshold_derivative(m.with_threshold(theta), n_reps=cfg.n_reps,
                                           seed=cfg.seed, workers=cfg.workers)
    if name == "dpa":
        if not isinstance(m, GG1Model):
            raise NotDifferentiable("dpa applies to the queue model")
        return dpa_derivative(m, theta, n_reps=cfg.n_reps, seed=cfg.seed, workers=cfg.workers)
    raise ValueError(f"unknown estimator {name!r}")
