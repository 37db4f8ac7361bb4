"""Change-of-variables records and domain charts.

A :class:`Transform` pushes the parameter out of a performance
``psi(x, theta) = phi(g(x, theta))``; the volume estimator needs the field
``s = J_g^{-1} d_theta g`` and the scalar ``d = div(-f s) / f``.  A
:class:`DomainChart` parametrises the region selected by an indicator as
``h(V, theta)`` over a fixed set ``V``; the divergence estimator needs the
velocity ``(d_theta h) o h^{-1}`` and its divergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import DET_THRESHOLD, SingularMatrix, det_small, solve_small


class InfeasibleRegion(ValueError):
    pass


@dataclass(frozen=True)
class Transform:
    """``y = g(x, theta)`` with analytic derivatives.

    All callables are vectorised over leading axes of ``x`` (shape ``(..., n)``).
    ``div_s`` is the divergence in ``x`` of the field ``s``.
    """

    dim: int
    g: Callable
    jacobian: Callable
    dtheta_g: Callable
    div_s: Callable
    image_note: str = ""
    s_closed: Optional[Callable] = None

    def singular(self, x, theta) -> np.ndarray:
        """Mask of points where ``J_g`` is (numerically) singular."""
        return np.abs(det_small(self.jacobian(x, theta))) <= DET_THRESHOLD


@dataclass(frozen=True)
class RegionU:
    """Box ``prod_i (lo_i, hi_i)`` in the image space."""

    lo: tuple
    hi: tuple

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        return np.all((y > lo) & (y < hi), axis=-1)


def s_vector(t: Transform, x, theta) -> np.ndarray:
    """Solve ``J_g s = d_theta g`` pointwise.

    Raises
    ------
    SingularMatrix
        If ``J_g`` is singular at any of the points.
    """
    if t.s_closed is not None:
        return np.asarray(t.s_closed(x, theta), dtype=float)
    jac = t.jacobian(x, theta)
    if np.any(np.abs(det_small(jac)) <= DET_THRESHOLD):
        raise SingularMatrix("J_g singular at a sampled point")
    return solve_small(jac, t.dtheta_g(x, theta))


def d_scalar(t: Transform, density, x, theta) -> np.ndarray:
    """``d = -(s . grad log f + div s)``, the product-rule form of ``div(-f s)/f``."""
    s = s_vector(t, x, theta)
    return -(np.sum(s * density.score_x(x), axis=-1) + t.div_s(x, theta))


# ---------------------------------------------------------------------------
# built-in transforms

def log_shift_transform(dim: int = 2) -> Transform:
    """``g_i = log(x_i + theta)``; ``s = (1, ..., 1)`` and ``div s = 0``."""

    def g(x, th):
        return np.log(np.asarray(x, float) + th)

    def jac(x, th):
        return np.vectorize(np.diag, signature="(n)->(n,n)")(1.0 / (np.asarray(x, float) + th))

    def dth(x, th):
        return 1.0 / (np.asarray(x, float) + th)

    return Transform(dim, g, jac, dth, lambda x, th: np.zeros(np.shape(x)[:-1]),
                     image_note="image (log theta, inf)^n depends on theta",
                     s_closed=lambda x, th: np.ones(np.shape(x)))


def scale_transform(dim: int) -> Transform:
    """``g = x / theta``; ``s = -x / theta`` and ``div s = -n / theta``."""

    def jac(x, th):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(dim) / th, (*x.shape[:-1], dim, dim)).copy()

    return Transform(
        dim,
        lambda x, th: np.asarray(x, float) / th,
        jac,
        lambda x, th: -np.asarray(x, float) / th ** 2,
        lambda x, th: np.full(np.shape(x)[:-1], -dim / th),
        image_note="maps the positive orthant onto itself for every theta",
        s_closed=lambda x, th: -np.asarray(x, float) / th,
    )


def shift_transform(dim: int) -> Transform:
    """``g = x - theta (1, ..., 1)``; ``s = (-1, ..., -1)``."""

    def jac(x, th):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(dim), (*x.shape[:-1], dim, dim)).copy()

    return Transform(
        dim,
        lambda x, th: np.asarray(x, float) - th,
        jac,
        lambda x, th: -np.ones(np.shape(x)),
        lambda x, th: np.zeros(np.shape(x)[:-1]),
        image_note="translates the support; image depends on theta",
        s_closed=lambda x, th: -np.ones(np.shape(x)),
    )


def linear_path_transform(incidence, offset_fn: Optional[Callable] = None) -> Transform:
    """``g(x, theta) = (A x + c) / theta`` for a square nonsingular ``A``.

    ``offset_fn(x)`` returns the constant part ``c`` contributed by variables
    held fixed (conditioned on); it must not depend on the transformed ones.
    """
    a = np.asarray(incidence, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("incidence must be square")
    a_inv = np.linalg.inv(a)

    def offset(x):
        if offset_fn is None:
            return np.zeros(np.shape(x))
        return np.asarray(offset_fn(x), dtype=float)

    def g(x, th):
        return (np.asarray(x, float) @ a.T + offset(x)) / th

    def jac(x, th):
        return np.broadcast_to(a / th, (*np.shape(x)[:-1], n, n)).copy()

    def s(x, th):
        # s = J^-1 d_theta g = -(x + A^-1 c) / theta
        return -(np.asarray(x, float) + offset(x) @ a_inv.T) / th

    return Transform(
        n, g, jac, lambda x, th: -g(x, th) / th,
        lambda x, th: np.full(np.shape(x)[:-1], -n / th),
        image_note=("image depends on theta through the conditioned offset"
                    if offset_fn is not None else "theta-free image (positive cone of A)"),
        s_closed=s,
    )


# ---------------------------------------------------------------------------
# charts

@dataclass(frozen=True)
class DomainChart:
    """``x = h(v, theta)`` for ``v`` in a fixed set ``V``.

    ``velocity(x, theta)`` is ``(d_theta h)(h^{-1}(x, theta), theta)`` and
    ``cross_partials(x, theta)`` its divergence in ``x``.  ``in_v`` tests
    membership of ``V`` (an open box unless stated otherwise).
    """

    dim: int
    h: Callable
    h_inverse: Callable
    dtheta_h: Callable
    velocity: Callable
    cross_partials: Callable
    in_v: Callable = field(default=None)

    def contains(self, x, theta) -> np.ndarray:
        return chart_contains(self, x, theta)


def _in_open_unit_box(v):
    v = np.asarray(v, dtype=float)
    return np.all((v > 0) & (v < 1), axis=-1)


def chart_contains(c: DomainChart, x, theta) -> np.ndarray:
    """True where ``h^{-1}(x, theta)`` is defined and lies in ``V``."""
    with np.errstate(all="ignore"):
        v = c.h_inverse(x, theta)
    test = c.in_v if c.in_v is not None else _in_open_unit_box
    return np.asarray(test(v), dtype=bool) & np.all(np.isfinite(v), axis=-1)


def scaling_chart(dim: int, in_v: Optional[Callable] = None) -> DomainChart:
    """``h(v, theta) = theta v``: velocity ``x / theta``, divergence ``n / theta``."""
    return DomainChart(
        dim,
        h=lambda v, th: th * np.asarray(v, float),
        h_inverse=lambda x, th: np.asarray(x, float) / th,
        dtheta_h=lambda v, th: np.asarray(v, float),
        velocity=lambda x, th: np.asarray(x, float) / th,
        cross_partials=lambda x, th: np.full(np.shape(x)[:-1], dim / th),
        in_v=in_v,
    )


@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing ``z(x, theta)`` with inverse and partial derivatives."""

    z: Callable
    z_inv: Callable
    dz_dx: Callable
    dz_dtheta: Callable


def log_shift_map() -> MonotoneMap:
    return MonotoneMap(
        z=lambda x, th: np.log(x + th),
        z_inv=lambda y, th: np.exp(y) - th,
        dz_dx=lambda x, th: 1.0 / (x + th),
        dz_dtheta=lambda x, th: 1.0 / (x + th),
    )


def build_inventory_chart(z_list: Sequence[MonotoneMap], a_list: Sequence[float],
                          q: float) -> DomainChart:
    """Chart of ``{x >= a : sum_i z_i(x_i, theta) <= q}`` over ``(0, 1)^n``.

    Coordinate ``i`` ranges over ``(a_i, B_i)`` where ``B_i`` solves
    ``z_i(B_i) = q - sum_{j<i} z_j(x_j) - sum_{j>i} z_j(a_j)``, and
    ``h_i = (B_i - a_i) v_i + a_i``.  Derivatives follow by the chain rule in
    the order the recursion is built.
    """
    z_list = list(z_list)
    a = np.asarray(a_list, dtype=float)
    n = len(z_list)
    if a.shape != (n,):
        raise ValueError("need one lower endpoint per coordinate")

    def feasible(th):
        return sum(float(z.z(ai, th)) for z, ai in zip(z_list, a)) <= q

    def _check(th):
        if not feasible(th):
            raise InfeasibleRegion(f"sum_i z_i(a_i, {th}) exceeds q = {q}")

    def _upper(i, x, th):
        # B_i given the already-fixed coordinates x[..., :i]
        rest = q - sum(z_list[j].z(a[j], th) for j in range(i + 1, n))
        used = sum(z_list[j].z(x[..., j], th) for j in range(i))
        return z_list[i].z_inv(rest - used, th)

    def h(v, th):
        _check(th)
        v = np.asarray(v, dtype=float)
        x = np.empty_like(v)
        for i in range(n):
            x[..., i] = (_upper(i, x, th) - a[i]) * v[..., i] + a[i]
        return x

    def h_inverse(x, th):
        x = np.asarray(x, dtype=float)
        v = np.empty_like(x)
        for i in range(n):
            v[..., i] = (x[..., i] - a[i]) / (_upper(i, x, th) - a[i])
        return v

    def _g_factors(x, th):
        # G_i with velocity_i = (x_i - a_i) G_i
        x = np.asarray(x, dtype=float)
        vel = np.empty_like(x)
        gs = np.empty_like(x)
        for i in range(n):
            zi = z_list[i]
            b = _upper(i, x, th)
            dr = -sum(z_list[j].dz_dtheta(x[..., j], th) for j in range(i))
            dr = dr - sum(z_list[j].dz_dtheta(a[j], th) for j in range(i + 1, n))
            slope = zi.dz_dx(b, th)
            total = (dr - zi.dz_dtheta(b, th)) / slope
            for j in range(i):
                total = total - z_list[j].dz_dx(x[..., j], th) / slope * vel[..., j]
            gs[..., i] = total / (b - a[i])
            vel[..., i] = (x[..., i] - a[i]) * gs[..., i]
        return vel, gs

    def velocity(x, th):
        return _g_factors(x, th)[0]

    def cross_partials(x, th):
        return np.sum(_g_factors(x, th)[1], axis=-1)

    def dtheta_h(v, th):
        return velocity(h(v, th), th)

    return DomainChart(n, h, h_inverse, dtheta_h, velocity, cross_partials)


def log_inventory_chart(q: float, dim: int = 2) -> DomainChart:
    """Chart of ``{x >= 0 : sum_i log(x_i + theta) <= q}``."""
    return build_inventory_chart([log_shift_map()] * dim, [0.0] * dim, q)


def log_inventory_velocity_1(x1, theta, q):
    """Closed-form first velocity component ``-(e^q + t^2) / (t (e^q - t^2)) x1``."""
    eq = math.exp(q)
    return -(eq + theta ** 2) / (theta * (eq - theta ** 2)) * np.asarray(x1, float)
