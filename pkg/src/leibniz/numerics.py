"""Small dense linear algebra, deterministic quadrature and the mollifier.

Everything here is a pure function of its inputs.  Quadrature is tensor
Gauss-Legendre with order doubling; geometric grading toward an endpoint is
available for integrands with algebraic endpoint singularities (Gamma shape
< 1 marginals, Clayton corner behaviour).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DET_THRESHOLD = 1e-12


class SingularMatrix(ArithmeticError):
    """Raised when |det| falls below the singularity threshold."""


class NonConvergent(ArithmeticError):
    """Raised when successive quadrature refinements disagree."""


# ---------------------------------------------------------------------------
# linear algebra

def det_small(m):
    """Determinant of a (batch of) n x n matrices, closed form for n <= 3."""
    m = np.asarray(m, dtype=float)
    n = m.shape[-1]
    if m.shape[-2] != n or n > 4:
        raise ValueError(f"expected square matrices with n <= 4, got {m.shape}")
    if n == 1:
        return m[..., 0, 0].copy()
    if n == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if n == 3:
        return (m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
                - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
                + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]))
    return np.linalg.det(m)


def invert_small(m):
    """Invert an n x n matrix (n <= 4).

    Returns
    -------
    (inverse, determinant)

    Raises
    ------
    SingularMatrix
        If ``|det| <= 1e-12``.
    """
    m = np.asarray(m, dtype=float)
    det = det_small(m)
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) <= DET_THRESHOLD):
        raise SingularMatrix(f"|det| = {np.min(np.abs(det)):.3g} <= {DET_THRESHOLD}")
    n = m.shape[-1]
    if n == 1:
        inv = 1.0 / m
    elif n == 2:
        inv = np.empty_like(m)
        inv[..., 0, 0] = m[..., 1, 1]
        inv[..., 1, 1] = m[..., 0, 0]
        inv[..., 0, 1] = -m[..., 0, 1]
        inv[..., 1, 0] = -m[..., 1, 0]
        inv /= np.asarray(det)[..., None, None]
    else:
        inv = np.linalg.inv(m)
    return inv, det


def solve_small(m, b):
    """Solve ``m @ x = b`` for a batch of small systems without storing inverses.

    Rows whose matrix is singular raise :class:`SingularMatrix`; callers that
    want a reject-and-redraw policy should screen with :func:`det_small` first.
    """
    m = np.asarray(m, dtype=float)
    b = np.asarray(b, dtype=float)
    det = det_small(m)
    if np.any(np.abs(det) <= DET_THRESHOLD):
        raise SingularMatrix(f"|det| = {np.min(np.abs(det)):.3g} <= {DET_THRESHOLD}")
    if m.shape[-1] == 2:
        x0 = (m[..., 1, 1] * b[..., 0] - m[..., 0, 1] * b[..., 1]) / det
        x1 = (m[..., 0, 0] * b[..., 1] - m[..., 1, 0] * b[..., 0]) / det
        return np.stack([x0, x1], axis=-1)
    return np.linalg.solve(m, b[..., None])[..., 0]


# ---------------------------------------------------------------------------
# quadrature

@functools.lru_cache(maxsize=64)
def gauss_legendre(order: int):
    """Nodes and weights on [-1, 1] (cached, read-only)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _rule(lo, hi, order: int, grade: bool, layers: int, ratio: float):
    """Composite GL nodes/weights on [lo, hi]; lo, hi may be arrays (batched)."""
    x, w = gauss_legendre(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if grade:
        t = np.concatenate([[0.0], ratio ** np.arange(layers, -1, -1, dtype=float)])
    else:
        t = np.array([0.0, 1.0])
    a, b = t[:-1], t[1:]
    # unit-interval composite rule
    unit_nodes = (0.5 * (b - a)[:, None] * (x[None, :] + 1.0) + a[:, None]).ravel()
    unit_weights = (0.5 * (b - a)[:, None] * w[None, :]).ravel()
    span = hi - lo
    nodes = lo[..., None] + span[..., None] * unit_nodes
    weights = span[..., None] * unit_weights
    return nodes, weights


def integrate_1d(f: Callable, lo: float, hi: float, order: int = 32, *,
                 grade_lower: bool = False, layers: int = 12, ratio: float = 0.2):
    """Composite Gauss-Legendre estimate of a 1D integral (no refinement loop)."""
    nodes, weights = _rule(lo, hi, order, grade_lower, layers, ratio)
    return float(np.sum(weights * np.asarray(f(nodes), dtype=float)))


@dataclass(frozen=True)
class Region2D:
    """``{(x1, x2): lo1 < x1 < hi1, x2_lower(x1) < x2 < x2_upper(x1)}``.

    The grading flags request geometric panel refinement toward the lower edge
    of the corresponding axis.
    """

    x1_range: tuple[float, float]
    x2_upper: Callable
    x2_lower: Callable = field(default=lambda x1: np.zeros_like(x1))
    grade_x1: bool = False
    grade_x2: bool = False


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    order: int


def _region_tensor(f, r: Region2D, order: int, layers: int, ratio: float):
    lo1, hi1 = r.x1_range
    if not hi1 > lo1:
        return 0.0
    x1, w1 = _rule(lo1, hi1, order, r.grade_x1, layers, ratio)
    lo2 = np.asarray(r.x2_lower(x1), dtype=float)
    hi2 = np.asarray(r.x2_upper(x1), dtype=float)
    hi2 = np.maximum(hi2, lo2)
    x2, w2 = _rule(lo2, hi2, order, r.grade_x2, layers, ratio)
    X1 = np.broadcast_to(x1[:, None], x2.shape)
    vals = np.asarray(f(X1, x2), dtype=float)
    return float(np.sum(w1 * np.sum(w2 * vals, axis=-1)))


def integrate_region_2d(f: Callable, r: Region2D, order: int = 16, *,
                        tol: float = 1e-8, max_order: int = 256,
                        layers: int = 12, ratio: float = 0.2,
                        fail_tol: float = 1e-6) -> QuadratureResult:
    """Tensor Gauss-Legendre over a region bounded by two graphs.

    The order is doubled until two successive estimates differ by less than
    ``tol`` (relative to ``max(1, |value|)``).  ``f`` receives broadcast
    arrays ``(x1, x2)`` and must be vectorised.

    Raises
    ------
    NonConvergent
        If the last two refinements still differ by more than ``fail_tol``.
    """
    if order < 8:
        raise ValueError("order must be >= 8")
    prev = _region_tensor(f, r, order, layers, ratio)
    while True:
        order *= 2
        cur = _region_tensor(f, r, order, layers, ratio)
        err = abs(cur - prev)
        scale = max(1.0, abs(cur))
        if err <= tol * scale:
            return QuadratureResult(cur, err, order)
        if order >= max_order:
            if err > fail_tol * scale:
                raise NonConvergent(f"refinements differ by {err:.3g} at order {order}")
            return QuadratureResult(cur, err, order)
        prev = cur


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Scalar adaptive Simpson with Richardson correction.

    Deliberately independent of the Gauss-Legendre code path; used to
    cross-check it.
    """
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # explicit stack: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * eps, depth + 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))
    return total


# ---------------------------------------------------------------------------
# finite differences and smoothing

def central_difference(fn: Callable[[float], float], t: float, delta: float) -> float:
    """``(fn(t + delta) - fn(t - delta)) / (2 delta)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return (fn(t + delta) - fn(t - delta)) / (2.0 * delta)


def _bump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


def mollify_1d(phi: Callable, j: int, y: float, order: int = 64) -> float:
    """Convolve ``phi`` with the bump kernel of radius ``1/j`` and evaluate at ``y``.

    The kernel is normalised by its own discrete quadrature sum, so constants
    are reproduced to rounding error.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    if order < 32:
        raise ValueError("order must be >= 32")
    x, w = gauss_legendre(order)
    k = _bump(x) * w
    k = k / k.sum()
    z = x / j
    vals = np.array([phi(y - zi) for zi in z], dtype=float)
    return float(np.dot(k, vals))


# ---------------------------------------------------------------------------
# Leibniz rule verification on moving domains

@dataclass(frozen=True)
class BoundarySegment:
    """A piece of the reference boundary: ``u(t)`` and ``u'(t)`` for t in [0, 1].

    Segments are traversed counter-clockwise so the outward normal is the
    tangent rotated clockwise.
    """

    u: Callable
    du: Callable


@dataclass(frozen=True)
class MovingDomainCase:
    """``D_theta = phi(U, theta)`` together with an integrand ``G(x, theta)``.

    ``param_region``/``param_map`` describe U for interior quadrature:
    ``param_map(w1, w2) -> (u1, u2, jac)`` with ``jac = |det du/dw|``.
    """

    name: str
    phi: Callable                 # (u1, u2, theta) -> (x1, x2)
    phi_inverse: Callable         # (x1, x2, theta) -> (u1, u2)
    phi_jacobian: Callable        # (u1, u2, theta) -> 2x2 nested tuple
    dtheta_phi: Callable          # (u1, u2, theta) -> (v1, v2)
    dtheta_phi_jacobian: Callable  # (u1, u2, theta) -> d(dtheta_phi)/du, 2x2
    boundary: Sequence[BoundarySegment]
    param_region: Region2D
    param_map: Callable
    integrand: Callable           # (x1, x2, theta) -> G
    integrand_grad: Callable      # (x1, x2, theta) -> (dG/dx1, dG/dx2)
    integrand_dtheta: Callable    # (x1, x2, theta) -> dG/dtheta

    def velocity(self, x1, x2, theta):
        u1, u2 = self.phi_inverse(x1, x2, theta)
        return self.dtheta_phi(u1, u2, theta)

    def normal(self, segment: BoundarySegment, t, theta):
        """Outward unit normal at boundary parameter ``t`` of ``segment``."""
        dx1, dx2 = self._tangent(segment, t, theta)
        norm = np.hypot(dx1, dx2)
        return dx2 / norm, -dx1 / norm

    def _tangent(self, segment, t, theta):
        u1, u2 = segment.u(t)
        du1, du2 = segment.du(t)
        j = self.phi_jacobian(u1, u2, theta)
        return j[0][0] * du1 + j[0][1] * du2, j[1][0] * du1 + j[1][1] * du2

    def domain_integral(self, theta, order: int = 64) -> float:
        return self._interior(lambda x1, x2: self.integrand(x1, x2, theta), theta, order)

    def _interior(self, g, theta, order):
        def in_u(w1, w2):
            u1, u2, jw = self.param_map(w1, w2)
            j = self.phi_jacobian(u1, u2, theta)
            detj = np.abs(j[0][0] * j[1][1] - j[0][1] * j[1][0])
            x1, x2 = self.phi(u1, u2, theta)
            return g(x1, x2) * detj * jw

        return integrate_region_2d(in_u, self.param_region, order, tol=1e-13,
                                   max_order=2 * order, fail_tol=1e-8).value


def verify_leibniz_rules(case: MovingDomainCase, theta: float, *, panels: int = 256,
                         nodes_per_panel: int = 4, order: int = 64,
                         fd_delta: float = 1e-4):
    """Evaluate both Leibniz rule forms and a finite-difference reference.

    Returns
    -------
    (surface_form, divergence_form, reference)
        ``surface_form`` is boundary flux of ``G v.n`` plus the interior
        integral of ``dG/dtheta``; ``divergence_form`` integrates
        ``div(G v) + dG/dtheta`` over the domain; ``reference`` is the central
        difference of the plain domain integral.
    """
    x, w = gauss_legendre(nodes_per_panel)
    edges = np.linspace(0.0, 1.0, panels + 1)
    t = (0.5 * (edges[1:] - edges[:-1])[:, None] * (x[None, :] + 1.0) + edges[:-1, None]).ravel()
    wt = (0.5 * (edges[1:] - edges[:-1])[:, None] * w[None, :]).ravel()

    flux = 0.0
    for seg in case.boundary:
        u1, u2 = seg.u(t)
        x1, x2 = case.phi(u1, u2, theta)
        v1, v2 = case.dtheta_phi(u1, u2, theta)
        dx1, dx2 = case._tangent(seg, t, theta)
        # G (v . n) dsigma with n dsigma = (dx2, -dx1) dt
        flux += float(np.sum(wt * case.integrand(x1, x2, theta) * (v1 * dx2 - v2 * dx1)))

    interior_dtheta = case._interior(lambda a, b: case.integrand_dtheta(a, b, theta), theta, order)
    surface_form = flux + interior_dtheta

    def div_term(x1, x2):
        u1, u2 = case.phi_inverse(x1, x2, theta)
        v1, v2 = case.dtheta_phi(u1, u2, theta)
        jp = case.phi_jacobian(u1, u2, theta)
        jv = case.dtheta_phi_jacobian(u1, u2, theta)
        det = jp[0][0] * jp[1][1] - jp[0][1] * jp[1][0]
        # div_x v = trace(dv/du @ inverse(dphi/du))
        div_v = (jv[0][0] * jp[1][1] - jv[0][1] * jp[1][0]
                 - jv[1][0] * jp[0][1] + jv[1][1] * jp[0][0]) / det
        g1, g2 = case.integrand_grad(x1, x2, theta)
        g = case.integrand(x1, x2, theta)
        return g1 * v1 + g2 * v2 + g * div_v + case.integrand_dtheta(x1, x2, theta)

    divergence_form = case._interior(div_term, theta, order)
    reference = central_difference(lambda s: case.domain_integral(s, order), theta, fd_delta)
    return surface_form, divergence_form, reference


def _const(c):
    return lambda *a: np.full(np.shape(a[0]), float(c))


def _scaled_case(name, boundary, param_region, param_map, integrand, grad, dtheta):
    """Cases with ``phi(u, theta) = theta * u``."""
    return MovingDomainCase(
        name=name,
        phi=lambda u1, u2, th: (th * u1, th * u2),
        phi_inverse=lambda x1, x2, th: (x1 / th, x2 / th),
        phi_jacobian=lambda u1, u2, th: ((th, 0.0), (0.0, th)),
        dtheta_phi=lambda u1, u2, th: (u1, u2),
        dtheta_phi_jacobian=lambda u1, u2, th: ((1.0, 0.0), (0.0, 1.0)),
        boundary=boundary,
        param_region=param_region,
        param_map=param_map,
        integrand=integrand,
        integrand_grad=grad,
        integrand_dtheta=dtheta,
    )


_CIRCLE = (BoundarySegment(
    u=lambda t: (np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)),
    du=lambda t: (-2 * np.pi * np.sin(2 * np.pi * t), 2 * np.pi * np.cos(2 * np.pi * t)),
),)

_POLAR = Region2D((0.0, 1.0), x2_upper=lambda r: np.full_like(r, 2 * np.pi))


def _polar_map(r, a):
    return r * np.cos(a), r * np.sin(a), r


def _square_boundary():
    one, zero = (lambda t: np.ones_like(t)), (lambda t: np.zeros_like(t))
    return (
        BoundarySegment(u=lambda t: (t, 0 * t), du=lambda t: (one(t), zero(t))),
        BoundarySegment(u=lambda t: (1 + 0 * t, t), du=lambda t: (zero(t), one(t))),
        BoundarySegment(u=lambda t: (1 - t, 1 + 0 * t), du=lambda t: (-one(t), zero(t))),
        BoundarySegment(u=lambda t: (0 * t, 1 - t), du=lambda t: (zero(t), -one(t))),
    )


_UNIT_SQUARE = Region2D((0.0, 1.0), x2_upper=lambda x1: np.ones_like(x1))


def _identity_map(w1, w2):
    return w1, w2, np.ones_like(w1)


def disk_case() -> MovingDomainCase:
    """Disk of radius theta, G = 1; derivative of the area is 2 pi theta."""
    return _scaled_case("disk", _CIRCLE, _POLAR, _polar_map,
                        _const(1.0), lambda x1, x2, th: (0 * x1, 0 * x2), _const(0.0))


def square_case() -> MovingDomainCase:
    """Square (0, theta)^2, G = 1."""
    return _scaled_case("square", _square_boundary(), _UNIT_SQUARE, _identity_map,
                        _const(1.0), lambda x1, x2, th: (0 * x1, 0 * x2), _const(0.0))


def square_linear_case() -> MovingDomainCase:
    """Square (0, theta)^2, G = x1 + x2."""
    return _scaled_case("square_linear", _square_boundary(), _UNIT_SQUARE, _identity_map,
                        lambda x1, x2, th: x1 + x2,
                        lambda x1, x2, th: (np.ones_like(x1), np.ones_like(x2)),
                        _const(0.0))


def shifted_disk_case() -> MovingDomainCase:
    """Unit disk whose centre travels along (theta, theta/2), with a
    theta-dependent Gaussian integrand ``exp(-theta |x|^2 / 2)``."""

    def G(x1, x2, th):
        return np.exp(-0.5 * th * (x1 ** 2 + x2 ** 2))

    def grad(x1, x2, th):
        g = G(x1, x2, th)
        return -th * x1 * g, -th * x2 * g

    def dth(x1, x2, th):
        return -0.5 * (x1 ** 2 + x2 ** 2) * G(x1, x2, th)

    return MovingDomainCase(
        name="shifted_disk",
        phi=lambda u1, u2, th: (th + u1, 0.5 * th + u2),
        phi_inverse=lambda x1, x2, th: (x1 - th, x2 - 0.5 * th),
        phi_jacobian=lambda u1, u2, th: ((1.0, 0.0), (0.0, 1.0)),
        dtheta_phi=lambda u1, u2, th: (np.ones_like(u1), np.full_like(u2, 0.5)),
        dtheta_phi_jacobian=lambda u1, u2, th: ((0.0, 0.0), (0.0, 0.0)),
        boundary=_CIRCLE,
        param_region=_POLAR,
        param_map=_polar_map,
        integrand=G,
        integrand_grad=grad,
        integrand_dtheta=dth,
    )


def builtin_moving_domain_cases() -> list[MovingDomainCase]:
    return [disk_case(), square_case(), square_linear_case(), shifted_disk_case()]


def bump_normalizer() -> float:
    """Mass of the un-normalised bump ``exp(-1/(1-z^2))`` on (-1, 1)."""
    x, w = gauss_legendre(256)
    return float(np.dot(w, _bump(x)))


__all__ = [
    "DET_THRESHOLD", "SingularMatrix", "NonConvergent", "det_small", "invert_small",
    "solve_small", "gauss_legendre", "integrate_1d", "Region2D", "QuadratureResult",
    "integrate_region_2d", "adaptive_simpson", "central_difference", "mollify_1d",
    "BoundarySegment", "MovingDomainCase", "verify_leibniz_rules", "disk_case",
    "square_case", "square_linear_case", "shifted_disk_case",
    "builtin_moving_domain_cases", "bump_normalizer",
]
