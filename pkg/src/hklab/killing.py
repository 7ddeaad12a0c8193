"""The killing constant C(p; alpha, F) and the boundary exponent q.

C(p) = int_{R^{d-1}} (|u|^2+1)^{-(d+alpha)/2}
           int_0^1 (s^p-1)(1-s^{alpha-1-p})(1-s)^{-1-alpha} F(((s-1)u, s-1)) ds du

and q solves kappa0 = C(q).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InfeasibleError, NumericError, PreconditionError
from .quadrature import QuadratureSpec, gauss_panels
from .scaling import ScalingTriple

RADIAL_CUTOFF = 1e3
S_GRADE_FLOOR = 1e-12
UPPER_GAP = 1e-6


@dataclass(frozen=True)
class BoundaryProfile:
    """F on the half-space {w_d > -1}.

    ``F`` maps an (n, d) array to n values. ``radial`` means F depends on w
    only through (|w|, w_d), which collapses the angular integral.
    ``beta1`` is the decay index of F as w_d -> -1; it fixes the admissible
    range of p.
    """

    F: Callable
    dim: int
    beta1: float = 0.0
    symmetrized: bool = False
    radial: bool = False
    label: str = "custom"

    def __call__(self, w):
        w = np.atleast_2d(np.asarray(w, dtype=float))
        return self.F(w)

    @classmethod
    def constant(cls, dim=2, value=1.0):
        value = float(value)
        return cls(lambda w: np.full(len(w), value), dim, 0.0, True, True, f"constant({value})")

    @classmethod
    def from_triple(cls, triple: ScalingTriple, dim=2, symmetrize=True):
        f0 = lambda w: f0_model_eval(triple, w)
        if symmetrize:
            return cls(lambda w: F_symmetrize(f0, w), dim, triple.beta1, True, True, "product-sym")
        return cls(f0, dim, triple.beta1, False, True, "product")


def f0_model_eval(t: ScalingTriple, w):
    """F0(w) = Phi1(m/|w|) Phi2(M/|w|) ell(m/(M ^ |w|)), m = 1^(1+w_d), M = 1v(1+w_d)."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    nw = np.linalg.norm(w, axis=1)
    if np.any(nw == 0):
        raise DomainError("F0 is not defined at w = 0")
    if np.any(w[:, -1] <= -1):
        raise DomainError("F0 needs w_d > -1")
    one_p = 1.0 + w[:, -1]
    m = np.minimum(1.0, one_p)
    M = np.maximum(1.0, one_p)
    out = t.phi1.unchecked(m / nw) * t.phi2.unchecked(M / nw)
    if t.ell.family != "constant":
        out = out * t.ell.unchecked(m / np.minimum(M, nw))
    return out


def reflect(w):
    """w -> -w/(1 + w_d), the involution of the half-space {w_d > -1}."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return -w / (1.0 + w[:, -1:])


def F_symmetrize(F0, w):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return 0.5 * (F0(w) + F0(reflect(w)))


# quadrature pieces

def sphere_area(k):
    """Surface measure of S^k (k = 0 gives the two points of S^0)."""
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def radial_weight_integral(alpha, d):
    """int_{R^{d-1}} (|u|^2+1)^{-(d+alpha)/2} du in closed form."""
    return pi ** ((d - 1) / 2) * gamma((1 + alpha) / 2) / gamma((d + alpha) / 2)


def s_integral_closed_form(alpha, p):
    """int_0^1 (s^p-1)(1-s^{alpha-1-p})(1-s)^{-1-alpha} ds, by continuation of Beta functions."""
    from scipy.special import gamma as G, rgamma
    return float(G(-alpha) * (G(p + 1) * rgamma(p + 1 - alpha) - rgamma(1 - alpha)
                              + G(alpha - p) * rgamma(-p)))


def _s_nodes(order):
    """Gauss nodes on [0, 1] graded geometrically towards both ends."""
    k = int(np.ceil(np.log2(0.5 / S_GRADE_FLOOR)))
    left = np.concatenate([[S_GRADE_FLOOR], 0.5 ** np.arange(k, 0, -1)])
    edges = np.concatenate([left, 1.0 - left[::-1][1:]])
    # edges run S_GRADE_FLOOR .. 0.5 .. 1 - S_GRADE_FLOOR; last is 1 - floor
    s, ws = gauss_panels(edges, order)
    return s, ws, edges[0], 1.0 - edges[-1]


def _g(alpha, p, s):
    """(s^p-1)(1-s^c)(1-s)^(-1-alpha), c = alpha-1-p, stable near s = 1."""
    c = alpha - 1.0 - p
    w = 1.0 - s
    lg = np.log1p(-w)
    return np.expm1(p * lg) * (-np.expm1(c * lg)) * w ** (-1.0 - alpha)


def _radial_nodes(order):
    edges = np.concatenate([[0.0, 0.25, 0.5, 0.75], 2.0 ** np.arange(0, 10), [RADIAL_CUTOFF]])
    return gauss_panels(edges, order)


def _tail_weight(alpha, d, R, order=30):
    # int_R^inf rho^{d-2} (rho^2+1)^{-(d+alpha)/2} d rho via rho = 1/x
    x, w = gauss_panels(np.concatenate([[0.0], (1.0 / R) * 0.5 ** np.arange(30, -1, -1)]), order)
    return float(np.sum(w * x ** alpha * (1 + x * x) ** (-(d + alpha) / 2)))


def _angles(prof: BoundaryProfile, d, n_phi=16):
    if prof.radial or d == 2:
        if d == 2 and not prof.radial:
            return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
        th = np.zeros((1, d - 1))
        th[0, 0] = 1.0
        return th, np.array([sphere_area(d - 2)])
    if d == 3:
        phi = 2 * pi * np.arange(n_phi) / n_phi
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(n_phi, 2 * pi / n_phi)
    raise DomainError("only d = 2, 3 are supported")


def _s_integral_for_w(alpha, p, prof, s, ws, s0, w0, directions):
    """Inner s-integral for each row of ``directions`` (the vectors u)."""
    c = alpha - 1.0 - p
    g = _g(alpha, p, s)
    nd = len(directions)
    d = directions.shape[1] + 1
    sm = s - 1.0
    pts = np.empty((nd, len(s), d))
    pts[:, :, :-1] = sm[None, :, None] * directions[:, None, :]
    pts[:, :, -1] = sm[None, :]
    Fv = prof.F(pts.reshape(-1, d)).reshape(nd, len(s))
    body = Fv @ (ws * g)
    # tail near s = 1: g ~ p(p+1-alpha) w^(1-alpha), F -> F near w = 0
    w_mid = np.empty((nd, 1, d))
    w_mid[:, 0, :-1] = -0.5 * w0 * directions
    w_mid[:, 0, -1] = -0.5 * w0
    F1 = prof.F(w_mid.reshape(-1, d))
    tail1 = p * (p + 1 - alpha) * F1 * w0 ** (2 - alpha) / (2 - alpha)
    # tail near s = 0: g ~ s^c - 1 and F ~ s^beta1 (the profile's declared decay)
    if p == 0 or c == 0:
        tail0 = np.zeros(nd)
    else:
        e = prof.beta1
        expo = c + 1.0 + e
        if expo <= 0:
            raise DomainError("s-integral diverges at s = 0 for this p")
        probe = np.empty((nd, d))
        probe[:, :-1] = (s0 - 1.0) * directions
        probe[:, -1] = s0 - 1.0
        F0 = prof.F(probe)
        tail0 = F0 * (s0 ** (c + 1.0) / expo - s0 / (1.0 + e))
    return body + tail1 + tail0


def _C_core(alpha, p, prof, d, order):
    s, ws, s0, w0 = _s_nodes(order)
    rho, wr = _radial_nodes(order)
    th, wth = _angles(prof, d)
    weight = rho ** (d - 2) * (rho * rho + 1) ** (-(d + alpha) / 2)
    total = 0.0
    for k, (t_dir, wt) in enumerate(zip(th, wth)):
        dirs = rho[:, None] * t_dir[None, :]
        inner = _s_integral_for_w(alpha, p, prof, s, ws, s0, w0, dirs)
        total += wt * float(np.sum(wr * weight * inner))
        far = _s_integral_for_w(alpha, p, prof, s, ws, s0, w0, (RADIAL_CUTOFF * t_dir)[None, :])
        total += wt * float(far[0]) * _tail_weight(alpha, d, RADIAL_CUTOFF)
    return total


def p_domain(alpha, beta1):
    return max(alpha - 1.0, 0.0), alpha + beta1


def C_const_eval(alpha, p, F: BoundaryProfile, quad: QuadratureSpec = QuadratureSpec(), dim=None):
    """C(p; alpha, F) by graded Gauss panels in s and radial panels in |u|."""
    d = F.dim if dim is None else int(dim)
    if not 0 < alpha < 2:
        raise DomainError("alpha must lie in (0, 2)")
    lo, hi = p_domain(alpha, F.beta1)
    if not lo <= p < hi:
        raise DomainError(f"p={p} outside [{lo}, {hi})")
    if p == lo:
        return 0.0
    a = _C_core(alpha, p, F, d, 20)
    b = _C_core(alpha, p, F, d, 14)
    if abs(a - b) > max(quad.abs_tol, 10 * quad.rel_tol * abs(a)):
        raise NumericError("killing constant quadrature did not settle",
                           {"alpha": alpha, "p": p, "order20": a, "order14": b})
    return a


def C_separable(alpha, p, d):
    """Closed-form C for F = 1: outer weight integral times the s-integral."""
    return radial_weight_integral(alpha, d) * s_integral_closed_form(alpha, p)


def solve_q(alpha, kappa0, F: BoundaryProfile, beta1=None, quad: QuadratureSpec = QuadratureSpec()):
    """Boundary exponent q with kappa0 = C(q; alpha, F)."""
    if kappa0 < 0:
        raise DomainError("kappa0 must be nonnegative")
    if kappa0 == 0:
        if alpha > 1:
            return alpha - 1.0
        raise PreconditionError("alpha <= 1 needs kappa0 > 0")
    if beta1 is not None and beta1 != F.beta1:
        F = BoundaryProfile(F.F, F.dim, float(beta1), F.symmetrized, F.radial, F.label)
    lo, hi = p_domain(alpha, F.beta1)
    top = hi - UPPER_GAP
    c_top = C_const_eval(alpha, top, F, quad)
    if kappa0 >= c_top:
        raise InfeasibleError(f"kappa0={kappa0} is not below the limit C({top})={c_top}")
    target = 1e-8 * max(1.0, kappa0)
    fn = lambda p: (C_const_eval(alpha, p, F, quad) if p > lo else 0.0) - kappa0
    q = brentq(fn, lo, top, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(fn(q)) > target:
        raise NumericError("root of kappa0 = C(q) not resolved", {"q": q, "residual": fn(q)})
    return float(q)


def C_table(alpha, ps, F: BoundaryProfile, quad: QuadratureSpec = QuadratureSpec()):
    return [(float(p), C_const_eval(alpha, p, F, quad)) for p in ps]
