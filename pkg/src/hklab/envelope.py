"""Closed-form heat-kernel envelopes and the integrals they are built from.

Throughout, tau = t^(1/alpha), r = |x - y| and A_{f,g,h} is the
three-factor envelope function of time-inflated boundary distances.
All u-integrals with weight du/u^(alpha+1) are computed in v = log u.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, RangeError, UsageError
from .geometry import Domain
from .kernel import KernelModel
from .quadrature import QuadratureSpec, adaptive_simpson, kink_points
from .scaling import ScalingFunction

ON_DIAGONAL = "OnDiagonal"
OFF_DIAGONAL = "OffDiagonal"

_ONE = ScalingFunction.constant()


@dataclass(frozen=True)
class SpaceTimeTriple:
    t: float
    x: tuple
    y: tuple
    dx: float
    dy: float
    r: float

    @classmethod
    def make(cls, dom: Domain, t, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if t < 0:
            raise DomainError("time must be nonnegative")
        return cls(float(t), tuple(map(float, x)), tuple(map(float, y)),
                   float(dom.delta(x)), float(dom.delta(y)),
                   float(np.linalg.norm(x - y)))

    def swapped(self):
        return SpaceTimeTriple(self.t, self.y, self.x, self.dy, self.dx, self.r)

    def tau(self, alpha):
        return self.t ** (1.0 / alpha)


@dataclass(frozen=True)
class EnvelopeTerms:
    stable_factor: float
    A_term: Optional[float] = None
    two_jump_term_x: Optional[float] = None
    two_jump_term_y: Optional[float] = None
    cross_term: Optional[float] = None
    boundary_factor_x: float = 1.0
    boundary_factor_y: float = 1.0


@dataclass(frozen=True)
class EnvelopeValue:
    """``formula`` names how ``value`` is rebuilt from ``terms``:

    on_diagonal  stable * bx * by
    two_jump     stable * (jx + jy) * bx * by
    single_jump  stable * A * bx * by
    cross        stable * (A + cross) * bx * by
    """

    value: float
    branch: str
    formula: str
    terms: EnvelopeTerms

    def reconstruct(self):
        tm = self.terms
        b = tm.boundary_factor_x * tm.boundary_factor_y
        if self.formula == "on_diagonal":
            return tm.stable_factor * b
        if self.formula == "two_jump":
            return tm.stable_factor * (tm.two_jump_term_x + tm.two_jump_term_y) * b
        if self.formula == "single_jump":
            return tm.stable_factor * tm.A_term * b
        if self.formula == "cross":
            return tm.stable_factor * (tm.A_term + tm.cross_term) * b
        raise ValueError(self.formula)

    def with_boundary(self, bx, by):
        tm = self.terms
        terms = EnvelopeTerms(tm.stable_factor, tm.A_term, tm.two_jump_term_x,
                              tm.two_jump_term_y, tm.cross_term, bx, by)
        v = EnvelopeValue(0.0, self.branch, self.formula, terms)
        return EnvelopeValue(v.reconstruct(), self.branch, self.formula, terms)


# the A function

def A_parts(f: ScalingFunction, g: ScalingFunction, h: ScalingFunction, dx, dy, r, tau):
    """A_{f,g,h} from delta_x, delta_y, r and tau (vectorised)."""
    lo = np.maximum(np.minimum(dx, dy), tau)
    hi = np.maximum(np.maximum(dx, dy), tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = f.unchecked(lo / r) * g.unchecked(hi / r)
        if h.family != "constant":
            out = out * h.unchecked(lo / np.minimum(hi, r))
    return out


def A_eval(m: KernelModel, dom: Domain, f, g, h, s: SpaceTimeTriple) -> float:
    if s.r == 0 and s.t == 0:
        raise DomainError("A needs x != y or t > 0")
    return float(A_parts(f, g, h, s.dx, s.dy, s.r, s.tau(m.alpha)))


def A_main(m, s):
    """A_{Phi1, Phi2, ell}(t, x, y)."""
    return float(A_parts(m.phi1, m.phi2, m.ell, s.dx, s.dy, s.r, s.tau(m.alpha)))


def A_cross(m, s):
    """A_{Phi0, Phi0, 1}(t, x, y)."""
    return float(A_parts(m.phi0, m.phi0, _ONE, s.dx, s.dy, s.r, s.tau(m.alpha)))


def stable_factor(d, alpha, t, r):
    """t^(-d/alpha) ^ t / r^(d+alpha)."""
    on = t ** (-d / alpha)
    if r == 0:
        return on
    return min(on, t * r ** (-d - alpha))


# two-jump integrals along the lift ray

def _delta_kinks(dom: Domain, p, n):
    """Functions of u whose sign changes mark kinks of delta(p + u n)."""
    if dom.shape == "ball":
        c0 = float(np.linalg.norm(p - np.asarray(dom.center)))
        return lambda u: (u - c0)[None, :]
    lo, hi = np.asarray(dom.lo), np.asarray(dom.hi)

    def faces(u):
        z = p + u[:, None] * n
        fd = np.concatenate([z - lo, hi - z], axis=1).T
        i, j = np.triu_indices(len(fd), 1)
        return fd[i] - fd[j]
    return faces


def _two_jump_integrand(m: KernelModel, dom: Domain, p, q, dp, dq, tau):
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    n = dom.lift_direction(p)
    alpha = m.alpha
    f1, f2, ell = m.phi1, m.phi2, m.ell

    def geom(v):
        u = np.exp(v)
        z = p + u[:, None] * n
        dz = dom.delta(z)
        rz = np.linalg.norm(z - q, axis=1)
        return u, dz, rz

    def integrand(v):
        u, dz, rz = geom(v)
        a1 = A_parts(f1, f2, ell, dp, dz, u, tau)
        a2 = A_parts(f1, f2, ell, dz, dq, rz, tau)
        return a1 * a2 * np.exp(-alpha * v)

    dk = _delta_kinks(dom, p, n)

    def crossings(v):
        u, dz, rz = geom(v)
        logs = np.log(np.vstack([np.full_like(u, dp), dz, u, np.full_like(u, tau),
                                 np.full_like(u, dq), rz]) + 1e-300)
        i, j = np.triu_indices(len(logs), 1)
        return np.vstack([logs[i] - logs[j], dk(u)])

    return integrand, crossings


def two_jump_integral(m: KernelModel, dom: Domain, s: SpaceTimeTriple, side: str,
                      lower: float, upper: float, quad: QuadratureSpec = QuadratureSpec()):
    """int_lower^upper A(t,p,p+u n_p) A(t,p+u n_p,q) du/u^(alpha+1),
    with p = x (side 'x') or p = y (side 'y')."""
    if not 0 < lower:
        raise RangeError("two-jump integral needs a positive lower limit")
    if upper <= lower:
        return 0.0
    if upper > dom.eta1 * (1 + 1e-12):
        raise RangeError("lift length beyond eta1")
    tau = s.tau(m.alpha)
    if side == "x":
        p, q, dp, dq = s.x, s.y, s.dx, s.dy
    else:
        p, q, dp, dq = s.y, s.x, s.dy, s.dx
    if dp <= 0:
        raise DomainError("the lifted point must lie inside D")
    f, cross = _two_jump_integrand(m, dom, p, q, dp, dq, tau)
    a, b = np.log(lower), np.log(upper)
    seeds = kink_points(cross, a, b)
    return adaptive_simpson(f, a, b, seeds, quad.rel_tol, quad.abs_tol, quad.max_subdivisions)


def _require_off_diag(m, dom, s):
    tau = s.tau(m.alpha)
    upper = dom.eps1 * s.r
    if not tau < upper:
        raise RangeError("empty integration range: need t^(1/alpha) < eps1 |x - y|")
    return tau, upper


def I1_eval(m, dom, s, quad=QuadratureSpec()):
    tau, upper = _require_off_diag(m, dom, s)
    return s.t * (two_jump_integral(m, dom, s, "x", tau, upper, quad)
                  + two_jump_integral(m, dom, s, "y", tau, upper, quad))


def I2_eval(m, dom, s, quad=QuadratureSpec()):
    tau, upper = _require_off_diag(m, dom, s)
    lower = min(max(s.dx, s.dy, tau), upper / 2)
    return A_main(m, s) + s.t * (two_jump_integral(m, dom, s, "x", lower, upper, quad)
                                 + two_jump_integral(m, dom, s, "y", lower, upper, quad))


def single_side_profile_integral(m, s, p_delta, q_delta, quad=QuadratureSpec()):
    """Phi1((dp v tau)/r) int_L^r Phi0((dq v tau)/u) Phi2(u/r) ell((dp v tau)/u) du/u^(alpha+1),
    L = (dx v dy v tau) ^ r."""
    tau = s.tau(m.alpha)
    r = s.r
    lower = min(max(s.dx, s.dy, tau), r)
    if lower >= r:
        return 0.0
    ap = max(p_delta, tau)
    aq = max(q_delta, tau)
    phi0, phi2, ell, alpha = m.phi0, m.phi2, m.ell, m.alpha

    def f(v):
        u = np.exp(v)
        return phi0.unchecked(aq / u) * phi2.unchecked(u / r) * ell.unchecked(ap / u) * np.exp(-alpha * v)

    seeds = np.log([ap, aq])
    val = adaptive_simpson(f, np.log(lower), np.log(r), seeds,
                           quad.rel_tol, quad.abs_tol, quad.max_subdivisions)
    return float(m.phi1(ap / r)) * val


def I3_eval(m, dom, s, quad=QuadratureSpec()):
    _require_off_diag(m, dom, s)
    return A_main(m, s) + s.t * (single_side_profile_integral(m, s, s.dx, s.dy, quad)
                                 + single_side_profile_integral(m, s, s.dy, s.dx, quad))


def two_jump_expression(m, dom, s, quad=QuadratureSpec(), lower="delta", weight="t"):
    """Symmetrised two-jump expression  w * (int_x + int_y) over [L, eps1 r].

    lower='delta': L = (dx v dy v tau) ^ (eps1 r/2);  lower='tau': L = tau ^ (eps1 r/2).
    weight='t': w = t ^ r^alpha;  weight='r': w = r^alpha.
    """
    tau = s.tau(m.alpha)
    upper = dom.eps1 * s.r
    base = max(s.dx, s.dy, tau) if lower == "delta" else tau
    lo = min(base, upper / 2)
    w = min(s.t, s.r ** m.alpha) if weight == "t" else s.r ** m.alpha
    return w * (two_jump_integral(m, dom, s, "x", lo, upper, quad)
                + two_jump_integral(m, dom, s, "y", lo, upper, quad))


# envelopes

def envelope_conservative(m, dom, s, q_exponent=0.0, quad=QuadratureSpec()) -> EnvelopeValue:
    """Two-sided envelope for the conservative heat kernel."""
    if not s.t > 0:
        raise DomainError("time must be positive")
    d, alpha = dom.dim, m.alpha
    tau = s.tau(alpha)
    if tau >= dom.eps1 * s.r / 2:
        on = s.t ** (-d / alpha)
        return EnvelopeValue(on, ON_DIAGONAL, "on_diagonal", EnvelopeTerms(on))
    stable = stable_factor(d, alpha, s.t, s.r)
    upper = dom.eps1 * s.r
    w = min(s.t, s.r ** alpha)
    jx = w * two_jump_integral(m, dom, s, "x", tau, upper, quad)
    jy = w * two_jump_integral(m, dom, s, "y", tau, upper, quad)
    terms = EnvelopeTerms(stable, A_main(m, s), jx, jy)
    return EnvelopeValue(stable * (jx + jy), OFF_DIAGONAL, "two_jump", terms)


def _branch(m, dom, s):
    return ON_DIAGONAL if s.tau(m.alpha) >= dom.eps1 * s.r / 2 else OFF_DIAGONAL


def envelope_case_i(m, dom, s) -> EnvelopeValue:
    if m.case_tag != "CaseI":
        raise UsageError("single-jump form needs beta2* < alpha + beta1")
    stable = stable_factor(dom.dim, m.alpha, s.t, s.r)
    a = A_main(m, s)
    return EnvelopeValue(stable * a, _branch(m, dom, s), "single_jump",
                         EnvelopeTerms(stable, a))


def _cross_weight(m, s):
    return 1.0 if s.r == 0 else min(1.0, s.t / s.r ** m.alpha)


def envelope_case_ii(m, dom, s) -> EnvelopeValue:
    if m.case_tag != "CaseII":
        raise UsageError("two-jump form needs beta2 > alpha + beta1*")
    stable = stable_factor(dom.dim, m.alpha, s.t, s.r)
    a = A_main(m, s)
    c = _cross_weight(m, s) * A_cross(m, s)
    return EnvelopeValue(stable * (a + c), _branch(m, dom, s), "cross",
                         EnvelopeTerms(stable, a, cross_term=c))


def borderline_parts(m: KernelModel):
    """(beta1, phi) for a borderline model Phi1 = r^beta1, Phi2 = r^(alpha+beta1) phi."""
    p1, p2 = m.phi1, m.phi2
    if p1.family not in ("powerlog", "constant") or p2.family != "powerlog":
        raise UsageError("borderline form needs power-log Phi1 and Phi2")
    beta1 = p1.beta if p1.family == "powerlog" else 0.0
    if p1.family == "powerlog" and p1.gamma != 0:
        raise UsageError("borderline form needs a pure power Phi1")
    if abs(p2.beta - (m.alpha + beta1)) > 1e-12:
        raise UsageError("borderline form needs beta2 = alpha + beta1")
    phi = ScalingFunction.power_log(0.0, p2.gamma, 0.0, 0.0) if p2.gamma != 0 else _ONE
    return beta1, phi


def borderline_log_integral(m, s, quad=QuadratureSpec()):
    """int_L^r du/u * ell(ax/u) ell(ay/u) phi(u/r) / (ell(ax/r) ell(ay/r)),
    ax = dx v tau, ay = dy v tau, L = (dx v dy v tau) ^ r."""
    _, phi = borderline_parts(m)
    tau = s.tau(m.alpha)
    r = s.r
    if r == 0:
        return 0.0
    lower = min(max(s.dx, s.dy, tau), r)
    if lower >= r:
        return 0.0
    ax, ay = max(s.dx, tau), max(s.dy, tau)
    ell = m.ell
    norm = float(ell(ax / r) * ell(ay / r))

    def f(v):
        u = np.exp(v)
        return ell.unchecked(ax / u) * ell.unchecked(ay / u) * phi.unchecked(u / r)

    return adaptive_simpson(f, np.log(lower), np.log(r), np.log([ax, ay]),
                            quad.rel_tol, quad.abs_tol, quad.max_subdivisions) / norm


def envelope_case_iii(m, dom, s, quad=QuadratureSpec()) -> EnvelopeValue:
    borderline_parts(m)
    stable = stable_factor(dom.dim, m.alpha, s.t, s.r)
    a = A_main(m, s)
    c = _cross_weight(m, s) * A_cross(m, s) * borderline_log_integral(m, s, quad)
    return EnvelopeValue(stable * (a + c), _branch(m, dom, s), "cross",
                         EnvelopeTerms(stable, a, cross_term=c))


def envelope_case_iii_log_form(m, dom, s, beta4):
    """Comparison form with the log^(beta4+1)(e + r/L) factor."""
    stable = stable_factor(dom.dim, m.alpha, s.t, s.r)
    a = A_main(m, s)
    tau = s.tau(m.alpha)
    if s.r == 0:
        lg = 1.0
    else:
        lower = min(max(s.dx, s.dy, tau), s.r)
        lg = np.log(np.e + s.r / lower) ** (beta4 + 1)
    c = _cross_weight(m, s) * A_cross(m, s) * lg
    return EnvelopeValue(stable * (a + c), _branch(m, dom, s), "cross",
                         EnvelopeTerms(stable, a, cross_term=c))


def _check_q(m, q):
    lo = max(m.alpha - 1.0, 0.0)
    if not (lo - 1e-12 <= q < m.alpha + m.triple.beta1) and q != 0:
        raise DomainError(f"q={q} outside [{lo}, {m.alpha + m.triple.beta1})")


def boundary_factor(delta, tau, q):
    return min(1.0, delta / tau) ** q if q else 1.0


def envelope_killed_small_time(m, dom, s, q, quad=QuadratureSpec(), T=1.0) -> EnvelopeValue:
    if s.t > T:
        raise DomainError(f"small-time envelope needs t <= T={T}")
    _check_q(m, q)
    base = envelope_conservative(m, dom, s, 0.0, quad)
    tau = s.tau(m.alpha)
    return base.with_boundary(boundary_factor(s.dx, tau, q), boundary_factor(s.dy, tau, q))


def envelope_killed_large_time(m, dom, s, q, lambda1, T=1.0) -> float:
    if s.t < T:
        raise DomainError(f"large-time envelope needs t >= T={T}")
    return float(np.exp(-lambda1 * s.t) * s.dx ** q * s.dy ** q)


def survival_envelope(m, dom, x, t, q) -> float:
    if not t > 0:
        raise DomainError("time must be positive")
    return boundary_factor(float(dom.delta(np.asarray(x, float))), t ** (1.0 / m.alpha), q)


def non_dominance_ratio(m, s):
    """t r^-alpha A_{Phi0,Phi0,1} / A_{Phi1,Phi2,ell}."""
    return s.t * s.r ** (-m.alpha) * A_cross(m, s) / A_main(m, s)


# batch API

TERM_COLUMNS = ("stable_factor", "A_term", "two_jump_term_x", "two_jump_term_y",
                "cross_term", "boundary_factor_x", "boundary_factor_y")


def envelope_rows(m, dom, triples, kind="conservative", quad=QuadratureSpec(), q=0.0):
    """Evaluate a list of triples; returns one dict per triple (CSV-ready)."""
    fn = {
        "conservative": lambda s: envelope_conservative(m, dom, s, 0.0, quad),
        "case_i": lambda s: envelope_case_i(m, dom, s),
        "case_ii": lambda s: envelope_case_ii(m, dom, s),
        "case_iii": lambda s: envelope_case_iii(m, dom, s, quad),
        "killed": lambda s: envelope_killed_small_time(m, dom, s, q, quad),
    }[kind]
    rows = []
    for s in triples:
        ev = fn(s)
        row = {"t": s.t, "x": s.x, "y": s.y, "delta_x": s.dx, "delta_y": s.dy, "r": s.r,
               "branch": ev.branch, "value": ev.value}
        for c in TERM_COLUMNS:
            row["term_" + c] = getattr(ev.terms, c)
        rows.append(row)
    return rows
