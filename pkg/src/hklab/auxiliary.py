"""Numerical checks of the auxiliary integral bounds used by the envelope
estimates. Each check evaluates a left-hand side by quadrature over a
parameter lattice, fits the smallest constant C with LHS <= C * RHS, and
repeats on a refined lattice (denser parameters, finer quadrature) so the
drift of C can be judged.

All spatial integrals are on the unit disc, where delta_D(z) = 1 - |z|.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .quadrature import adaptive_simpson
from .scaling import ScalingFunction

C_CAP = 1e3


@dataclass(frozen=True)
class FittedConstant:
    name: str
    constant: float
    constant_refined: float
    n_points: int
    n_points_refined: int

    @property
    def drift(self):
        return abs(self.constant_refined / self.constant - 1.0)

    def passed(self, max_drift=0.2, cap=C_CAP):
        return bool(np.isfinite(self.constant_refined) and self.constant_refined <= cap
                    and self.drift < max_drift)


def _decades(lo, hi, per_decade):
    """lo * 10^(j/per_decade) up to hi, plus hi; nested when per_decade doubles."""
    j = np.arange(int(np.floor(np.log10(hi / lo) * per_decade + 1e-9)) + 1)
    pts = lo * 10.0 ** (j / per_decade)
    if pts[-1] < hi * (1 - 1e-12):
        pts = np.append(pts, hi)
    return pts


def _fit(name, fn, level_args):
    (c0, n0), (c1, n1) = (fn(*a) for a in level_args)
    return FittedConstant(name, c0, c1, n0, n1)


# monotone combinations  Phi(s) ell(s/k) <= C Phi(r) ell(r/k),  s <= a r <= 1

def monotone_combination_constant(phi, ell, a=1.0, per_octave=2, octaves=40, inverted=False):
    """max over the lattice of Phi(s) ell(s/k) / (Phi(r) ell(r/k)), s <= a r <= 1.

    ``inverted`` checks Phi(s) ell(k/s) <= C Phi(r) ell(k/r) instead.
    """
    if a < 1:
        raise DomainError("a must be at least 1")
    r = 2.0 ** (-np.arange(octaves * per_octave + 1) / per_octave) / a
    s = 2.0 ** (-np.arange(octaves * per_octave + 1) / per_octave)
    k = 2.0 ** (np.arange(-octaves * per_octave, octaves * per_octave + 1) / per_octave)
    S, R, K = np.meshgrid(s, r, k, indexing="ij")
    ok = S <= a * R
    arg_s = K / S if inverted else S / K
    arg_r = K / R if inverted else R / K
    num = phi.unchecked(S) * ell.unchecked(arg_s)
    den = phi.unchecked(R) * ell.unchecked(arg_r)
    ratio = np.where(ok, num / den, 0.0)
    return float(ratio.max()), int(ok.sum())


def check_monotone_combination(phi, ell, a=1.0, inverted=False):
    return _fit("monotone_combination" + ("_inverted" if inverted else ""),
                lambda ppo: monotone_combination_constant(phi, ell, a, ppo, inverted=inverted),
                [(2,), (4,)])


# time integral  int_0^t (1 ^ k/s^(1/a))^q Phi((k v s^(1/a))/r) ell(m/(k v s^(1/a))) ds

def time_integral_lhs(phi, ell, alpha, q, r, t, k, m, rel_tol=1e-8):
    ka = k ** alpha
    flat = min(ka, t) * float(phi.unchecked(k / r) * ell.unchecked(m / k))
    if ka >= t:
        return flat

    def f(v):
        s = np.exp(v)
        u = s ** (1.0 / alpha)
        return s * (k / u) ** q * phi.unchecked(u / r) * ell.unchecked(m / u)

    a, b = np.log(ka), np.log(t)
    seeds = [alpha * np.log(r), alpha * np.log(m)]
    return flat + adaptive_simpson(f, a, b, seeds, rel_tol, 1e-300, 200_000)


def time_integral_rhs(phi, ell, alpha, q, r, t, k, m):
    u = max(k, t ** (1.0 / alpha))
    return t * min(1.0, k / t ** (1.0 / alpha)) ** q * float(phi.unchecked(u / r) * ell.unchecked(m / u))


def time_integral_constant(phi, ell, alpha, q, per_decade=2, rel_tol=1e-6):
    rs = _decades(0.05, 2.0, per_decade)
    worst, n = 0.0, 0
    for r in rs:
        for t in r ** alpha * _decades(1e-4, 1.0, per_decade):
            tau = t ** (1.0 / alpha)
            for k in tau * _decades(1e-4, 1e2, per_decade):
                for m in _decades(1e-3, 1e3, per_decade):
                    lhs = time_integral_lhs(phi, ell, alpha, q, r, t, k, m, rel_tol)
                    worst = max(worst, lhs / time_integral_rhs(phi, ell, alpha, q, r, t, k, m))
                    n += 1
    return worst, n


def check_time_integral(phi, ell, alpha, q):
    if not q < alpha + phi.lower_index:
        raise DomainError("the bound needs q < alpha + beta")
    return _fit("time_integral", lambda ppd, tol: time_integral_constant(phi, ell, alpha, q, ppd, tol),
                [(2, 1e-6), (4, 1e-8)])


# integrals of delta^-eps on the disc

def _arc_half_angle(rho, a, r):
    """Half-angle of the circle |z| = rho inside B(x, r), |x| = a."""
    if a == 0:
        return np.where(rho < r, np.pi, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (rho * rho + a * a - r * r) / (2 * a * rho)
    return np.arccos(np.clip(c, -1.0, 1.0))


def disc_near_integral(a, r, eps, n=4000):
    """int_{|z|<1, |x-z|<r} (1-|z|)^-eps dz for |x| = a, by midpoint rule in
    w = (1-rho)^(1-eps) over the radii the ball B(x, r) can reach."""
    lo = max(0.0, a - r)
    hi = min(1.0, a + r)
    if hi <= lo:
        return 0.0
    e = 1.0 - eps
    w_hi, w_lo = (1.0 - lo) ** e, (1.0 - hi) ** e
    w = w_lo + (np.arange(n) + 0.5) * (w_hi - w_lo) / n
    rho = 1.0 - w ** (1.0 / e)
    arc = 2.0 * rho * _arc_half_angle(rho, a, r)
    return float(np.sum(arc) * (w_hi - w_lo) / n / e)


def near_integral_constant(eps, per_decade=3, n=4000):
    worst, count = 0.0, 0
    for dx in _decades(1e-4, 1.0, per_decade):
        a = 1.0 - dx
        # the ratio has kinks at r = delta(x) and where B(x, r) swallows D
        for r in np.union1d(_decades(1e-4, 2.0, per_decade), [dx, 2.0 - dx]):
            lhs = disc_near_integral(a, r, eps, n)
            rhs = max(dx, r) ** -eps * r ** 2
            worst = max(worst, lhs / rhs)
            count += 1
    return worst, count


def check_near_integral(eps):
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    return _fit(f"near_integral(eps={eps})", lambda ppd, n: near_integral_constant(eps, ppd, n),
                [(8, 2000), (16, 4000)])


def _exit_length(a, u):
    """Distance from x = (a, 0) along direction u to the unit circle."""
    b = a * u[:, 0]
    return -b + np.sqrt(b * b - (a * a - 1.0))


def disc_far_integral(a, r, eps, sigma, n_phi=256, n_rho=400):
    """int_{|z|<1, |x-z|>=r} (1-|z|)^-eps |x-z|^(-2-sigma) dz, polar around x.

    Each ray is split at the midpoint of [r, exit]: log-spaced midpoint rule
    on the inner part, w = (exit - rho)^(1-eps) on the outer part.
    """
    phi = (np.arange(n_phi) + 0.5) * 2 * np.pi / n_phi
    u = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    L = _exit_length(a, u)
    total = np.zeros(n_phi)
    live = L > r
    if not live.any():
        return 0.0
    u, L = u[live], L[live]
    mid = 0.5 * (r + L)
    e = 1.0 - eps

    b = a * u[:, 0]
    other = (-b - np.sqrt(b * b - (a * a - 1.0)))[:, None]   # second root, <= 0

    def g(rho, gap):
        # 1 - |z|^2 = (L - rho)(rho - other); gap = L - rho avoids cancellation
        nz = np.sqrt(np.maximum(a * a + 2 * b[:, None] * rho + rho * rho, 0.0))
        dz = gap * (rho - other) / (1.0 + nz)
        return dz ** -eps * rho ** (-1.0 - sigma)          # rho d rho / rho^(2+sigma)

    j = (np.arange(n_rho) + 0.5) / n_rho
    lr = np.log(r) + j[None, :] * np.log(mid / r)[:, None]
    rho_in = np.exp(lr)
    inner = np.sum(g(rho_in, L[:, None] - rho_in) * rho_in, axis=1) * np.log(mid / r) / n_rho
    wmax = (L - mid) ** e
    w = j[None, :] * wmax[:, None]
    gap = w ** (1.0 / e)
    rho_out = L[:, None] - gap
    # d rho = w^(1/e - 1)/e dw
    jac = w ** (1.0 / e - 1.0) / e
    outer = np.sum(g(rho_out, gap) * jac, axis=1) * wmax / n_rho
    total[live] = inner + outer
    return float(np.sum(total) * 2 * np.pi / n_phi)


def far_integral_constant(eps, sigma, per_decade=2, n_phi=128, n_rho=200):
    worst, count = 0.0, 0
    for dx in _decades(1e-3, 1.0, per_decade):
        a = 1.0 - dx
        for r in _decades(1e-3, 1.0, per_decade):
            lhs = disc_far_integral(a, r, eps, sigma, n_phi, n_rho)
            rhs = max(dx, r) ** -eps * r ** -sigma
            worst = max(worst, lhs / rhs)
            count += 1
    return worst, count


def check_far_integral(eps, sigma=0.5):
    if not 0 < eps < 1 or not sigma > 0:
        raise DomainError("need eps in (0, 1) and sigma > 0")
    return _fit(f"far_integral(eps={eps})",
                lambda ppd, nf, nr: far_integral_constant(eps, sigma, ppd, nf, nr),
                [(2, 128, 200), (4, 256, 400)])


# single-parameter bound  int_B K_t(x,z) Phi(d(x,t)/|x-z|) Psi(d(z)/r) ell(d(z)/k) dz

def ball_lhs(phi, psi, ell, alpha, a, r, t, ks, n_phi=64, n_rho=200):
    """Left side over B(x, r) cut by the unit disc, for every k in ``ks``."""
    d = 2
    dx = 1.0 - a
    tau = t ** (1.0 / alpha)
    dxt = max(dx, tau)
    phis = (np.arange(n_phi) + 0.5) * 2 * np.pi / n_phi
    u = np.stack([np.cos(phis), np.sin(phis)], axis=1)
    top = np.minimum(r, _exit_length(a, u))
    lo = 1e-4 * min(tau, dx)
    j = (np.arange(n_rho) + 0.5) / n_rho
    span = np.log(top / lo)
    rho = lo * np.exp(j[None, :] * span[:, None])
    z = np.array([a, 0.0])[None, None, :] + rho[:, :, None] * u[:, None, :]
    dz = np.maximum(1.0 - np.linalg.norm(z, axis=2), 0.0)
    kern = np.minimum(tau ** -d, t * rho ** (-d - alpha))
    base = kern * phi.unchecked(dxt / rho) * psi.unchecked(dz / r) * rho * rho
    wts = (span / n_rho)[:, None] * (2 * np.pi / n_phi)
    core = np.pi * lo * lo * tau ** -d * float(psi.unchecked(dx / r))
    out = []
    for k in ks:
        with np.errstate(divide="ignore"):
            vals = base * ell.unchecked(np.maximum(dz, 1e-300) / k)
        out.append(float(np.sum(vals * wts)) + core * float(ell.unchecked(dx / k)))
    return np.array(out)


def ball_bound_constant(phi, psi, ell, alpha, per_decade=2, n_phi=64, n_rho=200):
    worst, count = 0.0, 0
    for r in _decades(0.05, 0.4, per_decade):
        for dfrac in _decades(1e-3, 4.0, per_decade):
            dx = dfrac * r
            if dx >= 1.0:
                continue
            a = 1.0 - dx
            for t in r ** alpha * _decades(1e-4, 1.0, per_decade):
                ks = _decades(1e-3, 10.0, per_decade)
                lhs = ball_lhs(phi, psi, ell, alpha, a, r, t, ks, n_phi, n_rho)
                dxt = max(dx, t ** (1.0 / alpha))
                rhs = float(psi.unchecked(dxt / r)) * ell.unchecked(dxt / ks)
                worst = max(worst, float(np.max(lhs / rhs)))
                count += len(ks)
    return worst, count


def check_ball_bound(phi, psi, ell, alpha):
    if not psi.upper_index < alpha + phi.lower_index:
        raise DomainError("the bound needs gamma* < alpha + beta")
    return _fit("ball_bound",
                lambda ppd, nf, nr: ball_bound_constant(phi, psi, ell, alpha, ppd, nf, nr),
                [(2, 64, 200), (4, 128, 400)])


def default_suite():
    """The parameter sets used by the test-suite and the acceptance run."""
    phi = ScalingFunction.power_log(0.4)
    psi = ScalingFunction.power_log(0.8)
    ell_grow = ScalingFunction.power_log(0.0, -0.5)   # slowly varying, grows as r -> 0
    ell_decay = ScalingFunction.power_log(0.0, 0.5)
    return {
        "monotone": check_monotone_combination(phi, ell_grow, a=2.0),
        "monotone_inverted": check_monotone_combination(phi, ell_decay, a=2.0, inverted=True),
        "time_integral": check_time_integral(phi, ell_grow, 1.5, 1.0),
        **{f"near_{e}": check_near_integral(e) for e in (0.25, 0.5, 0.75)},
        **{f"far_{e}": check_far_integral(e) for e in (0.25, 0.5, 0.75)},
        "ball_bound": check_ball_bound(phi, psi, ell_grow, 1.0),
    }
