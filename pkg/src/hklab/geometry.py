"""Bounded analytic domains (ball, box): distance to the boundary, boundary
projection, inward lift direction and the lifting constants eta1, eta2, eps1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, RangeError

log = logging.getLogger(__name__)

SWEEP_SAMPLES = 100_000


@dataclass(frozen=True)
class Domain:
    """Ball(center, radius) or Box(lo, hi) in R^d, d >= 2.

    Use :func:`ball` / :func:`box`; they validate the lifting constants.
    """

    shape: str
    dim: int
    center: tuple = ()
    radius: float = 0.0
    lo: tuple = ()
    hi: tuple = ()
    eta1: float = field(default=0.0)
    eta2: float = field(default=1.0 / 3.0)

    # basic geometry

    @property
    def diam(self):
        if self.shape == "ball":
            return 2.0 * self.radius
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def eps1(self):
        return min(0.25, self.eta1 / self.diam)

    @property
    def volume(self):
        from math import gamma, pi
        if self.shape == "ball":
            d = self.dim
            return pi ** (d / 2) / gamma(d / 2 + 1) * self.radius ** d
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def bounding_box(self):
        if self.shape == "ball":
            c = np.asarray(self.center)
            return c - self.radius, c + self.radius
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def signed_distance(self, x):
        """Positive inside, negative outside. Vectorised over leading axes."""
        x = np.asarray(x, dtype=float)
        if self.shape == "ball":
            return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        inner = np.minimum(x - lo, hi - x)
        sd_in = inner.min(axis=-1)
        outside = np.linalg.norm(np.maximum(-inner, 0.0), axis=-1)
        return np.where(sd_in >= 0, sd_in, -outside)

    def delta(self, x):
        """delta_D(x); clamped to 0 outside D (see :meth:`dist_to_boundary`)."""
        return np.maximum(self.signed_distance(x), 0.0)

    def contains(self, x):
        return self.signed_distance(x) > 0

    def to_spec(self) -> dict:
        if self.shape == "ball":
            return {"shape": "ball", "center": list(self.center), "radius": self.radius}
        return {"shape": "box", "min": list(self.lo), "max": list(self.hi)}

    # boundary data

    def boundary_data(self, x):
        """Nearest boundary point Q_x and n_x = (x - Q_x)/|x - Q_x|."""
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise DomainError(f"point {x} is not inside the domain")
        if self.shape == "ball":
            c = np.asarray(self.center)
            v = x - c
            big = np.abs(v).max()
            if big == 0.0:
                e = np.zeros(self.dim)
                e[0] = 1.0
            else:
                # rescale first: |v|^2 underflows for tiny offsets
                e = v / big
                e /= np.linalg.norm(e)
            q = c + self.radius * e
            return q, -e
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        best = None
        for i in range(self.dim):
            for side, val in ((0, lo[i]), (1, hi[i])):
                d = x[i] - val if side == 0 else val - x[i]
                q = x.copy()
                q[i] = val
                key = (d, tuple(q))
                if best is None or key < best[0]:
                    best = (key, q, i, side)
        (_, q, i, side) = best
        n = np.zeros(self.dim)
        n[i] = 1.0 if side == 0 else -1.0
        return q, n

    def lift_direction(self, x):
        """Unit vector along which x is lifted into D.

        Ball: the inward normal n_x. Box: the normalised sum of inward face
        normals over all faces within eta1 of x (a single face normal away
        from corners). Near a corner the single nearest-face normal can run
        into the adjacent face, so the diagonal is used there.
        """
        x = np.asarray(x, dtype=float)
        if self.shape == "ball":
            return self.boundary_data(x)[1]
        if not self.contains(x):
            raise DomainError(f"point {x} is not inside the domain")
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        n = np.zeros(self.dim)
        for i in range(self.dim):
            dl, dh = x[i] - lo[i], hi[i] - x[i]
            if min(dl, dh) <= self.eta1:
                n[i] = 1.0 if dl <= dh else -1.0
        if not n.any():
            return self.boundary_data(x)[1]
        return n / np.linalg.norm(n)

    def lift_directions(self, x):
        """Vectorised :meth:`lift_direction` for an (n, d) array of interior points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.shape == "ball":
            v = x - np.asarray(self.center)
            big = np.abs(v).max(axis=1, keepdims=True)
            v = v / np.where(big > 0, big, 1.0)
            nv = np.linalg.norm(v, axis=1, keepdims=True)
            e0 = np.zeros_like(v)
            e0[:, 0] = 1.0
            e = np.where(nv > 0, v / np.where(nv > 0, nv, 1.0), e0)
            return -e
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        dl, dh = x - lo, hi - x
        sgn = np.where(dl <= dh, 1.0, -1.0)
        near = np.minimum(dl, dh) <= self.eta1
        n = np.where(near, sgn, 0.0)
        empty = ~near.any(axis=1)
        if empty.any():
            n[empty] = np.array([self.lift_direction(p) for p in x[empty]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def lift_point(self, x, u):
        """x + u * n (u may be an array of lift lengths)."""
        u_arr = np.asarray(u, dtype=float)
        if np.any(u_arr <= 0) or np.any(u_arr > self.eta1 * (1 + 1e-12)):
            raise RangeError(f"lift length must lie in (0, eta1={self.eta1}]")
        x = np.asarray(x, dtype=float)
        n = self.lift_direction(x)
        return x + u_arr[..., None] * n


def dist_to_boundary(dom: Domain, x):
    """delta_D(x), and a flag telling whether x was outside (clamped to 0)."""
    sd = dom.signed_distance(x)
    outside = sd < 0
    if np.any(outside):
        log.debug("dist_to_boundary: %d point(s) outside the domain", int(np.sum(outside)))
    d = np.maximum(sd, 0.0)
    return (float(d), bool(outside)) if np.ndim(d) == 0 else (d, outside)


def boundary_data(dom: Domain, x):
    return dom.boundary_data(x)


def lift_point(dom: Domain, x, u):
    return dom.lift_point(x, u)


def domain_constants(dom: Domain):
    return dom.eta1, dom.eta2, dom.eps1, dom.diam


def random_points(dom: Domain, n, rng):
    """Uniform samples inside D by rejection from the bounding box."""
    lo, hi = dom.bounding_box()
    out = np.empty((0, dom.dim))
    while len(out) < n:
        p = rng.uniform(lo, hi, size=(2 * n, dom.dim))
        out = np.vstack([out, p[dom.signed_distance(p) > 0]])
    return out[:n]


def inradius(dom: Domain):
    if dom.shape == "ball":
        return dom.radius
    return 0.5 * min(b - a for a, b in zip(dom.lo, dom.hi))


def points_at_depth(dom: Domain, depths, rng):
    """One random point with delta_D = depth for each entry of ``depths``."""
    depths = np.asarray(depths, dtype=float)
    n, d = len(depths), dom.dim
    if np.any(depths <= 0) or np.any(depths >= inradius(dom)):
        raise DomainError("depths must lie in (0, inradius)")
    if dom.shape == "ball":
        v = rng.normal(size=(n, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.asarray(dom.center) + (dom.radius - depths)[:, None] * v
    lo, hi = np.asarray(dom.lo), np.asarray(dom.hi)
    p = rng.uniform(lo + depths[:, None], hi - depths[:, None])
    axis = rng.integers(0, d, size=n)
    upper = rng.uniform(size=n) < 0.5
    rows = np.arange(n)
    p[rows, axis] = np.where(upper, hi[axis] - depths, lo[axis] + depths)
    return p


def lifting_violation(dom: Domain, n_samples=SWEEP_SAMPLES, seed=0):
    """Worst violation of eta2 (delta + u) <= delta(x + u n) <= delta + u over a
    random sweep; nonpositive means the property held everywhere."""
    rng = np.random.default_rng(seed)
    x = random_points(dom, n_samples, rng)
    # bias half the samples towards the boundary and corners
    half = n_samples // 2
    x[:half] = _boundary_biased(dom, half, rng)
    u = dom.eta1 * rng.uniform(0, 1, size=n_samples) ** 2
    u = np.maximum(u, 1e-12)
    dirs = dom.lift_directions(x)
    dx = dom.delta(x)
    dl = dom.delta(x + u[:, None] * dirs)
    lower = dom.eta2 * (dx + u) - dl
    upper = dl - (dx + u)
    return float(max(lower.max(), upper.max() - 1e-12 * (1 + dx.max())))


def _boundary_biased(dom, n, rng):
    lo, hi = dom.bounding_box()
    if dom.shape == "ball":
        v = rng.normal(size=(n, dom.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        depth = dom.radius * 10.0 ** rng.uniform(-6, 0, size=n)
        return np.asarray(dom.center) + (dom.radius - depth)[:, None] * v
    p = rng.uniform(lo, hi, size=(n, dom.dim))
    # push some coordinates towards faces, geometric depth
    push = rng.uniform(size=(n, dom.dim)) < 0.5
    side = rng.uniform(size=(n, dom.dim)) < 0.5
    depth = (hi - lo) * 10.0 ** rng.uniform(-6, -0.5, size=(n, dom.dim))
    p = np.where(push & side, lo + depth, p)
    p = np.where(push & ~side, hi - depth, p)
    return p


def ball(center=(0.0, 0.0), radius=1.0, validate=True) -> Domain:
    c = tuple(float(v) for v in center)
    if len(c) < 2:
        raise ConfigError("domains need dimension >= 2")
    if not radius > 0:
        raise ConfigError("radius must be positive")
    dom = Domain("ball", len(c), center=c, radius=float(radius),
                 eta1=0.5 * float(radius), eta2=1.0 / 3.0)
    if validate:
        _validate(dom)
    return dom


def box(lo=(0.0, 0.0), hi=(1.0, 1.0), validate=True) -> Domain:
    lo_t = tuple(float(v) for v in lo)
    hi_t = tuple(float(v) for v in hi)
    if len(lo_t) != len(hi_t) or len(lo_t) < 2:
        raise ConfigError("box corners must share a dimension >= 2")
    if any(b <= a for a, b in zip(lo_t, hi_t)):
        raise ConfigError("box needs lo < hi in every coordinate")
    shortest = min(b - a for a, b in zip(lo_t, hi_t))
    dom = Domain("box", len(lo_t), lo=lo_t, hi=hi_t, eta1=0.25 * shortest, eta2=1.0 / 3.0)
    if validate:
        _validate(dom)
    return dom


_VALIDATED: dict = {}


def _validate(dom: Domain):
    key = dom.to_spec().__repr__()
    if key in _VALIDATED:
        return
    viol = lifting_violation(dom)
    if viol > 0:
        raise ConfigError(f"lifting property failed validation (violation {viol:.3g})")
    _VALIDATED[key] = viol


def from_spec(spec: dict) -> Domain:
    shape = str(spec.get("shape", "")).lower()
    try:
        if shape == "ball":
            return ball(spec.get("center", (0.0, 0.0)), spec.get("radius", 1.0))
        if shape == "box":
            return box(spec["min"], spec["max"])
    except KeyError as exc:
        raise ConfigError(f"domain spec missing {exc}") from None
    raise ConfigError(f"unknown domain shape {shape!r}")
