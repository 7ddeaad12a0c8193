"""One-dimensional quadrature used by the envelope and killing modules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000
    substitution: str = "LogU"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ConfigError("max_subdivisions must be positive")
        if self.substitution != "LogU":
            raise ConfigError(f"unsupported substitution {self.substitution!r}")

    @classmethod
    def from_spec(cls, spec: dict | None) -> "QuadratureSpec":
        spec = spec or {}
        return cls(float(spec.get("rel_tol", 1e-6)), float(spec.get("abs_tol", 1e-12)),
                   int(spec.get("max_subdivisions", 2000)),
                   str(spec.get("substitution", "LogU")))


def adaptive_simpson(f, a, b, seeds=(), rel_tol=1e-6, abs_tol=1e-12,
                     max_subdivisions=2000, initial_panels=4):
    """Integrate a vectorised f over [a, b] by adaptive Simpson.

    All active panels are refined together. ``seeds`` are interior points
    where f may have a kink; they become panel boundaries from the start so
    the Simpson error estimate never straddles them.
    """
    if b <= a:
        return 0.0
    cuts = np.unique(np.concatenate([[a, b], [s for s in np.ravel(seeds) if a < s < b]]))
    edges = np.concatenate([np.linspace(lo, hi, initial_panels + 1)[:-1]
                            for lo, hi in zip(cuts[:-1], cuts[1:])] + [[b]])
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    fv = f(np.concatenate([lo, mid, hi]))
    n = len(lo)
    flo, fmid, fhi = fv[:n], fv[n:2 * n], fv[2 * n:]
    coarse = (hi - lo) / 6.0 * (flo + 4 * fmid + fhi)

    total_accepted = 0.0
    n_panels = n
    width = b - a
    while len(lo) > 0:
        q1 = 0.5 * (lo + mid)
        q3 = 0.5 * (mid + hi)
        fq = f(np.concatenate([q1, q3]))
        m = len(lo)
        fq1, fq3 = fq[:m], fq[m:]
        left = (mid - lo) / 6.0 * (flo + 4 * fq1 + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4 * fq3 + fhi)
        fine = left + right
        err = np.abs(fine - coarse)
        estimate = abs(total_accepted + fine.sum())
        tol = max(abs_tol, rel_tol * estimate) * (hi - lo) / width
        ok = err <= 15.0 * tol
        total_accepted += float(np.sum(fine[ok] + (fine[ok] - coarse[ok]) / 15.0))
        bad = ~ok
        if not bad.any():
            break
        n_panels += int(bad.sum())
        if n_panels > max_subdivisions:
            raise NumericError("adaptive Simpson did not converge", {
                "interval": (a, b), "panels": n_panels,
                "worst_error": float(err.max()), "estimate": estimate,
                "worst_at": float(mid[np.argmax(err)]),
            })
        lo_b, mid_b, hi_b = lo[bad], mid[bad], hi[bad]
        lo = np.concatenate([lo_b, mid_b])
        hi = np.concatenate([mid_b, hi_b])
        mid = np.concatenate([q1[bad], q3[bad]])
        flo_n = np.concatenate([flo[bad], fmid[bad]])
        fhi_n = np.concatenate([fmid[bad], fhi[bad]])
        fmid = np.concatenate([fq1[bad], fq3[bad]])
        coarse = np.concatenate([left[bad], right[bad]])
        flo, fhi = flo_n, fhi_n
    return total_accepted


def composite_simpson(f, a, b, n=2000, breakpoints=()):
    """Fixed-order composite Simpson with n (even) panels per piece."""
    if b <= a:
        return 0.0
    if n % 2:
        n += 1
    cuts = np.unique(np.concatenate([[a, b], [s for s in np.ravel(breakpoints) if a < s < b]]))
    total = 0.0
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        x = np.linspace(lo, hi, n + 1)
        total += (hi - lo) / (3 * n) * float(np.dot(w, f(x)))
    return total


def gauss_panels(edges, order=20):
    """Nodes and weights of Gauss-Legendre rules on consecutive panels."""
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * x0 + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w0
    return x.ravel(), w.ravel()


def kink_points(funcs, a, b, n_grid=64, iters=60):
    """Points in (a, b) where any of the pairwise differences in ``funcs``
    change sign. ``funcs`` maps an array of abscissae to an (k, n) array;
    crossings are located by vectorised bisection."""
    v = np.linspace(a, b, n_grid)
    vals = funcs(v)
    s = np.sign(vals)
    cross_i, cross_j = np.nonzero(s[:, :-1] * s[:, 1:] < 0)
    if len(cross_i) == 0:
        return np.empty(0)
    lo = v[cross_j].copy()
    hi = v[cross_j + 1].copy()
    slo = s[cross_i, cross_j]
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        fm = funcs(m)[cross_i, np.arange(len(m))]
        same = np.sign(fm) == slo
        lo = np.where(same, m, lo)
        hi = np.where(same, hi, m)
        if np.all(hi - lo <= 1e-13 * (1 + np.abs(hi))):
            break
    return np.unique(0.5 * (lo + hi))
