"""Lattice surrogate of the jump process: a continuous-time Markov chain on
cell-centred nodes inside D with rates R(i, j) = J(x_i, x_j) h^d.

Transition probabilities are computed exactly (up to a Poisson tail) by
uniformization, e^{tQ} = sum_k Pois(k; Lambda t) Phat^k, Phat = I + Q/Lambda.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.stats import poisson

from .errors import ConfigError, DomainError, NumericError
from .geometry import Domain
from .kernel import B_from_parts, KernelModel, kappa_from_delta

log = logging.getLogger(__name__)

CONSERVATIVE = "Conservative"
KILLED = "Killed"
MAX_NODES = 60_000
MIN_NODES = 100
MAX_LAMBDA_T = 1e5
ROW_BLOCK = 512


# rate operators

class DenseRates:
    """Explicit symmetric rate table (zero diagonal)."""

    kind = "dense"

    def __init__(self, R):
        self.R = R

    def apply(self, V):
        return self.R @ V

    def dense(self):
        return self.R


class ConvolutionRates:
    """Rates |x_i - x_j|^(-d-alpha) h^d of a translation-invariant kernel,
    applied by zero-padded FFT convolution on the lattice."""

    kind = "convolution"

    def __init__(self, shape, index, kernel_hat, fft_shape):
        self.shape = tuple(shape)
        self.index = index              # tuple of integer arrays, one per axis
        self.kernel_hat = kernel_hat
        self.fft_shape = tuple(fft_shape)

    @classmethod
    def build(cls, shape, index, alpha, h):
        d = len(shape)
        fft_shape = [sfft.next_fast_len(2 * n, real=True) for n in shape]
        axes = [np.fft.fftfreq(L, 1.0 / L) for L in fft_shape]   # signed offsets
        grids = np.meshgrid(*axes, indexing="ij")
        rr = np.sqrt(sum(g * g for g in grids)) * h
        with np.errstate(divide="ignore"):
            K = np.where(rr > 0, rr ** (-d - alpha) * h ** d, 0.0)
        # offsets beyond the grid never connect two nodes; zero them so the
        # circular convolution cannot wrap
        for ax, (n, L) in enumerate(zip(shape, fft_shape)):
            off = np.abs(axes[ax])
            sl = [None] * d
            sl[ax] = slice(None)
            K = K * (off < n)[tuple(sl)]
        return cls(shape, index, sfft.rfftn(K), fft_shape)

    def scatter(self, V):
        k = V.shape[1]
        G = np.zeros((k,) + self.shape)
        G[(slice(None),) + self.index] = V.T
        return G

    def apply(self, V):
        V = np.asarray(V, dtype=float)
        one = V.ndim == 1
        if one:
            V = V[:, None]
        d = len(self.shape)
        axes = tuple(range(1, d + 1))
        Gh = sfft.rfftn(self.scatter(V), s=self.fft_shape, axes=axes)
        conv = sfft.irfftn(Gh * self.kernel_hat, s=self.fft_shape, axes=axes)
        out = conv[(slice(None),) + self.index].T
        return out[:, 0] if one else out

    def apply_grid(self, G):
        """Convolve full-lattice fields (k, *shape) and return full fields."""
        d = len(self.shape)
        axes = tuple(range(1, d + 1))
        conv = sfft.irfftn(sfft.rfftn(G, s=self.fft_shape, axes=axes) * self.kernel_hat,
                           s=self.fft_shape, axes=axes)
        return conv[(slice(None),) + tuple(slice(0, n) for n in self.shape)]

    def dense(self):
        n = len(self.index[0])
        return self.apply(np.eye(n))


@dataclass
class GeneratorGrid:
    h: float
    dim: int
    mode: str
    nodes: np.ndarray            # (n, d) states of the chain
    delta: np.ndarray            # delta_D at the nodes
    kill: np.ndarray
    total_rate: np.ndarray
    Lambda: float
    rates: object = field(repr=False)
    n_absorbing: int = 0         # boundary-layer nodes turned into a cemetery
    layer_depth: float = 0.0

    @property
    def n(self):
        return len(self.nodes)

    @property
    def density_scale(self):
        return self.h ** (-self.dim)

    def rate_table(self):
        """Dense R (materialised on demand for convolution grids)."""
        return self.rates.dense()

    def apply_phat(self, V):
        V = np.asarray(V, dtype=float)
        diag = 1.0 - self.total_rate / self.Lambda
        RV = self.rates.apply(V)
        if V.ndim == 1:
            return diag * V + RV / self.Lambda
        return diag[:, None] * V + RV / self.Lambda

    def apply_Q(self, V):
        V = np.asarray(V, dtype=float)
        RV = self.rates.apply(V)
        if V.ndim == 1:
            return RV - self.total_rate * V
        return RV - self.total_rate[:, None] * V

    def nearest_node(self, x):
        d2 = np.sum((self.nodes - np.asarray(x, float)) ** 2, axis=1)
        return int(np.argmin(d2))


def lattice_nodes(dom: Domain, h):
    """Cell centres (Z + 1/2) h inside D, with their lattice indices."""
    lo, hi = dom.bounding_box()
    shape = [int(np.ceil((b - a) / h - 1e-9)) for a, b in zip(lo, hi)]
    axes = [a + (np.arange(n) + 0.5) * h for a, n in zip(lo, shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    idx = np.stack([g.ravel() for g in np.meshgrid(*[np.arange(n) for n in shape],
                                                   indexing="ij")], axis=1)
    inside = dom.signed_distance(pts) > 0
    return pts[inside], idx[inside], shape


def build_generator(m: KernelModel, dom: Domain, h: float, mode: str = CONSERVATIVE,
                    backend: str = "auto", layer: Optional[float] = None,
                    max_nodes: int = MAX_NODES) -> GeneratorGrid:
    """Build the lattice chain.

    In Killed mode with alpha > 1 the boundary cells (cells of side h that
    are not contained in D) are absorbing: jumps into them kill the chain.
    This is the lattice version of killing on approach to the boundary.
    A numeric ``layer`` replaces them by the nodes with delta_D < layer*h.
    For alpha <= 1 only the potential kappa kills.
    """
    if mode not in (CONSERVATIVE, KILLED):
        raise ConfigError(f"unknown solver mode {mode!r}")
    if not h > 0:
        raise ConfigError("h must be positive")
    if mode == KILLED:
        if dom.shape != "ball":
            raise ConfigError("the killed chain is only supported on balls")
        m.check_killable()
    pts, idx, shape = lattice_nodes(dom, h)
    delta = dom.delta(pts)
    if mode == KILLED and m.alpha > 1:
        live = interior_cells(dom, pts, h) if layer is None else delta >= layer * h
    else:
        live = np.ones(len(pts), dtype=bool)
    n = int(live.sum())
    if n < MIN_NODES:
        raise ConfigError(f"only {n} nodes inside D; need at least {MIN_NODES}")
    if n > max_nodes:
        raise ConfigError(f"{n} nodes exceed the cap of {max_nodes}")
    d = dom.dim
    if backend == "auto":
        backend = "convolution" if m.triple.is_trivial else "dense"
    if backend == "convolution" and not m.triple.is_trivial:
        raise ConfigError("convolution backend needs B = 1")

    dead = ~live
    if backend == "convolution":
        index = tuple(idx[live].T)
        op = ConvolutionRates.build(shape, index, m.alpha, h)
        fields = np.zeros((2,) + tuple(shape))
        fields[(0,) + tuple(idx[live].T)] = 1.0
        if dead.any():
            fields[(1,) + tuple(idx[dead].T)] = 1.0
        conv = op.apply_grid(fields)
        row_live = conv[(0,) + index]
        to_dead = conv[(1,) + index] if dead.any() else np.zeros(n)
        rates = op
    else:
        R = np.empty((n, n))
        to_dead = np.zeros(n)
        p_live, d_live = pts[live], delta[live]
        p_dead, d_dead = pts[dead], delta[dead]
        for i0 in range(0, n, ROW_BLOCK):
            i1 = min(i0 + ROW_BLOCK, n)
            R[i0:i1] = _rate_block(m, p_live[i0:i1], d_live[i0:i1], p_live, d_live, h)
            if dead.any():
                to_dead[i0:i1] = _rate_block(m, p_live[i0:i1], d_live[i0:i1],
                                             p_dead, d_dead, h).sum(axis=1)
        row_live = R.sum(axis=1)
        rates = DenseRates(R)

    kill = np.zeros(n)
    if mode == KILLED:
        kill = kappa_from_delta(m, delta[live]) + to_dead
    total = row_live + kill
    depth = float(delta[dead].max()) if dead.any() else 0.0
    grid = GeneratorGrid(float(h), d, mode, pts[live], delta[live], kill, total,
                         float(total.max()), rates, int(dead.sum()), depth)
    log.info("built %s grid: %d nodes (%d absorbing), Lambda=%.4g, backend=%s",
             mode, n, grid.n_absorbing, grid.Lambda, backend)
    return grid


def interior_cells(dom: Domain, pts, h):
    """Nodes whose whole cell lies in D (exact for convex D: check corners)."""
    d = pts.shape[1]
    corners = np.array(list(itertools.product((-0.5, 0.5), repeat=d))) * h
    return np.all([dom.signed_distance(pts + c) > 0 for c in corners], axis=0)


def _rate_block(m, pa, da, pb, db, h):
    diff = pa[:, None, :] - pb[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    d = pa.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        B = B_from_parts(m, da[:, None], db[None, :], r)
        out = B * r ** (-d - m.alpha) * h ** d
    out[r == 0] = 0.0
    return out


# uniformization

@dataclass
class HeatKernelColumn:
    t: float
    source: int
    values: np.ndarray
    density_scale: float

    @property
    def density(self):
        return self.values * self.density_scale


def poisson_cutoff(mu, tol):
    """Smallest K with P(N > K) < tol for N ~ Poisson(mu)."""
    if mu == 0:
        return 0
    k = int(poisson.isf(tol, mu))
    while poisson.sf(k, mu) >= tol:
        k += 1
    return k


def propagate(g: GeneratorGrid, V0, times, tol=1e-10, extra_terms=0):
    """e^{tQ} V0 for each t in ``times`` (sharing the powers of Phat).

    Returns an array (len(times), *V0.shape).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times <= 0):
        raise DomainError("times must be positive")
    mus = g.Lambda * times
    if mus.max() > MAX_LAMBDA_T:
        raise NumericError("Lambda * t exceeds the uniformization guard",
                           {"Lambda": g.Lambda, "t": float(times.max()), "limit": MAX_LAMBDA_T})
    K = max(poisson_cutoff(mu, tol) for mu in mus) + int(extra_terms)
    ks = np.arange(K + 1)
    W = np.stack([poisson.pmf(ks, mu) for mu in mus])       # (T, K+1)
    V = np.array(V0, dtype=float)
    out = np.zeros((len(times),) + V.shape)
    for k in range(K + 1):
        if k:
            V = g.apply_phat(V)
        w = W[:, k]
        live = w > 0
        if live.any():
            out[live] += w[live].reshape((-1,) + (1,) * V.ndim) * V
    return out


def heat_kernel_column(g: GeneratorGrid, j: int, t: float, tol: float = 1e-10) -> HeatKernelColumn:
    if not 0 <= j < g.n:
        raise DomainError("node index out of range")
    e = np.zeros(g.n)
    e[j] = 1.0
    vals = propagate(g, e, [t], tol)[0]
    return HeatKernelColumn(float(t), int(j), np.maximum(vals, 0.0), g.density_scale)


def heat_kernel_columns(g: GeneratorGrid, sources, times, tol=1e-10):
    """Masses for several sources and times: array (len(times), n, len(sources))."""
    sources = np.asarray(sources, dtype=int)
    E = np.zeros((g.n, len(sources)))
    E[sources, np.arange(len(sources))] = 1.0
    return np.maximum(propagate(g, E, times, tol), 0.0)


def survival_vector(g: GeneratorGrid, t: float, tol: float = 1e-10):
    if g.mode != KILLED:
        raise DomainError("survival probabilities need a killed grid")
    return np.clip(propagate(g, np.ones(g.n), [t], tol)[0], 0.0, 1.0)


def principal_eigenpair(g: GeneratorGrid, tol=1e-8, max_iter=100_000):
    """(lambda1, phi1) of the killed generator by power iteration on Phat.

    Stops when the extrapolated error of the Rayleigh quotient (geometric
    tail of successive differences) is below tol * lambda1.
    """
    if g.mode != KILLED or not np.any(g.kill > 0):
        raise DomainError("principal eigenpair needs a killed grid with some killing")
    v = np.ones(g.n) / np.sqrt(g.n)
    nu_prev = None
    diff_prev = None
    for it in range(1, max_iter + 1):
        w = g.apply_phat(v)
        nu = float(v @ w)
        v = w / np.linalg.norm(w)
        if nu_prev is not None:
            diff = abs(nu - nu_prev)
            lam = g.Lambda * (1.0 - nu)
            if diff_prev and diff_prev > 0 and diff < diff_prev and it > 10:
                rho = diff / diff_prev
                err = diff * rho / (1.0 - rho)
                if g.Lambda * err <= tol * abs(lam):
                    break
            if diff == 0.0 and it > 10:
                break
            diff_prev = diff
        nu_prev = nu
    else:
        raise NumericError("power iteration did not converge",
                           {"iterations": max_iter, "nu": nu_prev})
    nu = float(v @ g.apply_phat(v))
    lam = g.Lambda * (1.0 - nu)
    phi = v / np.max(np.abs(v))
    if np.any(phi <= 0):
        raise NumericError("principal eigenvector is not strictly positive",
                           {"min": float(phi.min())})
    return lam, phi


# binary cache

CACHE_MAGIC = b"HKLG"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIIdQ")   # magic, version, d, h, n


def grid_key(m: KernelModel, dom: Domain, h, mode, layer=None):
    blob = json.dumps({"model": m.to_spec(), "domain": dom.to_spec(), "h": float(h),
                       "mode": mode, "layer": layer}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def save_grid(g: GeneratorGrid, path):
    """Header {magic, version, d, h, n}, then node coordinates, the row-major
    rate table and the kill vector, all little-endian float64. The mode and
    layer depth follow as a short JSON trailer."""
    path = Path(path)
    R = g.rate_table()
    trailer = json.dumps({"mode": g.mode, "n_absorbing": g.n_absorbing,
                          "layer_depth": g.layer_depth}).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, g.dim, g.h, g.n))
        fh.write(np.ascontiguousarray(g.nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(R, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(g.kill, dtype="<f8").tobytes())
        fh.write(trailer)


def load_grid(path, dom: Optional[Domain] = None) -> GeneratorGrid:
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, d, h, n = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != CACHE_MAGIC or version != CACHE_VERSION:
            raise ConfigError(f"{path} is not a grid cache file of version {CACHE_VERSION}")
        nodes = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d).copy()
        R = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
        kill = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        meta = json.loads(fh.read().decode() or "{}")
    delta = dom.delta(nodes) if dom is not None else np.full(n, np.nan)
    total = R.sum(axis=1) + kill
    return GeneratorGrid(h, d, meta.get("mode", CONSERVATIVE), nodes, delta, kill, total,
                         float(total.max()), DenseRates(R), int(meta.get("n_absorbing", 0)),
                         float(meta.get("layer_depth", 0.0)))


def cached_generator(m, dom, h, mode=CONSERVATIVE, cache_dir=None, layer=None, **kw):
    """build_generator with an on-disk cache for dense grids."""
    if cache_dir is None:
        return build_generator(m, dom, h, mode, layer=layer, **kw)
    cache_dir = Path(cache_dir)
    path = cache_dir / f"grid-{grid_key(m, dom, h, mode, layer)}.bin"
    if path.exists():
        log.info("loading cached grid %s", path.name)
        return load_grid(path, dom)
    g = build_generator(m, dom, h, mode, layer=layer, **kw)
    if g.rates.kind == "dense":
        cache_dir.mkdir(parents=True, exist_ok=True)
        save_grid(g, path)
    return g
