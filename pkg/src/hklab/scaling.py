"""Scaling functions with declared Matuszewska indices at zero.

Every function here is positive on (0, inf) and equal to 1 on [1, inf).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError

_LOG_E1 = np.log(np.e + 1.0)

FAMILIES = ("powerlog", "constant", "table", "product")


def _check_positive(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("scaling functions are defined for r > 0 only")
    return r


def _log_ratio(r):
    # log(e + 1/r) / log(e + 1), with r already clipped to (0, 1]
    return np.log(np.e + 1.0 / r) / _LOG_E1


@dataclass(frozen=True)
class ScalingFunction:
    """Positive function on (0, inf), identically 1 on [1, inf).

    Build with :meth:`power_log`, :meth:`constant` or :meth:`table`
    rather than calling the constructor directly.
    """

    family: str
    lower_index: float
    upper_index: float
    almost_increasing: bool
    beta: float = 0.0
    gamma: float = 0.0
    table_r: tuple = ()
    table_v: tuple = ()
    factors: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown scaling family {self.family!r}")
        if self.lower_index > self.upper_index:
            raise ConfigError("lower_index must not exceed upper_index")
        if self.family == "powerlog" and self.beta < 0:
            raise ConfigError("PowerLog needs beta >= 0")

    # constructors

    @classmethod
    def power_log(cls, beta, gamma=0.0, lower=None, upper=None):
        """(r^1)^beta * (log(e+1/(r^1)) / log(e+1))^(-gamma).

        Both true indices equal ``beta``; ``lower``/``upper`` override the
        declaration (useful for auditing deliberately wrong declarations).
        """
        beta, gamma = float(beta), float(gamma)
        lo = beta if lower is None else float(lower)
        up = beta if upper is None else float(upper)
        inc = beta > 0 or gamma >= 0
        return cls("powerlog", lo, up, inc, beta=beta, gamma=gamma)

    @classmethod
    def constant(cls):
        return cls("constant", 0.0, 0.0, True)

    @classmethod
    def table(cls, r, values, lower, upper, almost_increasing=True):
        """Log-log interpolated table, clamped to the end values outside it."""
        r = np.asarray(r, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise ConfigError("table needs two equal-length 1-d arrays")
        if np.any(r <= 0) or np.any(v <= 0):
            raise ConfigError("table entries must be positive")
        order = np.argsort(r)
        r, v = r[order], v[order]
        if np.any(np.diff(r) <= 0):
            raise ConfigError("table abscissae must be distinct")
        return cls("table", float(lower), float(upper), bool(almost_increasing),
                   table_r=tuple(r), table_v=tuple(v))

    @classmethod
    def from_spec(cls, spec: dict) -> "ScalingFunction":
        """Build from a config mapping {family, beta, gamma, lower_index, ...}."""
        fam = str(spec.get("family", "powerlog")).lower()
        if fam == "powerlog":
            return cls.power_log(spec.get("beta", 0.0), spec.get("gamma", 0.0),
                                 spec.get("lower_index"), spec.get("upper_index"))
        if fam == "constant":
            return cls.constant()
        if fam == "table":
            try:
                return cls.table(spec["r"], spec["values"], spec["lower_index"],
                                 spec["upper_index"], spec.get("almost_increasing", True))
            except KeyError as exc:
                raise ConfigError(f"table scaling function missing {exc}") from None
        raise ConfigError(f"unknown scaling family {fam!r}")

    # evaluation

    def _raw(self, r):
        # r in (0, 1]
        if self.family == "constant":
            return np.ones_like(r)
        if self.family == "powerlog":
            out = r ** self.beta
            if self.gamma != 0.0:
                out = out * _log_ratio(r) ** (-self.gamma)
            return out
        if self.family == "table":
            lr = np.log(np.asarray(self.table_r))
            lv = np.log(np.asarray(self.table_v))
            return np.exp(np.interp(np.log(r), lr, lv))
        out = np.ones_like(r)
        for f in self.factors:
            out = out * f._raw(r)
        return out

    def __call__(self, r):
        r = _check_positive(r)
        rc = np.minimum(r, 1.0)
        out = np.where(r >= 1.0, 1.0, self._raw(rc))
        return float(out) if out.ndim == 0 else out

    def unchecked(self, r):
        """Vectorised evaluation without the positivity check (hot loops)."""
        rc = np.minimum(r, 1.0)
        return np.where(r >= 1.0, 1.0, self._raw(rc))

    def to_spec(self) -> dict:
        d = {"family": self.family, "lower_index": self.lower_index,
             "upper_index": self.upper_index}
        if self.family == "powerlog":
            d.update(beta=self.beta, gamma=self.gamma)
        elif self.family == "table":
            d.update(r=list(self.table_r), values=list(self.table_v))
        elif self.family == "product":
            d["factors"] = [f.to_spec() for f in self.factors]
        return d


def eval_scaling(f: ScalingFunction, r):
    return f(r)


def multiply(f: ScalingFunction, g: ScalingFunction, lower, upper) -> ScalingFunction:
    """Pointwise product carrying the given declared indices."""
    if g.family == "constant":
        return _redeclare(f, lower, upper)
    if f.family == "constant":
        return _redeclare(g, lower, upper)
    if f.family == "powerlog" and g.family == "powerlog":
        return ScalingFunction.power_log(f.beta + g.beta, f.gamma + g.gamma, lower, upper)
    return ScalingFunction("product", float(lower), float(upper),
                           f.almost_increasing and g.almost_increasing,
                           factors=(f, g))


def _redeclare(f, lower, upper):
    if f.lower_index == lower and f.upper_index == upper:
        return f
    return ScalingFunction(f.family, float(lower), float(upper), f.almost_increasing,
                           beta=f.beta, gamma=f.gamma, table_r=f.table_r,
                           table_v=f.table_v, factors=f.factors)


@dataclass(frozen=True)
class ScalingTriple:
    phi1: ScalingFunction
    phi2: ScalingFunction
    ell: ScalingFunction = field(default_factory=ScalingFunction.constant)

    def __post_init__(self):
        if not (self.phi1.almost_increasing and self.phi2.almost_increasing):
            raise ConfigError("phi1 and phi2 must be almost increasing")
        if self.ell.lower_index != 0 or self.ell.upper_index != 0:
            raise ConfigError("ell must be declared with both indices equal to 0")

    @property
    def beta1(self):
        return self.phi1.lower_index

    @property
    def beta1_star(self):
        return self.phi1.upper_index

    @property
    def beta2(self):
        return self.phi2.lower_index

    @property
    def beta2_star(self):
        return self.phi2.upper_index

    @property
    def phi0(self):
        return compose_phi0(self)

    @property
    def is_trivial(self):
        return all(f.family == "constant" for f in (self.phi1, self.phi2, self.ell))

    @classmethod
    def from_spec(cls, spec: dict) -> "ScalingTriple":
        def get(key):
            sub = spec.get(key)
            return ScalingFunction.constant() if sub is None else ScalingFunction.from_spec(sub)
        return cls(get("phi1"), get("phi2"), get("ell"))


def compose_phi0(t: ScalingTriple) -> ScalingFunction:
    """Phi0 = Phi1 * ell, declared with the indices of Phi1."""
    return multiply(t.phi1, t.ell, t.phi1.lower_index, t.phi1.upper_index)


# empirical index checks

@dataclass(frozen=True)
class ScalingReport:
    passed: bool
    constant: float
    n_pairs: int

    @property
    def worst_ratio_violation(self):
        return self.constant


C_CAP = 1e3


def _dyadic_grid(grid_size, points_per_octave):
    j = np.arange(grid_size * points_per_octave + 1)
    return 2.0 ** (-j / points_per_octave)


def _tightest_constant(logf, logx, lower_exp, upper_exp):
    # pairs i<j  ->  r = x_i >= s = x_j
    lr = logf[:, None] - logf[None, :]
    lq = logx[:, None] - logx[None, :]
    mask = np.triu(np.ones_like(lr, dtype=bool), k=1)
    up = (lr - upper_exp * lq)[mask]
    lo = (lower_exp * lq - lr)[mask]
    logc = max(0.0, float(up.max()), float(lo.max()))
    return float(np.exp(logc)), int(mask.sum())


def check_scaling_indices(f: ScalingFunction, grid_size: int = 140,
                          tolerance: float = 0.0, points_per_octave: int = 2) -> ScalingReport:
    """Fit the smallest C with
    C^-1 (r/s)^(lower-tol) <= f(r)/f(s) <= C (r/s)^(upper+tol)
    over dyadic pairs 0 < s <= r <= 1, s down to 2^-grid_size.
    """
    if grid_size < 8:
        raise DomainError("grid_size must be at least 8")
    x = _dyadic_grid(grid_size, points_per_octave)
    c, n = _tightest_constant(np.log(f(x)), np.log(x),
                              f.lower_index - tolerance, f.upper_index + tolerance)
    return ScalingReport(c <= C_CAP, c, n)


def check_ell_condition(t: ScalingTriple, epsilon: float, grid_size: int = 140,
                        points_per_octave: int = 2) -> ScalingReport:
    """Sandwich C^-1 (r/s)^-(eps^beta1) <= ell(r)/ell(s) <= C (r/s)^(eps^beta2)."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if grid_size < 8:
        raise DomainError("grid_size must be at least 8")
    x = _dyadic_grid(grid_size, points_per_octave)
    lo = -min(epsilon, t.beta1)
    up = min(epsilon, t.beta2)
    c, n = _tightest_constant(np.log(t.ell(x)), np.log(x), lo, up)
    return ScalingReport(c <= C_CAP, c, n)
