"""The boundary weight B, jump kernel J and killing potential kappa of a model."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import Domain
from .scaling import ScalingFunction, ScalingTriple, compose_phi0

CASE_I = "CaseI"
CASE_II = "CaseII"
GENERAL = "General"


@dataclass(frozen=True)
class KernelModel:
    alpha: float
    triple: ScalingTriple
    kappa0: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ConfigError("alpha must lie in (0, 2)")
        if self.kappa0 < 0:
            raise ConfigError("kappa0 must be nonnegative")

    @classmethod
    def power(cls, alpha, beta1, beta2, kappa0=0.0, ell=None):
        """Pure power model Phi1 = r^beta1, Phi2 = r^beta2 (ell defaults to 1)."""
        ell = ScalingFunction.constant() if ell is None else ell
        tr = ScalingTriple(ScalingFunction.power_log(beta1), ScalingFunction.power_log(beta2), ell)
        return cls(float(alpha), tr, float(kappa0))

    @classmethod
    def stable(cls, alpha, kappa0=0.0):
        """B = 1."""
        c = ScalingFunction.constant()
        return cls(float(alpha), ScalingTriple(c, c, c), float(kappa0))

    @classmethod
    def from_spec(cls, spec: dict) -> "KernelModel":
        if "alpha" not in spec:
            raise ConfigError("model spec needs alpha")
        return cls(float(spec["alpha"]), ScalingTriple.from_spec(spec),
                   float(spec.get("kappa0", 0.0)))

    def to_spec(self) -> dict:
        tr = self.triple
        return {"alpha": self.alpha, "kappa0": self.kappa0, "phi1": tr.phi1.to_spec(),
                "phi2": tr.phi2.to_spec(), "ell": tr.ell.to_spec()}

    @property
    def phi1(self):
        return self.triple.phi1

    @property
    def phi2(self):
        return self.triple.phi2

    @property
    def ell(self):
        return self.triple.ell

    @cached_property
    def phi0(self) -> ScalingFunction:
        return compose_phi0(self.triple)

    @property
    def upper_gap_ok(self):
        return self.triple.beta1_star < self.alpha + self.triple.beta1

    @property
    def case_tag(self):
        tr = self.triple
        if tr.beta2_star < self.alpha + tr.beta1:
            return CASE_I
        if tr.beta2 > self.alpha + tr.beta1_star:
            return CASE_II
        return GENERAL

    def check_killable(self):
        if self.alpha <= 1 and self.kappa0 <= 0:
            raise ConfigError("the killed process needs kappa0 > 0 when alpha <= 1")


def B_from_parts(m: KernelModel, dx, dy, r):
    """B from delta_D(x), delta_D(y), |x-y| (vectorised, r > 0)."""
    dx, dy, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (dx, dy, r)))
    lo = np.minimum(dx, dy)
    hi = np.maximum(dx, dy)
    if m.triple.is_trivial:
        return np.ones_like(r)
    out = m.phi1.unchecked(lo / r) * m.phi2.unchecked(hi / r)
    if m.ell.family != "constant":
        out = out * m.ell.unchecked(lo / np.minimum(hi, r))
    return out


def B_eval(m: KernelModel, dom: Domain, x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    r = np.linalg.norm(x - y, axis=-1)
    if np.any(r == 0):
        raise DomainError("B is evaluated off the diagonal; use B_diag for x = y")
    out = B_from_parts(m, dom.delta(x), dom.delta(y), r)
    return float(out) if out.ndim == 0 else out


def B_diag(m: KernelModel, dom: Domain, x):
    return 1.0


def J_eval(m: KernelModel, dom: Domain, x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    r = np.linalg.norm(x - y, axis=-1)
    if np.any(r == 0):
        raise DomainError("J is undefined on the diagonal")
    out = B_from_parts(m, dom.delta(x), dom.delta(y), r) * r ** (-dom.dim - m.alpha)
    return float(out) if np.ndim(out) == 0 else out


def kappa_from_delta(m: KernelModel, d):
    d = np.asarray(d, dtype=float)
    if m.kappa0 == 0:
        return np.zeros_like(d)
    with np.errstate(divide="ignore"):
        return m.kappa0 * np.minimum(d, 1.0) ** (-m.alpha)


def kappa_eval(m: KernelModel, dom: Domain, x):
    out = kappa_from_delta(m, dom.delta(x))
    return float(out) if out.ndim == 0 else out
