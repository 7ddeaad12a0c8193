"""Experiment configuration, read from a TOML file.

Top-level keys: ``experiment``, ``output_dir``; tables ``model``,
``domain``, ``sampling``, ``quadrature``, ``solver``, ``report`` and
``params`` (experiment-specific knobs). See README for the grammar.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import geometry
from ..errors import ConfigError, HKLabError
from ..kernel import KernelModel
from ..quadrature import QuadratureSpec

EXPERIMENTS = ("LemmaEquivalence", "RegimeDichotomy", "NonDominanceTrend", "SolverVsEnvelope",
               "SurvivalProfile", "EigenProfile", "KillingConstantTable", "ScalingAudit")

DEFAULT_CAPS = {
    "LemmaEquivalence": 50.0,
    "RegimeDichotomy": 1e3,
    "SolverVsEnvelope": 1e3,
    "EigenProfile": 20.0,
}


@dataclass(frozen=True)
class Sampling:
    n_triples: int = 300
    delta_floor: float = 1e-5
    t_grid: tuple = (1e-3, 1e-2, 1e-1)
    seed: int = 0
    gate: bool = True

    @classmethod
    def from_spec(cls, spec):
        spec = dict(spec or {})
        s = cls(int(spec.pop("n_triples", 300)), float(spec.pop("delta_floor", 1e-5)),
                tuple(float(t) for t in spec.pop("t_grid", (1e-3, 1e-2, 1e-1))),
                int(spec.pop("seed", 0)), bool(spec.pop("gate", True)))
        if spec:
            raise ConfigError(f"unknown sampling keys: {sorted(spec)}")
        if s.n_triples < 1:
            raise ConfigError("n_triples must be at least 1")
        if not s.delta_floor > 0:
            raise ConfigError("delta_floor must be positive")
        if not s.t_grid or any(t <= 0 for t in s.t_grid):
            raise ConfigError("t_grid needs positive times")
        return s


@dataclass(frozen=True)
class SolverSpec:
    h: float = 1.0 / 32
    mode: str = "Conservative"
    tol: float = 1e-10
    backend: str = "auto"
    cache_dir: str = ""

    @classmethod
    def from_spec(cls, spec):
        spec = dict(spec or {})
        s = cls(float(spec.pop("h", 1.0 / 32)), str(spec.pop("mode", "Conservative")),
                float(spec.pop("tol", 1e-10)), str(spec.pop("backend", "auto")),
                str(spec.pop("cache_dir", "")))
        if spec:
            raise ConfigError(f"unknown solver keys: {sorted(spec)}")
        if s.mode not in ("Conservative", "Killed"):
            raise ConfigError(f"unknown solver mode {s.mode!r}")
        if not 0 < s.h <= 0.5:
            raise ConfigError("solver.h must lie in (0, 0.5]")
        if s.backend not in ("auto", "dense", "convolution"):
            raise ConfigError(f"unknown solver backend {s.backend!r}")
        return s


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: KernelModel
    domain: geometry.Domain
    sampling: Sampling = Sampling()
    quadrature: QuadratureSpec = QuadratureSpec()
    solver: SolverSpec = SolverSpec()
    output_dir: Path = Path("out")
    spread_cap: float = 50.0
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "ExperimentConfig":
        data = dict(data)
        exp = data.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
        known = {"experiment", "output_dir", "model", "domain", "sampling", "quadrature",
                 "solver", "report", "params"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
        try:
            model = KernelModel.from_spec(data.get("model") or {})
            dom = geometry.from_spec(data.get("domain") or {"shape": "ball"})
            quad = QuadratureSpec.from_spec(data.get("quadrature"))
        except HKLabError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        report = dict(data.get("report") or {})
        cap = float(report.pop("spread_cap", DEFAULT_CAPS.get(exp, 50.0)))
        if report:
            raise ConfigError(f"unknown report keys: {sorted(report)}")
        if not cap >= 1:
            raise ConfigError("spread_cap must be at least 1")
        out = Path(data.get("output_dir", f"out/{exp}"))
        if not out.is_absolute():
            out = Path(os.path.normpath(base / out))
        return cls(exp, model, dom, Sampling.from_spec(data.get("sampling")), quad,
                   SolverSpec.from_spec(data.get("solver")), out, cap,
                   dict(data.get("params") or {}), data)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, **kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(data, path.parent)
