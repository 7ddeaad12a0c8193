"""Stratified, seeded sampling of space-time triples."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .. import geometry
from ..envelope import SpaceTimeTriple
from ..errors import ConfigError
from .config import Sampling

STRATA = ("interior/interior", "interior/boundary", "boundary/boundary")
MAX_TRIES = 400


@dataclass(frozen=True)
class SampleSet:
    triples: list
    strata: list

    @property
    def counts(self):
        c = Counter(self.strata)
        return {k: c.get(k, 0) for k in STRATA}


def depth_bands(dom: geometry.Domain, floor):
    """(boundary-layer band, interior band) of depths."""
    rin = geometry.inradius(dom)
    top = 0.5 * dom.eta1
    if not floor < top:
        raise ConfigError(f"delta_floor={floor} leaves no boundary layer below {top}")
    return (floor, top), (top, 0.9 * rin)


def _depth(rng, band, log=True):
    a, b = band
    if log:
        return float(np.exp(rng.uniform(np.log(a), np.log(b))))
    return float(rng.uniform(a, b))


def gate_ok(dom, alpha, t, r):
    return t ** (1.0 / alpha) < dom.eps1 * r / 2


def sample_triples(dom: geometry.Domain, sampling: Sampling, alpha: float,
                   gate: bool | None = None) -> SampleSet:
    """Cycle through strata and times; boundary depths are log-spaced down to
    the floor and the first boundary sample sits in [floor, 2 floor].

    With the gate on, every triple satisfies t^(1/alpha) < eps1 r / 2.
    """
    gate = sampling.gate if gate is None else gate
    rng = np.random.default_rng(sampling.seed)
    layer, inner = depth_bands(dom, sampling.delta_floor)
    triples, strata = [], []
    pinned = False
    for i in range(sampling.n_triples):
        stratum = STRATA[i % 3]
        t = sampling.t_grid[(i // 3) % len(sampling.t_grid)]
        kinds = stratum.split("/")
        for _ in range(MAX_TRIES):
            dxy = []
            for k in kinds:
                if k == "boundary":
                    if not pinned:
                        dxy.append(sampling.delta_floor * (1.0 + rng.uniform()))
                    else:
                        dxy.append(_depth(rng, layer))
                else:
                    dxy.append(_depth(rng, inner, log=False))
            pts = geometry.points_at_depth(dom, dxy, rng)
            r = float(np.linalg.norm(pts[0] - pts[1]))
            if r > 0 and (not gate or gate_ok(dom, alpha, t, r)):
                break
        else:
            raise ConfigError(f"could not place a {stratum} pair at t={t} "
                              f"satisfying the off-diagonal gate; domain too small")
        if "boundary" in kinds:
            pinned = True
        x, y = pts
        if rng.uniform() < 0.5:
            x, y = y, x
        triples.append(SpaceTimeTriple.make(dom, t, x, y))
        strata.append(stratum)
    return SampleSet(triples, strata)
