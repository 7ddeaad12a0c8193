"""The experiment runners. Each takes an ExperimentConfig and returns a
ComparabilityReport; nothing here writes to disk."""
from __future__ import annotations

import logging
import time
from dataclasses import replace

import numpy as np

from .. import envelope as env
from .. import geometry, killing, solver
from ..errors import ConfigError, DomainError, NumericError
from ..kernel import CASE_I, CASE_II
from ..scaling import check_ell_condition, check_scaling_indices
from .config import ExperimentConfig
from .report import ComparabilityReport
from .sampling import gate_ok, sample_triples

log = logging.getLogger(__name__)


def _triple_cols(s):
    return {"t": s.t, "x": s.x, "y": s.y, "delta_x": s.dx, "delta_y": s.dy, "r": s.r}


def _guarded(fn, s, **extra):
    """Run fn(s); numeric failures carry the offending sample along."""
    try:
        return fn(s)
    except NumericError as exc:
        exc.diagnostics = {**exc.diagnostics, "sample": _triple_cols(s), **extra}
        raise


def _drift(fine, coarse):
    return fine / coarse - 1.0


def _with_floor(cfg, floor):
    return cfg.with_overrides(sampling=replace(cfg.sampling, delta_floor=floor))


# envelope-internal experiments

def _lemma_rows(cfg: ExperimentConfig):
    m, dom, quad = cfg.model, cfg.domain, cfg.quadrature
    ss = sample_triples(dom, cfg.sampling, m.alpha)
    rows = []
    for s, stratum in zip(ss.triples, ss.strata):
        vals = _guarded(lambda s: (env.I1_eval(m, dom, s, quad), env.I2_eval(m, dom, s, quad),
                                   env.I3_eval(m, dom, s, quad)), s)
        spread = max(vals) / min(vals)
        rows.append({**_triple_cols(s), "stratum": stratum, "I1": vals[0], "I2": vals[1],
                     "I3": vals[2], "ratio": spread})
    return rows, ss.counts


def lemma_equivalence(cfg: ExperimentConfig) -> ComparabilityReport:
    """Spread of {I1, I2, I3} per triple, and its stability as the floor drops."""
    ref_floor = float(cfg.params.get("reference_floor", 1e-3))
    max_drift = float(cfg.params.get("floor_drift", 0.2))
    rows, counts = _lemma_rows(cfg)
    worst = max(r["ratio"] for r in rows)
    summary = {"worst_spread": worst, "spread_cap": cfg.spread_cap,
               "median_spread": float(np.median([r["ratio"] for r in rows]))}
    passed = worst <= cfg.spread_cap
    if ref_floor != cfg.sampling.delta_floor:
        ref_rows, _ = _lemma_rows(_with_floor(cfg, ref_floor))
        worst_ref = max(r["ratio"] for r in ref_rows)
        drift = _drift(worst, worst_ref)
        summary.update(reference_floor=ref_floor, worst_spread_reference=worst_ref,
                       floor_drift=drift, floor_drift_cap=max_drift)
        passed = passed and drift < max_drift
    summary.update({f"stratum.{k}": v for k, v in counts.items()}, passed=passed)
    return ComparabilityReport(cfg.experiment, rows, summary)


def _regime_rows(cfg: ExperimentConfig):
    m, dom, quad = cfg.model, cfg.domain, cfg.quadrature
    case = m.case_tag
    if case not in (CASE_I, CASE_II):
        raise ConfigError("RegimeDichotomy needs a CaseI or CaseII model")
    ss = sample_triples(dom, cfg.sampling, m.alpha)
    rows = []
    for s, stratum in zip(ss.triples, ss.strata):
        tj = _guarded(lambda s: env.two_jump_expression(m, dom, s, quad), s)
        if case == CASE_I:
            ref = env.A_main(m, s)
        else:
            ref = min(1.0, s.t / s.r ** m.alpha) * env.A_cross(m, s)
        rows.append({**_triple_cols(s), "stratum": stratum, "two_jump": tj, "reference": ref,
                     "ratio": tj / ref})
    return rows, case


def _regime_stat(rows, case):
    ratios = np.array([r["ratio"] for r in rows])
    if case == CASE_I:
        return float(ratios.max())              # the constant C in  I <= C A
    return float(ratios.max() / ratios.min())   # two-sided band


def regime_dichotomy(cfg: ExperimentConfig) -> ComparabilityReport:
    ref_floor = float(cfg.params.get("reference_floor", 1e-3))
    max_drift = float(cfg.params.get("floor_drift", 0.2))
    rows, case = _regime_rows(cfg)
    stat = _regime_stat(rows, case)
    ratios = np.array([r["ratio"] for r in rows])
    key = "constant_C" if case == CASE_I else "spread"
    summary = {"case": case, key: stat, "min_ratio": float(ratios.min()),
               "max_ratio": float(ratios.max()), "spread_cap": cfg.spread_cap}
    passed = stat <= cfg.spread_cap
    if ref_floor != cfg.sampling.delta_floor:
        ref_rows, _ = _regime_rows(_with_floor(cfg, ref_floor))
        ref_stat = _regime_stat(ref_rows, case)
        drift = _drift(stat, ref_stat)
        summary.update({"reference_floor": ref_floor, f"{key}_reference": ref_stat,
                        "floor_drift": drift, "floor_drift_cap": max_drift})
        passed = passed and drift < max_drift
    summary["passed"] = passed
    return ComparabilityReport(cfg.experiment, rows, summary)


def pair_at_depth(dom, delta, r):
    """Two points of a ball at depth delta, a distance r apart."""
    if dom.shape != "ball":
        raise ConfigError("NonDominanceTrend places its pair on a ball")
    rho = dom.radius - delta
    if not 0 < r <= 2 * rho:
        raise ConfigError(f"no pair at depth {delta} with separation {r}")
    half = np.arcsin(r / (2 * rho))
    c = np.asarray(dom.center, dtype=float)
    x, y = c.copy(), c.copy()
    x[:2] += rho * np.array([-np.sin(half), -np.cos(half)])
    y[:2] += rho * np.array([np.sin(half), -np.cos(half)])
    return x, y


def non_dominance_trend(cfg: ExperimentConfig) -> ComparabilityReport:
    m, dom, p = cfg.model, cfg.domain, cfg.params
    delta = float(p.get("delta", 0.3))
    r = float(p.get("r", 1.0))
    k_max = int(p.get("k_max", 6))
    small = float(p.get("small_threshold", 1e-3))
    large = float(p.get("large_threshold", 1e2))
    t_march = float(p.get("march_t", 1e-4))
    floor = float(p.get("march_floor", 1e-5))
    n_march = int(p.get("n_march", 13))

    rows = []
    x, y = pair_at_depth(dom, delta, r)
    for k in range(1, k_max + 1):
        s = env.SpaceTimeTriple.make(dom, 10.0 ** -k, x, y)
        rows.append({"sequence": "time", "step": k, **_triple_cols(s),
                     "ratio": env.non_dominance_ratio(m, s)})
    for i, d in enumerate(np.geomspace(delta, floor, n_march)):
        x, y = pair_at_depth(dom, d, r)
        s = env.SpaceTimeTriple.make(dom, t_march, x, y)
        rows.append({"sequence": "march", "step": i, **_triple_cols(s),
                     "ratio": env.non_dominance_ratio(m, s)})
    tr = np.array([row["ratio"] for row in rows if row["sequence"] == "time"])
    mr = np.array([row["ratio"] for row in rows if row["sequence"] == "march"])
    decreasing = bool(np.all(np.diff(tr) < 0))
    increasing = bool(np.all(np.diff(mr) >= 0))
    summary = {"case": m.case_tag, "time_ratio_last": float(tr[-1]),
               "time_decreasing": decreasing, "small_threshold": small,
               "march_ratio_last": float(mr[-1]), "march_increasing": increasing,
               "large_threshold": large,
               "passed": decreasing and tr[-1] < small and mr[-1] > large}
    return ComparabilityReport(cfg.experiment, rows, summary)


# solver experiments

def _grid(cfg: ExperimentConfig, h, mode=None):
    sv = cfg.solver
    cache = sv.cache_dir or None
    return solver.cached_generator(cfg.model, cfg.domain, h, mode or sv.mode, cache_dir=cache,
                                   backend=sv.backend)


def solver_pairs(cfg: ExperimentConfig, h_max):
    """Physical (t, source, x) triples. Sources y are stratified by depth;
    for each t the partners x come from a random pool, round-robin over the
    sources that can reach the off-diagonal gate. Every point keeps
    delta >= 3 h_max before snapping to a lattice."""
    dom, m, p = cfg.domain, cfg.model, cfg.params
    n_src = int(p.get("n_sources", 25))
    n_par = int(p.get("partners", 4))
    pool_size = int(p.get("pool", 20000))
    rng = np.random.default_rng(cfg.sampling.seed)
    lo = 3.0 * h_max
    rin = geometry.inradius(dom)
    mid = 0.5 * dom.eta1
    if not lo < mid:
        raise ConfigError("h is too coarse for a boundary layer above 3h")
    d_src = np.concatenate([np.geomspace(lo, mid, n_src // 2, endpoint=False),
                            np.linspace(mid, 0.9 * rin, n_src - n_src // 2)])
    src = geometry.points_at_depth(dom, d_src, rng)
    # pool: half log-uniform depths (boundary layer), half uniform in D
    half = pool_size // 2
    d_pool = np.exp(rng.uniform(np.log(lo), np.log(0.9 * rin), half))
    pool = np.vstack([geometry.points_at_depth(dom, d_pool, rng),
                      geometry.random_points(dom, pool_size - half, rng)])
    pool = pool[dom.delta(pool) >= lo]
    dist = np.linalg.norm(pool[None, :, :] - src[:, None, :], axis=2)
    out = []
    for t in cfg.sampling.t_grid:
        need = 2.0 * t ** (1.0 / m.alpha) / dom.eps1 + 2 * h_max if cfg.sampling.gate else 2 * h_max
        ok = dist > need
        feasible = [j for j in range(n_src) if ok[j].any()]
        if not feasible:
            raise ConfigError(f"no pair can satisfy the off-diagonal gate at t={t}")
        for k in range(n_src * n_par):
            j = feasible[k % len(feasible)]
            out.append((t, j, pool[rng.choice(np.flatnonzero(ok[j]))]))
    return src, out


def solver_vs_envelope(cfg: ExperimentConfig) -> ComparabilityReport:
    m, dom, quad = cfg.model, cfg.domain, cfg.quadrature
    hs = [float(h) for h in cfg.params.get("h_grid", [cfg.solver.h])]
    max_move = float(cfg.params.get("band_drift", 0.3))
    if cfg.solver.mode != "Conservative":
        raise ConfigError("SolverVsEnvelope compares against the conservative envelope")
    src, pairs = solver_pairs(cfg, max(hs))
    times = list(cfg.sampling.t_grid)
    rows, bands = [], []
    for h in hs:
        t0 = time.perf_counter()
        g = _grid(cfg, h)
        src_nodes = np.array([g.nearest_node(y) for y in src])
        uniq, inv = np.unique(src_nodes, return_inverse=True)
        M = solver.heat_kernel_columns(g, uniq, times, cfg.solver.tol)
        ratios = []
        for t, j, x in pairs:
            a = g.nearest_node(x)
            b = src_nodes[j]
            if a == b or min(g.delta[a], g.delta[b]) < 2 * h:
                continue
            s = env.SpaceTimeTriple.make(dom, t, g.nodes[a], g.nodes[b])
            if cfg.sampling.gate and not gate_ok(dom, m.alpha, t, s.r):
                continue
            ev = _guarded(lambda s: env.envelope_conservative(m, dom, s, 0.0, quad), s, h=h)
            ph = M[times.index(t), a, inv[j]] * g.density_scale
            ratios.append(ph / ev.value)
            rows.append({"h": h, **_triple_cols(s), "source": j, "branch": ev.branch,
                         "p_h": ph, "envelope": ev.value, "ratio": ph / ev.value})
        r = np.array(ratios)
        bands.append((h, float(r.min()), float(r.max()), len(r), g.n))
        log.info("h=%g: %d pairs, band [%.4g, %.4g] in %.1fs", h, len(r), r.min(), r.max(),
                 time.perf_counter() - t0)
        del g, M
    summary = {"spread_cap": cfg.spread_cap, "band_drift_cap": max_move}
    passed = True
    for h, lo, hi, n, nodes in bands:
        tag = f"h={h:.6g}"
        summary.update({f"{tag}.band_low": lo, f"{tag}.band_high": hi,
                        f"{tag}.spread": hi / lo, f"{tag}.pairs": n, f"{tag}.nodes": nodes})
        passed = passed and hi / lo <= cfg.spread_cap
    for (h1, lo1, hi1, *_), (h2, lo2, hi2, *_) in zip(bands, bands[1:]):
        mv = max(abs(lo2 / lo1 - 1), abs(hi2 / hi1 - 1))
        summary[f"move.{h1:.6g}->{h2:.6g}"] = mv
        passed = passed and mv < max_move
    summary["passed"] = passed
    return ComparabilityReport(cfg.experiment, rows, summary)


def boundary_exponent(cfg: ExperimentConfig):
    m = cfg.model
    prof = cfg.params.get("profile", "constant")
    if m.kappa0 == 0 and m.alpha > 1:
        return m.alpha - 1.0
    if prof == "constant":
        F = killing.BoundaryProfile.constant(cfg.domain.dim)
    elif prof == "product":
        F = killing.BoundaryProfile.from_triple(m.triple, cfg.domain.dim)
    else:
        raise ConfigError(f"unknown boundary profile {prof!r}")
    return killing.solve_q(m.alpha, m.kappa0, F, quad=cfg.quadrature)


def _killed_grid(cfg):
    if cfg.solver.mode != "Killed":
        raise ConfigError(f"{cfg.experiment} needs solver.mode = 'Killed'")
    return _grid(cfg, cfg.solver.h, "Killed")


def survival_profile(cfg: ExperimentConfig) -> ComparabilityReport:
    m, dom, p = cfg.model, cfg.domain, cfg.params
    t = float(p.get("t", 0.5))
    slope_tol = float(p.get("slope_tol", 0.1))
    q = boundary_exponent(cfg)
    g = _killed_grid(cfg)
    h = g.h
    surv = solver.survival_vector(g, t, cfg.solver.tol)
    tau = t ** (1.0 / m.alpha)
    sel = (g.delta >= 2 * h) & (g.delta <= 0.5 * tau)
    if sel.sum() < 3:
        raise ConfigError("too few nodes in the fitting band 2h <= delta <= tau/2")
    slope, icpt = np.polyfit(np.log(g.delta[sel]), np.log(surv[sel]), 1)
    order = np.argsort(g.delta)
    rows = [{"node": int(i), "x": g.nodes[i], "delta": g.delta[i], "survival": surv[i],
             "envelope": env.survival_envelope(m, dom, g.nodes[i], t, q), "in_fit": bool(sel[i])}
            for i in order]
    summary = {"t": t, "q": q, "slope": float(slope), "intercept": float(icpt),
               "slope_tol": slope_tol, "fit_nodes": int(sel.sum()), "nodes": g.n,
               "absorbing_nodes": g.n_absorbing, "passed": bool(abs(slope - q) <= slope_tol)}
    return ComparabilityReport(cfg.experiment, rows, summary)


def eigen_profile(cfg: ExperimentConfig) -> ComparabilityReport:
    m, dom, p = cfg.model, cfg.domain, cfg.params
    t_big = float(p.get("t", 2.0))
    n_pairs = int(p.get("n_pairs", 20))
    n_src = int(p.get("n_sources", 5))
    q = boundary_exponent(cfg)
    g = _killed_grid(cfg)
    h = g.h
    lam, phi = solver.principal_eigenpair(g)
    sel = g.delta >= 2 * h
    prof = phi[sel] / g.delta[sel] ** q
    spread = float(prof.max() / prof.min())

    rng = np.random.default_rng(cfg.sampling.seed)
    cand = np.flatnonzero(sel)
    sources = rng.choice(cand, size=n_src, replace=False)
    M = solver.heat_kernel_columns(g, sources, [t_big], cfg.solver.tol)[0]
    rows = []
    for k in range(n_pairs):
        j = k % n_src
        a = int(rng.choice(cand))
        s = env.SpaceTimeTriple.make(dom, t_big, g.nodes[a], g.nodes[sources[j]])
        ph = M[a, j] * g.density_scale
        e = env.envelope_killed_large_time(m, dom, s, q, lam)
        rows.append({**_triple_cols(s), "p_h": ph, "envelope": e, "ratio": ph / e})
    ratios = np.array([r["ratio"] for r in rows])
    phi_rows = [{"node": int(i), "x": g.nodes[i], "delta": g.delta[i], "phi1": phi[i],
                 "phi1_over_delta_q": phi[i] / g.delta[i] ** q} for i in np.argsort(g.delta)]
    summary = {"lambda1": lam, "q": q, "phi_spread": spread, "spread_cap": cfg.spread_cap,
               "t": t_big, "bracket_low": float(ratios.min()), "bracket_high": float(ratios.max()),
               "bracket_factor": float(ratios.max() / ratios.min()), "nodes": g.n,
               "passed": bool(lam > 0 and spread <= cfg.spread_cap)}
    return ComparabilityReport(cfg.experiment, rows, summary, {"eigenfunction": phi_rows})


# tables and audits

def killing_constant_table(cfg: ExperimentConfig) -> ComparabilityReport:
    m, p = cfg.model, cfg.params
    prof = p.get("profile", "constant")
    d = cfg.domain.dim
    if prof == "constant":
        F = killing.BoundaryProfile.constant(d)
    elif prof == "product":
        F = killing.BoundaryProfile.from_triple(m.triple, d)
    else:
        raise ConfigError(f"unknown boundary profile {prof!r}")
    lo, hi = killing.p_domain(m.alpha, F.beta1)
    grid = p.get("p_grid")
    ps = np.linspace(lo, hi, 11)[:-1] if grid is None else np.asarray(grid, dtype=float)
    rows = []
    for pv in ps:
        try:
            c = killing.C_const_eval(m.alpha, float(pv), F, cfg.quadrature, d)
            rows.append({"p": float(pv), "C": c, "in_domain": True})
        except DomainError:
            rows.append({"p": float(pv), "C": None, "in_domain": False})
    cs = [r["C"] for r in rows if r["in_domain"]]
    mono = bool(np.all(np.diff(cs) > 0)) if len(cs) > 1 else True
    summary = {"profile": F.label, "p_low": lo, "p_high": hi, "monotone": mono,
               "out_of_domain": sum(not r["in_domain"] for r in rows)}
    if m.kappa0 > 0 or m.alpha > 1:
        summary["q"] = killing.solve_q(m.alpha, m.kappa0, F, quad=cfg.quadrature)
    summary["passed"] = mono
    return ComparabilityReport(cfg.experiment, rows, summary)


def scaling_audit(cfg: ExperimentConfig) -> ComparabilityReport:
    m, p = cfg.model, cfg.params
    tol = float(p.get("tolerance", 0.05))
    grid_size = int(p.get("grid_size", 140))
    eps = float(p.get("epsilon", 0.1))
    rows = []
    for name, f in (("phi1", m.phi1), ("phi2", m.phi2), ("ell", m.ell), ("phi0", m.phi0)):
        rep = check_scaling_indices(f, grid_size, tol)
        rows.append({"function": name, "family": f.family, "lower_index": f.lower_index,
                     "upper_index": f.upper_index, "check": "indices",
                     "constant": rep.constant, "passed": rep.passed})
    rep = check_ell_condition(m.triple, eps, grid_size)
    rows.append({"function": "ell", "family": m.ell.family, "lower_index": -min(eps, m.triple.beta1),
                 "upper_index": min(eps, m.triple.beta2), "check": f"ell_condition(eps={eps})",
                 "constant": rep.constant, "passed": rep.passed})
    summary = {"tolerance": tol, "grid_size": grid_size, "case": m.case_tag,
               "upper_gap_ok": m.upper_gap_ok, "passed": all(r["passed"] for r in rows)}
    return ComparabilityReport(cfg.experiment, rows, summary)


RUNNERS = {
    "LemmaEquivalence": lemma_equivalence,
    "RegimeDichotomy": regime_dichotomy,
    "NonDominanceTrend": non_dominance_trend,
    "SolverVsEnvelope": solver_vs_envelope,
    "SurvivalProfile": survival_profile,
    "EigenProfile": eigen_profile,
    "KillingConstantTable": killing_constant_table,
    "ScalingAudit": scaling_audit,
}


def run_experiment(cfg: ExperimentConfig) -> ComparabilityReport:
    return RUNNERS[cfg.experiment](cfg)
