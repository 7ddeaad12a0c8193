"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about five minutes).
"""
import os
import time

import numpy as np
import pytest

from hklab import auxiliary, geometry, killing, solver
from hklab.errors import DomainError
from hklab.harness.config import load_config
from hklab.harness.experiments import run_experiment
from hklab.kernel import KernelModel
from hklab.scaling import ScalingFunction, check_scaling_indices

from conftest import CONFIGS

pytestmark = pytest.mark.acceptance


@pytest.fixture
def say(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


def run(name):
    t0 = time.perf_counter()
    rep = run_experiment(load_config(os.path.join(CONFIGS, name)))
    return rep, time.perf_counter() - t0


def test_c01_lemma_equivalence(say):
    rep, secs = run("lemma_equivalence.toml")
    s = rep.summary
    ok = (len(rep.rows) == 300 and s["worst_spread"] <= 50 and s["floor_drift"] < 0.2)
    say(1, ok, f"worst spread {s['worst_spread']:.4g} (cap 50), growth 1e-3 -> 1e-5 "
               f"{100 * s['floor_drift']:+.2f}%, {secs:.0f}s")
    assert ok


def test_c02_regime_dichotomy(say):
    one, _ = run("regime_case_i.toml")
    two, _ = run("regime_case_ii.toml")
    a, b = one.summary, two.summary
    ok = (a["case"] == "CaseI" and b["case"] == "CaseII"
          and len(one.rows) == 300 and len(two.rows) == 300
          and np.isfinite(a["constant_C"]) and a["constant_C"] <= a["spread_cap"]
          and np.isfinite(b["spread"]) and b["spread"] <= b["spread_cap"]
          and a["floor_drift"] < 0.2 and b["floor_drift"] < 0.2)
    say(2, ok, f"CaseI C={a['constant_C']:.4g} (growth {100 * a['floor_drift']:+.2f}%), "
               f"CaseII band {b['min_ratio']:.3g}..{b['max_ratio']:.3g} factor {b['spread']:.4g} "
               f"(growth {100 * b['floor_drift']:+.2f}%)")
    assert ok


def test_c03_non_dominance(say):
    rep, _ = run("non_dominance.toml")
    s = rep.summary
    time_rows = [r for r in rep.rows if r["sequence"] == "time"]
    march = [r for r in rep.rows if r["sequence"] == "march"]
    ok = (s["case"] == "CaseII" and s["time_decreasing"] and s["time_ratio_last"] < 1e-3
          and s["march_ratio_last"] > 1e2
          and all(abs(r["delta_x"] - 0.3) < 1e-12 and abs(r["r"] - 1) < 1e-12 for r in time_rows)
          and march[-1]["delta_x"] == pytest.approx(1e-5) and march[-1]["t"] == 1e-4)
    say(3, ok, f"ratio at t=1e-6 {s['time_ratio_last']:.3g} (< 1e-3, decreasing), "
               f"march to delta=1e-5 gives {s['march_ratio_last']:.4g} (> 1e2)")
    assert ok


@pytest.mark.slow
def test_c04_solver_vs_envelope(say):
    rep, secs = run("solver_vs_envelope.toml")
    s = rep.summary
    bands = {h: (s[f"h={h}.band_low"], s[f"h={h}.band_high"], s[f"h={h}.pairs"])
             for h in ("0.03125", "0.015625")}
    move = s["move.0.03125->0.015625"]
    spreads = [hi / lo for lo, hi, _ in bands.values()]
    ok = max(spreads) <= 1e3 and move < 0.3 and min(n for *_, n in bands.values()) >= 80
    det = ", ".join(f"h={h}: [{lo:.3g}, {hi:.3g}] over {n} pairs" for h, (lo, hi, n) in bands.items())
    say(4, ok, f"{det}; worst C/c {max(spreads):.3g}; endpoint move {100 * move:.1f}%; {secs:.0f}s")
    assert ok


def test_c05_mass_and_symmetry(say, disc):
    g = solver.build_generator(KernelModel.power(1.0, 0.4, 0.6), disc, 1 / 32)
    tol = 1e-10
    rng = np.random.default_rng(50)
    pairs = rng.choice(g.n, size=(50, 2), replace=False)
    src = np.unique(pairs)
    M = solver.heat_kernel_columns(g, src, [0.05, 0.1, 0.2], tol)
    mass_err = float(np.abs(M.sum(axis=1) - 1).max())
    pos = {j: k for k, j in enumerate(src)}
    P = M * g.density_scale * g.h ** g.dim
    sym_err = max(float(np.abs(P[:, i, pos[j]] - P[:, j, pos[i]]).max()) for i, j in pairs)
    ok = mass_err < 1e-8 and sym_err <= 2 * tol
    say(5, ok, f"max |mass - 1| {mass_err:.2e} over {len(src)} columns x 3 times; "
               f"max asymmetry {sym_err:.2e} on 50 pairs (limit {2 * tol:.0e})")
    assert ok


def test_c06_killing_constant(say):
    F = killing.BoundaryProfile.constant(2)
    c0 = killing.C_const_eval(1.5, 0.5, F)
    grid = np.round(np.arange(0.5, 1.85, 0.1), 10)
    inside = grid[grid < 1.5]
    cs = [killing.C_const_eval(1.5, p, F) for p in inside]
    rejected = []
    for p in grid[grid >= 1.5]:
        with pytest.raises(DomainError):
            killing.C_const_eval(1.5, p, F)
        rejected.append(p)
    inc = bool(np.all(np.diff(cs) > 0))
    q = killing.solve_q(1.5, killing.C_const_eval(1.5, 0.8, F), F)
    fact = max(abs(killing.C_const_eval(1.5, p, F) / killing.C_separable(1.5, p, 2) - 1)
               for p in (0.6, 0.8, 1.0, 1.2, 1.4))
    ok = abs(c0) <= 1e-8 and inc and abs(q - 0.8) < 1e-6 and fact < 1e-6
    say(6, ok, f"C(0.5)={c0:.1e}; increasing on p=0.5..1.4: {inc}; p={rejected[0]:g}..{rejected[-1]:g} "
               f"lie outside [0.5, 1.5) and raise DomainError; roundtrip error {abs(q - 0.8):.1e}; "
               f"joint vs separable {fact:.1e}")
    assert ok


@pytest.mark.slow
def test_c07_survival_exponent(say):
    rep, _ = run("survival.toml")
    s = rep.summary
    ok = s["q"] == 0.5 and abs(s["slope"] - 0.5) <= 0.1
    say(7, ok, f"slope {s['slope']:.4f} (target 0.5 +- 0.1) over {s['fit_nodes']} nodes, "
               f"h=1/64, {s['absorbing_nodes']} absorbing boundary cells")
    assert ok


@pytest.mark.slow
def test_c08_eigenfunction(say):
    rep, secs = run("eigen.toml")
    s = rep.summary
    ok = s["lambda1"] > 0 and s["phi_spread"] <= 20 and len(rep.rows) == 20
    say(8, ok, f"lambda1={s['lambda1']:.5g}; phi/delta^0.5 spread {s['phi_spread']:.4g} (cap 20); "
               f"p_h/envelope at t=2 within [{s['bracket_low']:.3g}, {s['bracket_high']:.3g}] "
               f"(factor {s['bracket_factor']:.3g}); {secs:.0f}s")
    assert ok


def test_c09_scaling_audits(say):
    PL = ScalingFunction.power_log
    # tables clamp below their first abscissa, so cover the audited range 2^-140
    r = np.geomspace(1e-45, 1, 90)
    good = {
        "PowerLog(0.4,0)": PL(0.4),
        "PowerLog(0.4,1)": PL(0.4, 1.0),
        "PowerLog(1.8,-0.5)": PL(1.8, -0.5),
        "PowerLog(0,-0.5)": PL(0, -0.5),
        "Constant": ScalingFunction.constant(),
        "Table(r^0.6)": ScalingFunction.table(r, r ** 0.6, 0.6, 0.6),
    }
    bad = {
        "PowerLog(0.4) as 0.5, tol 0.01": (PL(0.4, 0.0, 0.5, 0.5), 0.01),
        "PowerLog(0.4) as 0.6, tol 0.05": (PL(0.4, 0.0, 0.6, 0.6), 0.05),
        "PowerLog(0.8) as 0.4, tol 0.05": (PL(0.8, 0.0, 0.4, 0.4), 0.05),
        "Table(r^0.6) as 0.3, tol 0.05": (ScalingFunction.table(r, r ** 0.6, 0.3, 0.3), 0.05),
    }
    passed = {k: check_scaling_indices(f, tolerance=0.05) for k, f in good.items()}
    failed = {k: check_scaling_indices(f, tolerance=tol) for k, (f, tol) in bad.items()}
    ok = all(v.passed for v in passed.values()) and not any(v.passed for v in failed.values())
    worst = max(v.constant for v in passed.values())
    least = min(v.constant for v in failed.values())
    say(9, ok, f"{len(good)} declared families pass (largest C {worst:.3g}); "
               f"{len(bad)} misdeclared fail (smallest C {least:.3g} > 1e3)")
    assert ok


@pytest.mark.slow
def test_c10_auxiliary_suite(say):
    t0 = time.perf_counter()
    suite = auxiliary.default_suite()
    ok = all(fc.passed() for fc in suite.values())
    worst = max(fc.drift for fc in suite.values())
    consts = ", ".join(f"{k} {fc.constant_refined:.3g}" for k, fc in suite.items())
    say(10, ok, f"{len(suite)} checks, worst drift {100 * worst:.3f}% (< 20%); {consts}; "
                f"{time.perf_counter() - t0:.0f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
