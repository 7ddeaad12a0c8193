import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

from hklab import envelope as env, geometry
from hklab.errors import DomainError, RangeError, UsageError
from hklab.harness.config import Sampling
from hklab.harness.sampling import sample_triples
from hklab.kernel import KernelModel
from hklab.quadrature import QuadratureSpec
from hklab.scaling import ScalingFunction, ScalingTriple

PL = ScalingFunction.power_log
ONE = ScalingFunction.constant()


def pair(dom, dx, dy, r):
    """x on the positive axis at depth dx and y at depth dy, |x - y| = r (unit disc)."""
    a, b = 1 - dx, 1 - dy
    c = (a * a + b * b - r * r) / (2 * a * b)
    th = np.arccos(c)
    return np.array([a, 0.0]), np.array([b * np.cos(th), b * np.sin(th)])


def A_ref(f, g, h, dx, dy, r, tau):
    lo, hi = max(min(dx, dy), tau), max(dx, dy, tau)
    return f(lo / r) * g(hi / r) * h(lo / min(hi, r))


def one_sided_oracle(m, dom, p, q, lo, hi, tau):
    """int_lo^hi A(t,p,p+u n)A(t,p+u n,q) du/u^(1+alpha) by scipy quad in log u."""
    p, q = np.asarray(p), np.asarray(q)
    dp, dq = dom.delta(p), dom.delta(q)

    def f(v):
        u = np.exp(v)
        z = geometry.lift_point(dom, p, u)
        dz = float(dom.delta(z))
        rz = float(np.linalg.norm(z - q))
        a1 = A_ref(m.phi1, m.phi2, m.ell, dp, dz, u, tau)
        a2 = A_ref(m.phi1, m.phi2, m.ell, dz, dq, rz, tau)
        return a1 * a2 * u ** -m.alpha

    pts = [np.log(v) for v in (dp, dq, tau, 1 - np.linalg.norm(p)) if lo < v < hi]
    return scipy_quad(f, np.log(lo), np.log(hi), points=pts or None, limit=500,
                      epsabs=0, epsrel=1e-10)[0]


# A function

def test_A_examples(disc, case_i):
    s = env.SpaceTimeTriple.make(disc, 0.0, *pair(disc, 0.1, 0.2, 1.0))
    one = env.A_eval(case_i, disc, ONE, ONE, ONE, s)
    assert one == 1.0
    v = env.A_eval(case_i, disc, PL(0.5), PL(0.3), ONE, s)
    assert v == pytest.approx(0.1 ** 0.5 * 0.2 ** 0.3, rel=1e-12)
    assert v == pytest.approx(0.195123, abs=5e-6)
    deep = env.SpaceTimeTriple.make(disc, 1e-3, (0.0, 0.0), (0.2, 0.0))
    assert env.A_main(case_i, deep) == 1.0


def test_A_diagonal_at_time_zero(disc, case_i):
    s = env.SpaceTimeTriple.make(disc, 0.0, (0.2, 0.0), (0.2, 0.0))
    with pytest.raises(DomainError):
        env.A_eval(case_i, disc, ONE, ONE, ONE, s)


def test_A_symmetric(disc, case_ii):
    rng = np.random.default_rng(0)
    for x, y in zip(geometry.random_points(disc, 40, rng), geometry.random_points(disc, 40, rng)):
        s = env.SpaceTimeTriple.make(disc, 1e-3, x, y)
        assert env.A_main(case_ii, s) == env.A_main(case_ii, s.swapped())
        assert env.A_cross(case_ii, s) == env.A_cross(case_ii, s.swapped())


# I1 / I2 / I3

@pytest.fixture(scope="module")
def boundary_triple(disc):
    return env.SpaceTimeTriple.make(disc, 1e-4, *pair(disc, 1e-3, 1e-3, 0.5))


def test_I1_against_oracle(disc, case_i, boundary_triple):
    s = boundary_triple
    tau, hi = s.tau(1.0), disc.eps1 * s.r
    ref = s.t * (one_sided_oracle(case_i, disc, s.x, s.y, tau, hi, tau)
                 + one_sided_oracle(case_i, disc, s.y, s.x, tau, hi, tau))
    assert env.I1_eval(case_i, disc, s) == pytest.approx(ref, rel=1e-4)


def test_I2_deep_interior_against_oracle(disc, case_i):
    s = env.SpaceTimeTriple.make(disc, 1e-6, (-0.3, 0.0), (0.3, 0.0))
    tau, hi = s.tau(1.0), disc.eps1 * s.r
    lo = min(max(s.dx, s.dy, tau), hi / 2)
    assert lo == hi / 2
    ref = env.A_main(case_i, s) + s.t * (one_sided_oracle(case_i, disc, s.x, s.y, lo, hi, tau)
                                         + one_sided_oracle(case_i, disc, s.y, s.x, lo, hi, tau))
    assert env.I2_eval(case_i, disc, s) == pytest.approx(ref, rel=1e-4)


def test_I3_against_oracle(disc, case_i, boundary_triple):
    s = boundary_triple
    m, tau = case_i, s.tau(1.0)
    L = min(max(s.dx, s.dy, tau), s.r)

    def side(dp, dq):
        ap, aq = max(dp, tau), max(dq, tau)
        f = lambda v: (m.phi0(aq / np.exp(v)) * m.phi2(np.exp(v) / s.r)
                       * m.ell(ap / np.exp(v)) * np.exp(-v))
        return m.phi1(ap / s.r) * scipy_quad(f, np.log(L), np.log(s.r), limit=200,
                                             epsrel=1e-11)[0]

    ref = env.A_main(m, s) + s.t * (side(s.dx, s.dy) + side(s.dy, s.dx))
    assert env.I3_eval(m, disc, s) == pytest.approx(ref, rel=1e-5)


def test_trivial_model_closed_forms(disc):
    m = KernelModel.stable(1.0)
    s = env.SpaceTimeTriple.make(disc, 1e-3, *pair(disc, 0.01, 0.2, 0.9))
    a, t = m.alpha, s.t
    hi = disc.eps1 * s.r
    assert env.I1_eval(m, disc, s) == pytest.approx(2 * t / a * (1 / t - hi ** -a), rel=1e-7)
    L = min(max(s.dx, s.dy, s.tau(a)), hi / 2)
    assert env.I2_eval(m, disc, s) == pytest.approx(1 + 2 * t / a * (L ** -a - hi ** -a), rel=1e-7)
    L3 = min(max(s.dx, s.dy, s.tau(a)), s.r)
    assert env.I3_eval(m, disc, s) == pytest.approx(1 + 2 * t / a * (L3 ** -a - s.r ** -a), rel=1e-7)


def test_I2_within_fifty_of_I1(disc, case_i, boundary_triple):
    i1 = env.I1_eval(case_i, disc, boundary_triple)
    i2 = env.I2_eval(case_i, disc, boundary_triple)
    assert max(i1, i2) / min(i1, i2) < 50


def test_quadrature_contract(disc, case_i, boundary_triple):
    tight = QuadratureSpec(rel_tol=1e-6)
    loose = QuadratureSpec(rel_tol=2e-6)
    a = env.I1_eval(case_i, disc, boundary_triple, tight)
    b = env.I1_eval(case_i, disc, boundary_triple, loose)
    assert abs(a - b) / a < 10 * 1e-6


def test_empty_range(disc, case_i):
    s = env.SpaceTimeTriple.make(disc, 0.5, (0.0, 0.0), (0.1, 0.0))
    for fn in (env.I1_eval, env.I2_eval, env.I3_eval):
        with pytest.raises(RangeError):
            fn(case_i, disc, s)


def test_equivalence_small_sample(disc, case_i):
    ss = sample_triples(disc, Sampling(n_triples=30, seed=4), case_i.alpha)
    for s in ss.triples:
        v = [f(case_i, disc, s) for f in (env.I1_eval, env.I2_eval, env.I3_eval)]
        assert max(v) / min(v) < 50


def test_lower_bounds(disc, case_i, case_ii):
    # one c per model over the sample
    for m in (case_i, case_ii):
        ss = sample_triples(disc, Sampling(n_triples=45, seed=9), m.alpha)
        a = [env.two_jump_expression(m, disc, s, lower="delta", weight="r") / env.A_cross(m, s)
             for s in ss.triples]
        b = [env.two_jump_expression(m, disc, s, lower="tau", weight="t") / env.A_main(m, s)
             for s in ss.triples]
        assert min(a) > 1e-2
        assert min(b) > 1e-2


# envelopes

def test_on_diagonal(disc, case_i):
    s = env.SpaceTimeTriple.make(disc, 0.1, (0.0, 0.0), (0.3, 0.0))
    ev = env.envelope_conservative(case_i, disc, s)
    assert ev.branch == env.ON_DIAGONAL
    assert ev.value == 0.1 ** -2


def test_conservative_trivial_bracket(disc):
    m = KernelModel.stable(1.0)
    s = env.SpaceTimeTriple.make(disc, 1e-4, *pair(disc, 0.05, 0.3, 1.2))
    ev = env.envelope_conservative(m, disc, s)
    t, r, a = s.t, s.r, 1.0
    w = min(t, r ** a)
    side = w * (t ** -1 - (disc.eps1 * r) ** -a) / a
    assert ev.branch == env.OFF_DIAGONAL
    assert ev.value == pytest.approx(min(t ** -2, t / r ** 3) * 2 * side, rel=1e-7)


def test_conservative_recomposes(disc, case_i, boundary_triple):
    ev = env.envelope_conservative(case_i, disc, boundary_triple)
    assert ev.value == pytest.approx(ev.reconstruct(), rel=1e-14)
    tm = ev.terms
    assert min(tm.stable_factor, tm.A_term, tm.two_jump_term_x, tm.two_jump_term_y) > 0


def test_case_i_example(disc, case_i):
    s = env.SpaceTimeTriple.make(disc, 1e-2, *pair(disc, 0.1, 0.2, 1.0))
    ev = env.envelope_case_i(case_i, disc, s)
    assert ev.value == pytest.approx(0.1 ** 0.4 * 0.2 ** 0.6 * 1e-2, rel=1e-9)
    assert ev.value == env.envelope_case_i(case_i, disc, s.swapped()).value
    deep = env.SpaceTimeTriple.make(disc, 1e-3, (-0.2, 0.0), (0.2, 0.0))
    assert env.envelope_case_i(case_i, disc, deep).value == pytest.approx(
        min(1e6, 1e-3 * 0.4 ** -3))


def test_case_ii_example(disc, case_ii):
    s = env.SpaceTimeTriple.make(disc, 1e-2, *pair(disc, 0.1, 0.2, 1.0))
    ev = env.envelope_case_ii(case_ii, disc, s)
    a = 0.1 ** 0.2 * 0.2 ** 1.8
    c = 1e-2 * 0.1 ** 0.2 * 0.2 ** 0.2
    assert ev.value == pytest.approx(1e-2 * (a + c), rel=1e-9)
    assert ev.terms.cross_term == pytest.approx(c, rel=1e-12)


def test_wrong_case(disc, case_i, case_ii):
    s = env.SpaceTimeTriple.make(disc, 1e-2, (0.0, 0.0), (0.5, 0.0))
    with pytest.raises(UsageError):
        env.envelope_case_i(case_ii, disc, s)
    with pytest.raises(UsageError):
        env.envelope_case_ii(case_i, disc, s)
    with pytest.raises(UsageError):
        env.envelope_case_iii(case_i, disc, s)


def borderline(beta1, beta4=0.0):
    phi2 = PL(1.0 + beta1, -beta4)
    return KernelModel(1.0, ScalingTriple(PL(beta1), phi2, ONE))


def test_case_iii_constant_phi(disc):
    m = borderline(0.3)
    s = env.SpaceTimeTriple.make(disc, 1e-4, *pair(disc, 1e-3, 0.05, 0.8))
    L = min(max(s.dx, s.dy, s.tau(1.0)), s.r)
    assert env.borderline_log_integral(m, s) == pytest.approx(np.log(s.r / L), rel=1e-7)


def test_case_iii_log_form(disc):
    beta4 = 1.0
    m = borderline(0.3, beta4)
    rng = np.random.default_rng(5)
    ratios = []
    for dx in np.geomspace(1e-5, 0.1, 6):
        for r in (0.2, 0.9):
            s = env.SpaceTimeTriple.make(disc, 1e-6, *pair(disc, dx, 0.1 * rng.uniform(0.5, 1), r))
            a = env.envelope_case_iii(m, disc, s).value
            b = env.envelope_case_iii_log_form(m, disc, s, beta4).value
            ratios.append(a / b)
    assert max(ratios) / min(ratios) < 10


def test_case_iii_on_diagonal(disc):
    m = borderline(0.3)
    s = env.SpaceTimeTriple.make(disc, 0.2, (0.1, 0.0), (0.0, 0.1))
    v = env.envelope_case_iii(m, disc, s).value
    assert 0.5 < v / 0.2 ** -2 < 2


def test_killed_small_time(disc):
    m = KernelModel.stable(1.5)
    x = np.array([0.99, 0.0])
    y = np.array([0.0, -0.5])
    s = env.SpaceTimeTriple.make(disc, 0.1, x, y)
    base = env.envelope_conservative(m, disc, s).value
    assert env.envelope_killed_small_time(m, disc, s, 0.0).value == base
    ev = env.envelope_killed_small_time(m, disc, s, 0.5)
    fx = (0.01 / 0.1 ** (2 / 3)) ** 0.5
    assert ev.terms.boundary_factor_x == pytest.approx(fx, rel=1e-12)
    assert ev.terms.boundary_factor_y == 1.0
    assert ev.value == pytest.approx(base * fx, rel=1e-12)
    deep = env.SpaceTimeTriple.make(disc, 0.01, (0.0, 0.5), (0.0, -0.5))
    assert (env.envelope_killed_small_time(m, disc, deep, 0.5).value
            == env.envelope_conservative(m, disc, deep).value)


def test_killed_large_time(disc):
    m = KernelModel.stable(1.5)
    s1 = env.SpaceTimeTriple.make(disc, 2.0, (0.5, 0.0), (0.0, 0.7))
    s2 = env.SpaceTimeTriple.make(disc, 4.0, (0.5, 0.0), (0.0, 0.7))
    lam = 3.0
    v1 = env.envelope_killed_large_time(m, disc, s1, 0.5, lam)
    v2 = env.envelope_killed_large_time(m, disc, s2, 0.5, lam)
    assert v2 / v1 == pytest.approx(np.exp(-lam * 2.0))
    assert v1 == pytest.approx(np.exp(-6.0) * (0.5 * 0.3) ** 0.5)
    edge = env.SpaceTimeTriple.make(disc, 2.0, (1.0, 0.0), (0.0, 0.7))
    assert env.envelope_killed_large_time(m, disc, edge, 0.5, lam) == 0.0


def test_survival_envelope(disc):
    m = KernelModel.stable(1.5)
    assert env.survival_envelope(m, disc, (0.96, 0.0), 1.0, 0.0) == 1.0
    assert env.survival_envelope(m, disc, (0.0, 0.0), 0.5, 0.5) == 1.0
    assert env.survival_envelope(m, disc, (0.96, 0.0), 1.0, 0.5) == pytest.approx(0.2)


def test_q_out_of_range(disc):
    m = KernelModel.stable(1.5)
    s = env.SpaceTimeTriple.make(disc, 0.1, (0.5, 0.0), (0.0, 0.5))
    with pytest.raises(DomainError):
        env.envelope_killed_small_time(m, disc, s, 1.7)


def test_envelope_symmetry(disc, case_i, case_ii):
    ss = sample_triples(disc, Sampling(n_triples=12, seed=2), 1.0)
    for s in ss.triples:
        assert (env.envelope_conservative(case_i, disc, s).value
                == env.envelope_conservative(case_i, disc, s.swapped()).value)
        assert (env.envelope_case_ii(case_ii, disc, s).value
                == env.envelope_case_ii(case_ii, disc, s.swapped()).value)


def test_batch_rows(disc, case_i):
    ss = sample_triples(disc, Sampling(n_triples=6, seed=1), 1.0)
    rows = env.envelope_rows(case_i, disc, ss.triples)
    assert len(rows) == 6
    for row in rows:
        assert {"t", "delta_x", "delta_y", "r", "branch", "value"} <= set(row)
