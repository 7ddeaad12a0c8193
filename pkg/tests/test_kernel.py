import numpy as np
import pytest
from hypothesis import given, strategies as st

from hklab import envelope as env, geometry
from hklab.errors import ConfigError, DomainError
from hklab.kernel import (CASE_I, CASE_II, GENERAL, B_diag, B_eval, B_from_parts,
                          J_eval, KernelModel, kappa_eval)
from hklab.scaling import ScalingFunction


def test_trivial_B(disc):
    m = KernelModel.stable(1.0)
    assert B_eval(m, disc, (0.9, 0.0), (-0.5, 0.3)) == 1.0


def test_B_example(case_i):
    # delta 0.1 and 0.2 at distance 1
    m = KernelModel.power(1.0, 0.4, 0.6)
    v = float(B_from_parts(m, 0.1, 0.2, 1.0))
    assert v == pytest.approx(0.1 ** 0.4 * 0.2 ** 0.6, rel=1e-14)
    assert v == pytest.approx(0.15157, abs=5e-5)


def test_B_example_on_disc(case_i, disc):
    x, y = np.array([0.9, 0.0]), np.array([0.0, -0.8])
    r = np.linalg.norm(x - y)
    expect = min(0.1 / r, 1) ** 0.4 * min(0.2 / r, 1) ** 0.6
    assert B_eval(case_i, disc, x, y) == pytest.approx(expect, rel=1e-14)


def test_deep_interior(case_i, disc):
    assert B_eval(case_i, disc, (0.0, 0.0), (0.1, 0.0)) == 1.0
    assert B_diag(case_i, disc, (0.3, 0.3)) == 1.0


def test_J_values(disc, case_i):
    m = KernelModel.stable(1.0)
    assert J_eval(m, disc, (0.0, 0.0), (0.5, 0.0)) == pytest.approx(8.0)
    assert float(B_from_parts(case_i, 0.1, 0.2, 1.0)) * 1.0 ** -3 == pytest.approx(0.15157, abs=5e-5)


def test_diagonal_rejected(disc, case_i):
    with pytest.raises(DomainError):
        B_eval(case_i, disc, (0.1, 0.1), (0.1, 0.1))
    with pytest.raises(DomainError):
        J_eval(case_i, disc, (0.1, 0.1), (0.1, 0.1))


def test_symmetry(disc, case_i):
    rng = np.random.default_rng(1)
    x = geometry.random_points(disc, 2000, rng)
    y = geometry.random_points(disc, 2000, rng)
    np.testing.assert_array_equal(B_eval(case_i, disc, x, y), B_eval(case_i, disc, y, x))
    np.testing.assert_array_equal(J_eval(case_i, disc, x, y), J_eval(case_i, disc, y, x))


def test_B4a_upper_bound(disc):
    ell = ScalingFunction.power_log(0, -0.5, 0, 0)
    m = KernelModel.power(1.0, 0.4, 0.6, ell=ell)
    rng = np.random.default_rng(2)
    n = 100_000
    x = geometry.random_points(disc, n, rng)
    y = geometry.random_points(disc, n, rng)
    y[: n // 2] = geometry.points_at_depth(disc, 10 ** rng.uniform(-6, -0.5, n // 2), rng)
    dx, dy = disc.delta(x), disc.delta(y)
    r = np.linalg.norm(x - y, axis=1)
    ratio = B_from_parts(m, dx, dy, r) / m.phi0(np.minimum(dx, dy) / r)
    assert ratio.max() < 10


def test_B_matches_A_at_time_zero(disc, case_i):
    rng = np.random.default_rng(3)
    for x, y in zip(geometry.random_points(disc, 50, rng), geometry.random_points(disc, 50, rng)):
        s = env.SpaceTimeTriple.make(disc, 0.0, x, y)
        a = env.A_eval(case_i, disc, case_i.phi1, case_i.phi2, case_i.ell, s)
        assert a == pytest.approx(B_eval(case_i, disc, x, y), rel=1e-13)


def test_kappa(disc):
    assert kappa_eval(KernelModel.stable(1.5), disc, (0.9, 0.0)) == 0.0
    m = KernelModel.stable(1.5, 0.3)
    assert kappa_eval(m, disc, (0.9, 0.0)) == pytest.approx(0.3 * 0.1 ** -1.5, rel=1e-12)
    assert kappa_eval(m, disc, (0.9, 0.0)) == pytest.approx(9.4868, abs=1e-4)
    big = geometry.ball(radius=3.0)
    assert kappa_eval(m, big, (1.0, 0.0)) == 0.3


def test_case_tags():
    assert KernelModel.power(1.0, 0.4, 0.6).case_tag == CASE_I
    assert KernelModel.power(1.0, 0.2, 1.8).case_tag == CASE_II
    assert KernelModel.power(1.0, 0.2, 1.2).case_tag == GENERAL
    assert KernelModel.power(1.0, 0.4, 0.6).upper_gap_ok


def test_killable():
    with pytest.raises(ConfigError):
        KernelModel.stable(0.8).check_killable()
    KernelModel.stable(0.8, 0.1).check_killable()
    KernelModel.stable(1.5).check_killable()


@given(alpha=st.one_of(st.floats(-1, 0), st.floats(2, 5)))
def test_alpha_range(alpha):
    with pytest.raises(ConfigError):
        KernelModel.stable(alpha)
