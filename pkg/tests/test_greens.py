import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from spherevortex.errors import DomainError, SingularityError
from spherevortex.greens import (H_DIAG, gamma_local, green_G, green_grad, green_value,
                                 h_diagonal, laplace_beltrami_fd, regular_H,
                                 robin_potential, robin_slope, robin_theta_derivative)
from spherevortex.sphere_geom import SpherePoint

LN2_4PI = math.log(2) / (4 * math.pi)
colat = st.floats(0.1, math.pi - 0.1)
lon = st.floats(0.0, 2 * math.pi)


def mp_h_offset(th, ph, dth, dph, dps=60):
    """G - Gamma at a tiny offset, in extended precision (independent oracle)."""
    with mp.workdps(dps):
        t1, p1 = mp.mpf(th) + dth, mp.mpf(ph) + dph
        t2, p2 = mp.mpf(th), mp.mpf(ph)
        d = 1 - mp.cos(t1) * mp.cos(t2) - mp.sin(t1) * mp.sin(t2) * mp.cos(p1 - p2)
        g = -mp.log(d) / (4 * mp.pi) + mp.log(2) / (4 * mp.pi)
        gam = -mp.log((t1 - t2) ** 2 + (p1 - p2) ** 2 * mp.sin(t1) ** 2) / (4 * mp.pi)
        return g - gam


def test_G_examples():
    e = SpherePoint(math.pi / 2, 0.0)
    assert abs(green_G(e, SpherePoint(math.pi / 2, math.pi)).value) < 1e-16
    assert green_G(e, SpherePoint(math.pi / 2, math.pi / 2)).value == pytest.approx(LN2_4PI, rel=1e-15)
    assert LN2_4PI == pytest.approx(0.0551589, abs=1e-7)


def test_G_coincident():
    z = SpherePoint(1.0, 2.0)
    with pytest.raises(SingularityError):
        green_G(z, z)
    with pytest.raises(SingularityError):
        gamma_local(z, z)


@given(colat, lon)
def test_G_vanishes_at_antipode(th, ph):
    assert abs(float(green_value(th, ph, math.pi - th, ph + math.pi))) < 1e-14


@given(colat, lon, colat, lon)
def test_G_symmetric(t1, p1, t2, p2):
    if abs(t1 - t2) + abs(p1 - p2) < 1e-6:
        return
    a = float(green_value(t1, p1, t2, p2))
    b = float(green_value(t2, p2, t1, p1))
    assert abs(a - b) <= 1e-15 * max(1.0, abs(a))


@given(colat, lon, colat, lon, st.floats(-3, 3))
def test_G_rotation_invariant(t1, p1, t2, p2, shift):
    if abs(t1 - t2) + abs(p1 - p2) < 1e-3:
        return
    a = float(green_value(t1, p1, t2, p2))
    b = float(green_value(t1, p1 + shift, t2, p2 + shift))
    assert abs(a - b) < 1e-13 * max(1.0, abs(a))


def test_G_depends_on_distance_only():
    # two pairs at the same separation 0.7 in different places
    a = float(green_value(0.4, 0.0, 1.1, 0.0))
    b = float(green_value(math.pi / 2, 1.0, math.pi / 2, 1.7))
    assert a == pytest.approx(b, abs=1e-14)
    assert a == pytest.approx(-math.log(1 - math.cos(0.7)) / (4 * math.pi) + LN2_4PI, abs=1e-15)


def test_G_gradient_fd(rng):
    h = 1e-6
    for _ in range(50):
        t1, t2 = rng.uniform(0.3, 2.8, 2)
        p1, p2 = rng.uniform(0, 6.28, 2)
        gt, gp = (float(v) for v in green_grad(t1, p1, t2, p2))
        ft = (green_value(t1 + h, p1, t2, p2) - green_value(t1 - h, p1, t2, p2)) / (2 * h)
        fp = (green_value(t1, p1 + h, t2, p2) - green_value(t1, p1 - h, t2, p2)) / (2 * h)
        scale = max(abs(gt), abs(gp), 1e-3)
        assert abs(gt - ft) < 1e-8 * scale + 1e-10
        assert abs(gp - fp) < 1e-8 * scale + 1e-10


def test_gamma_examples():
    h, t0, p0 = 1e-3, 1.0, 0.5
    assert gamma_local(SpherePoint(t0 + h, p0), SpherePoint(t0, p0)).value == \
        pytest.approx(-math.log(h) / (2 * math.pi), rel=1e-14)
    assert gamma_local(SpherePoint(math.pi / 2, p0 + h), SpherePoint(math.pi / 2, p0)).value == \
        pytest.approx(-math.log(h) / (2 * math.pi), rel=1e-12)


def test_gamma_first_slot_asymmetry():
    a, b = SpherePoint(math.pi / 3, 0.1), SpherePoint(math.pi / 4, 0.0)
    ab, ba = gamma_local(a, b).value, gamma_local(b, a).value
    # frozen from the closed form with sin of the first argument
    exp_ab = -math.log((math.pi / 12) ** 2 + 0.01 * math.sin(math.pi / 3) ** 2) / (4 * math.pi)
    exp_ba = -math.log((math.pi / 12) ** 2 + 0.01 * math.sin(math.pi / 4) ** 2) / (4 * math.pi)
    assert ab == pytest.approx(exp_ab, rel=1e-14)
    assert ba == pytest.approx(exp_ba, rel=1e-14)
    assert abs(ab - ba) > 1e-3


def test_gamma_gradient_fd():
    a, b = SpherePoint(1.0, 0.2), SpherePoint(1.15, 0.05)
    k = gamma_local(a, b)
    h = 1e-6
    ft = (gamma_local(SpherePoint(1.0 + h, 0.2), b).value - gamma_local(SpherePoint(1.0 - h, 0.2), b).value) / (2 * h)
    fp = (gamma_local(SpherePoint(1.0, 0.2 + h), b).value - gamma_local(SpherePoint(1.0, 0.2 - h), b).value) / (2 * h)
    assert k.d_theta == pytest.approx(ft, rel=1e-8)
    assert k.d_phi == pytest.approx(fp, rel=1e-8)


def test_h_diag_matches_extended_precision_oracle():
    # at 1e-20 the extended-precision G - Gamma is the diagonal limit to ~1e-20
    oracle = float(mp_h_offset(math.pi / 3, 1.0, mp.mpf("1e-20"), 0))
    assert oracle == pytest.approx(math.log(2) / (2 * math.pi), abs=1e-15)
    assert h_diagonal(SpherePoint(math.pi / 3, 1.0)) == pytest.approx(oracle, abs=1e-9)
    assert H_DIAG == pytest.approx(oracle, abs=1e-15)


@pytest.mark.parametrize("th", [0.4, math.pi / 2, 2.5])
def test_h_diag_direction_independent(th):
    a = float(mp_h_offset(th, 0.0, mp.mpf("1e-25"), 0))
    b = float(mp_h_offset(th, 0.0, 0, mp.mpf("1e-25") / mp.sin(th)))
    assert abs(a - b) < 1e-10
    assert h_diagonal(SpherePoint(th, 0.0)) == pytest.approx(a, abs=1e-9)


def test_regular_H():
    z = SpherePoint(math.pi / 3, 1.0)
    assert regular_H(z, z).value == pytest.approx(H_DIAG, abs=1e-9)
    near = regular_H(SpherePoint(math.pi / 2 + 1e-4, 0.0), SpherePoint(math.pi / 2, 0.0))
    assert math.isfinite(near.value) and near.value == pytest.approx(H_DIAG, abs=1e-6)
    with pytest.raises(DomainError):
        regular_H(SpherePoint(1.0, 0.0), SpherePoint(1.5, 0.0))


def test_robin_derivative_equator_zero():
    r = robin_theta_derivative(SpherePoint(math.pi / 2, 0.3))
    assert abs(r.d_theta_avg) < 1e-8


def test_robin_derivative_stable_and_antisymmetric():
    a = robin_theta_derivative(SpherePoint(math.pi / 4, 0.0), 1e-2).d_theta_avg
    b = robin_theta_derivative(SpherePoint(math.pi / 4, 0.0), 1e-3).d_theta_avg
    c = robin_theta_derivative(SpherePoint(3 * math.pi / 4, 0.0), 1e-2).d_theta_avg
    assert abs(a) > 1e-3
    assert abs(a - b) < 1e-5
    assert abs(a + c) < 1e-6
    assert a == pytest.approx(float(robin_slope(math.pi / 4)), rel=1e-5)


def test_robin_guards():
    with pytest.raises(DomainError):
        robin_theta_derivative(SpherePoint(1e-7, 0.0))
    with pytest.raises(DomainError):
        robin_theta_derivative(SpherePoint(1.0, 0.0), disk_radius=0.5)


def test_robin_potential_slope():
    th, h = 0.9, 1e-5
    fd = (robin_potential(th + h) - robin_potential(th - h)) / (2 * h)
    assert fd == pytest.approx(2 * robin_slope(th), rel=1e-9)
    assert robin_potential(math.pi / 2) == pytest.approx(H_DIAG, abs=1e-16)


def test_averaged_H_smooth_in_centre():
    # derivative of the cap-averaged slope is stable under cap refinement
    def slope(th, r):
        return robin_theta_derivative(SpherePoint(th, 0.0), r).d_theta_avg

    h = 1e-3
    d1 = (slope(1.0 + h, 1e-2) - slope(1.0 - h, 1e-2)) / (2 * h)
    d2 = (slope(1.0 + h, 5e-3) - slope(1.0 - h, 5e-3)) / (2 * h)
    assert abs(d1 - d2) < 1e-6


def test_lb_fd_examples():
    p = SpherePoint(0.8, 0.3)
    assert laplace_beltrami_fd(lambda t, f: math.cos(t), p) == pytest.approx(-2 * math.cos(0.8), abs=1e-6)
    assert abs(laplace_beltrami_fd(lambda t, f: 3.0, p)) < 1e-10
    with pytest.raises(DomainError):
        laplace_beltrami_fd(lambda t, f: 1.0, p, order=3)


def test_lb_fd_second_order():
    f = lambda t, p: math.cos(t) ** 3 * math.sin(2 * p)
    p = SpherePoint(1.0, 0.4)
    errs = []
    # reference from a fine fourth-order evaluation
    exact = laplace_beltrami_fd(f, p, h=1e-3, order=4)
    for h in (4e-2, 2e-2):
        errs.append(abs(laplace_beltrami_fd(f, p, h) - exact))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_minus_laplacian_of_G(rng):
    worst = 0.0
    n = 0
    while n < 100:
        t1, t2 = rng.uniform(0.3, 2.8, 2)
        p1, p2 = rng.uniform(0, 2 * math.pi, 2)
        if math.acos(math.cos(t1) * math.cos(t2) + math.sin(t1) * math.sin(t2) * math.cos(p1 - p2)) < 0.1:
            continue
        n += 1
        g = lambda t, p: float(green_value(t, p, t2, p2))
        val = -laplace_beltrami_fd(g, SpherePoint(t1, p1), h=1e-3, order=4)
        worst = max(worst, abs(val + 1 / (4 * math.pi)))
    assert worst < 1e-5
