"""Green's function of the Laplace-Beltrami operator on the unit sphere.

    G(z, z') = -(1/4pi) ln D + ln2/(4pi),
    D = 1 - cos th cos th' - sin th sin th' cos(ph - ph')

with the local split ``G = Gamma + H`` where

    Gamma(z, z') = -(1/4pi) ln((th - th')**2 + (ph - ph')**2 sin(th)**2).

Gamma takes the sine of the *first* argument, so it and H are not symmetric
and every derivative here is a first-slot derivative. ``D`` is always
evaluated in its haversine form,
``2 [sin^2(dth/2) + sin th sin th' sin^2(dph/2)]``, which has no
cancellation for nearby points.

The diagonal value of H is ``ln2/(2pi)``: ``D ~ rho^2/2`` near the diagonal,
so ``-(1/4pi) ln(D/rho^2) -> ln2/(4pi)`` adds to the constant ``ln2/(4pi)``
already in G.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError, SingularityError
from .sphere_geom import (SpherePoint, cap_quadrature, check_pole_guard,
                          wrap_angle)

FOUR_PI = 4.0 * math.pi
LN2_4PI = math.log(2.0) / FOUR_PI
#: Diagonal value of the regular part H.
H_DIAG = math.log(2.0) / (2.0 * math.pi)
#: Locality radius for H.
H_DELTA = 0.3
_RICHARDSON_OFFSETS = (1e-3, 1e-4, 1e-5)


@dataclass(frozen=True)
class KernelEval:
    """Value and first-slot partial derivatives of a kernel."""

    value: float
    d_theta: float
    d_phi: float


@dataclass(frozen=True)
class RobinData:
    """Disk-averaged behaviour of H at a point.

    ``d_theta_avg`` is the limit, as the averaging cap shrinks, of the mean
    of the first-slot derivative of ``H(center, .)`` over the cap.
    """

    point: SpherePoint
    h_diag: float
    d_theta_avg: float
    disk_radius: float
    error_estimate: float


# ---------------------------------------------------------------- arrays

def d_stable(th, ph, th2, ph2):
    """Haversine form of D (vectorised)."""
    s1 = np.sin(0.5 * (np.asarray(th) - th2))
    s2 = np.sin(0.5 * (np.asarray(ph) - ph2))
    return 2.0 * (s1 * s1 + np.sin(th) * np.sin(th2) * s2 * s2)


def d_grad(th, ph, th2, ph2):
    """First-slot (dD/dth, dD/dph), stable form."""
    dph = np.asarray(ph) - ph2
    s2 = np.sin(0.5 * dph)
    dth = np.sin(np.asarray(th) - th2) + 2.0 * np.cos(th) * np.sin(th2) * s2 * s2
    dphi = np.sin(th) * np.sin(th2) * np.sin(dph)
    return dth, dphi


def green_value(th, ph, th2, ph2):
    return -np.log(d_stable(th, ph, th2, ph2)) / FOUR_PI + LN2_4PI


def green_grad(th, ph, th2, ph2):
    """First-slot gradient of G: -(1/4pi) grad D / D."""
    d = d_stable(th, ph, th2, ph2)
    gt, gp = d_grad(th, ph, th2, ph2)
    return -gt / (FOUR_PI * d), -gp / (FOUR_PI * d)


def _rho2(th, ph, th2, ph2):
    dth = np.asarray(th) - th2
    dph = wrap_angle(np.asarray(ph) - ph2)
    st = np.sin(th)
    return dth, dph, dth * dth + dph * dph * st * st


def gamma_value(th, ph, th2, ph2):
    return -np.log(_rho2(th, ph, th2, ph2)[2]) / FOUR_PI


def gamma_grad(th, ph, th2, ph2):
    dth, dph, r2 = _rho2(th, ph, th2, ph2)
    st, ct = np.sin(th), np.cos(th)
    gt = -(2.0 * dth + 2.0 * dph * dph * st * ct) / (FOUR_PI * r2)
    gp = -(2.0 * dph * st * st) / (FOUR_PI * r2)
    return gt, gp


def h_value(th, ph, th2, ph2):
    """H off the diagonal as -(1/4pi) ln(D/rho^2) + ln2/(4pi)."""
    r2 = _rho2(th, ph, th2, ph2)[2]
    return -np.log(d_stable(th, ph, th2, ph2) / r2) / FOUR_PI + LN2_4PI


def h_grad(th, ph, th2, ph2):
    gt, gp = green_grad(th, ph, th2, ph2)
    ct, cp = gamma_grad(th, ph, th2, ph2)
    return gt - ct, gp - cp


def robin_slope(theta):
    """Closed form of the cap-averaged first-slot d/dtheta of H: cot(th)/(16 pi)."""
    return np.cos(theta) / (np.sin(theta) * 4.0 * FOUR_PI)


def robin_potential(theta):
    """Self-energy potential h with h(pi/2) = H_DIAG and h' = 2 robin_slope."""
    return H_DIAG + np.log(np.sin(theta)) / (2.0 * FOUR_PI)


# ---------------------------------------------------------------- scalar API

def _coincident(z, zp):
    return z.colatitude == zp.colatitude and wrap_angle(z.longitude - zp.longitude) == 0.0


def green_G(z, zp):
    """G(z, z') with first-slot derivatives."""
    if _coincident(z, zp):
        raise SingularityError("G evaluated at coincident points")
    args = (z.colatitude, z.longitude, zp.colatitude, zp.longitude)
    d = float(d_stable(*args))
    if d <= 0.0:
        raise SingularityError("G evaluated at coincident points")
    gt, gp = green_grad(*args)
    return KernelEval(float(green_value(*args)), float(gt), float(gp))


def gamma_local(z, zp):
    """Gamma(z, z') with first-slot derivatives (sine of the first argument)."""
    if _coincident(z, zp):
        raise SingularityError("Gamma evaluated at coincident points")
    args = (z.colatitude, z.longitude, zp.colatitude, zp.longitude)
    gt, gp = gamma_grad(*args)
    return KernelEval(float(gamma_value(*args)), float(gt), float(gp))


def h_diagonal(z):
    """H(z, z) by extrapolation of off-diagonal values.

    Offsets are taken symmetrically in both chart directions so that odd
    terms cancel, then a quadratic in the offset is extrapolated to zero.
    """
    th, ph = z.colatitude, z.longitude
    vals = []
    for h in _RICHARDSON_OFFSETS:
        acc = 0.0
        for dt, dp in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
            acc += float(h_value(th + dt, ph + dp / math.sin(th), th, ph))
        vals.append(acc / 4.0)
    coef = np.polyfit(np.array(_RICHARDSON_OFFSETS), np.array(vals), 2)
    return float(coef[-1])


def regular_H(z, zp, delta=H_DELTA):
    """H(z, z') = G - Gamma for points within ``delta`` of each other.

    On the diagonal the value comes from :func:`h_diagonal` and the
    derivatives are the cap-averaged limits ``(robin_slope, 0)``, since the
    pointwise limit depends on the approach direction.
    """
    x = np.array([math.sin(z.colatitude) * math.cos(z.longitude),
                  math.sin(z.colatitude) * math.sin(z.longitude),
                  math.cos(z.colatitude)])
    y = np.array([math.sin(zp.colatitude) * math.cos(zp.longitude),
                  math.sin(zp.colatitude) * math.sin(zp.longitude),
                  math.cos(zp.colatitude)])
    sep = math.atan2(np.linalg.norm(np.cross(x, y)), float(x @ y))
    if sep > delta:
        raise DomainError(f"H requested at separation {sep:.3g} > delta={delta}")
    if _coincident(z, zp):
        return KernelEval(h_diagonal(z), float(robin_slope(z.colatitude)), 0.0)
    args = (z.colatitude, z.longitude, zp.colatitude, zp.longitude)
    gt, gp = h_grad(*args)
    return KernelEval(float(h_value(*args)), float(gt), float(gp))


def _cap_mean_dtheta(center, r, n_r, n_a):
    grid = cap_quadrature(center, r, n_r, n_a)
    gt, _ = h_grad(center.colatitude, center.longitude, grid.theta, grid.phi)
    return float(np.sum(grid.weights * gt) / grid.total_weight)


def robin_theta_derivative(center, disk_radius=1e-2, n_r=24, n_a=64):
    """Cap-averaged first-slot theta-derivative of H at ``center``.

    The mean over caps of radius r and r/2 is extrapolated to r -> 0
    assuming an O(r^2) leading error; the error estimate is the size of
    the extrapolation correction.
    """
    check_pole_guard(center)
    r = float(disk_radius)
    if not 0.0 < r <= 0.2:
        raise DomainError("disk_radius must lie in (0, 0.2]")
    a1 = _cap_mean_dtheta(center, r, n_r, n_a)
    a2 = _cap_mean_dtheta(center, 0.5 * r, n_r, n_a)
    d0 = (4.0 * a2 - a1) / 3.0
    err = abs(d0 - a2)
    scale = max(abs(d0), 1e-300)
    if not math.isfinite(d0) or (err > 1e-3 * scale and err > 1e-9):
        raise DomainError(
            f"cap-average extrapolation did not settle (correction {err:.3g})")
    return RobinData(center, H_DIAG, d0, r, err)


def laplace_beltrami_fd(f, p, h=1e-3, order=2):
    """Finite-difference Laplace-Beltrami of ``f(theta, phi)`` at ``p``.

    ``order=2`` is the plain conservative stencil; ``order=4`` combines
    steps h and h/2 by Richardson extrapolation. Returns ``Delta f``
    (so ``Delta cos(theta) = -2 cos(theta)``).
    """
    if order not in (2, 4):
        raise DomainError("order must be 2 or 4")
    if order == 4:
        return (4.0 * laplace_beltrami_fd(f, p, 0.5 * h) - laplace_beltrami_fd(f, p, h)) / 3.0
    th, ph = p.colatitude, p.longitude
    f0 = f(th, ph)
    st = math.sin(th)
    radial = (math.sin(th + 0.5 * h) * (f(th + h, ph) - f0)
              - math.sin(th - 0.5 * h) * (f0 - f(th - h, ph))) / (h * h * st)
    azim = (f(th, ph + h) - 2.0 * f0 + f(th, ph - h)) / (h * h * st * st)
    return float(radial + azim)
