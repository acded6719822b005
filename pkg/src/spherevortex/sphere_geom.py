"""Coordinates on the unit sphere.

Points use the colatitude/longitude chart ``(theta, phi)`` with embedding
``(sin theta cos phi, sin theta sin phi, cos theta)``. The poles are chart
singularities, so anything that needs a well-defined local frame refuses
points inside a small guard band around them.

Besides the scalar API built on :class:`SpherePoint` the module exposes a
few vectorised helpers (``cartesian``, ``wrap_angle``, ``frame_vectors``)
that the heavier modules use on arrays.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError

POLE_GUARD = 1e-6
TWO_PI = 2.0 * math.pi


def wrap_angle(x):
    """Reduce angles to the half-open interval (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def normalize_longitude(phi):
    """Map a longitude into [0, 2 pi)."""
    y = np.mod(phi, TWO_PI)
    # mod can round up to exactly 2 pi for tiny negative inputs
    y = np.where(y >= TWO_PI, 0.0, y)
    return float(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class SpherePoint:
    """A point on the sphere; the longitude is normalised on construction."""

    colatitude: float
    longitude: float = 0.0

    def __post_init__(self):
        th = float(self.colatitude)
        ph = float(self.longitude)
        if not (math.isfinite(th) and math.isfinite(ph)):
            raise DomainError(f"non-finite coordinates ({th}, {ph})")
        if not 0.0 < th < math.pi:
            raise DomainError(f"colatitude {th} outside (0, pi)")
        object.__setattr__(self, "colatitude", th)
        object.__setattr__(self, "longitude", normalize_longitude(ph))

    @property
    def theta(self):
        return self.colatitude

    @property
    def phi(self):
        return self.longitude

    def as_tuple(self):
        return (self.colatitude, self.longitude)


def check_pole_guard(p, guard=POLE_GUARD):
    """Raise :class:`DomainError` when ``p`` lies inside the pole guard band."""
    if not guard <= p.colatitude <= math.pi - guard:
        raise DomainError(
            f"colatitude {p.colatitude!r} inside the pole guard band ({guard})")


def cartesian(theta, phi):
    """Vectorised embedding; the last axis of the result has length 3."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def spherical(x):
    """Inverse of :func:`cartesian` for (..., 3) arrays (no normalisation)."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(rho, x[..., 2])
    phi = normalize_longitude(np.arctan2(x[..., 1], x[..., 0]))
    return theta, phi


def frame_vectors(theta, phi):
    """Orthonormal frame ``(e_theta, e_phi, e_r)`` at the given point(s)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_p = np.stack([-sp, cp, np.zeros_like(cp)], axis=-1)
    e_r = np.stack([st * cp, st * sp, ct], axis=-1)
    return e_t, e_p, e_r


def to_cartesian(p):
    """Unit 3-vector of a :class:`SpherePoint`."""
    return cartesian(p.colatitude, p.longitude)


def from_cartesian(x):
    """:class:`SpherePoint` of a non-zero 3-vector (normalised first)."""
    x = np.asarray(x, dtype=float)
    th, ph = spherical(x / np.linalg.norm(x))
    return SpherePoint(float(th), float(ph))


def angle_between(x, y):
    """Angle between unit vectors; atan2 form, accurate at 0 and pi."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.linalg.norm(np.cross(x, y), axis=-1)
    d = np.sum(x * y, axis=-1)
    return np.arctan2(c, d)


def geodesic_distance(p, q):
    """Great-circle distance between two points, in [0, pi]."""
    return float(angle_between(to_cartesian(p), to_cartesian(q)))


@dataclass(frozen=True)
class TangentOffset:
    """Offset in a local tangent chart: (d_theta, d_phi * sine factor)."""

    d_theta: float
    d_phi_scaled: float

    @property
    def norm(self):
        return math.hypot(self.d_theta, self.d_phi_scaled)

    def as_array(self):
        return np.array([self.d_theta, self.d_phi_scaled])


def tangent_offset(center, p, sine_mode="at_point"):
    """Chart offset of ``p`` relative to ``center``.

    ``sine_mode='at_point'`` scales the longitude difference by the sine of
    the moving point's colatitude; ``'at_center'`` uses the centre's. The
    first is exactly area preserving, the second is the frozen-coefficient
    version.
    """
    if sine_mode not in ("at_point", "at_center"):
        raise DomainError(f"unknown sine_mode {sine_mode!r}")
    dth = p.colatitude - center.colatitude
    dph = wrap_angle(p.longitude - center.longitude)
    if abs(dth) >= math.pi / 2 or abs(dph) >= math.pi / 2:
        raise DomainError("offset outside the local chart")
    s = math.sin(p.colatitude if sine_mode == "at_point" else center.colatitude)
    return TangentOffset(dth, dph * s)


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and positive weights of a surface quadrature rule.

    ``radial_nodes``/``radial_weights`` are the 1-D Gauss rule in the
    radial variable (with the area Jacobian folded in) so the polynomial
    exactness of the underlying rule can be checked directly.
    """

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    points: np.ndarray = field(repr=False)
    radial_nodes: np.ndarray = field(default=None, repr=False)
    radial_weights: np.ndarray = field(default=None, repr=False)

    @property
    def nodes(self):
        return [SpherePoint(t, f) for t, f in zip(self.theta, self.phi)]

    @property
    def total_weight(self):
        return float(np.sum(self.weights))

    def integrate(self, f):
        """Sum of ``w_i f(theta_i, phi_i)``; ``f`` must accept arrays."""
        return float(np.sum(self.weights * f(self.theta, self.phi)))


def _gauss_radial(radius, n_r):
    x, w = np.polynomial.legendre.leggauss(n_r)
    return 0.5 * radius * (x + 1.0), 0.5 * radius * w


def _symmetric_circle(n_a):
    """cos/sin of 2 pi j/n_a, symmetrised so that mirror nodes match exactly."""
    a = TWO_PI * np.arange(n_a) / n_a
    ca, sa = np.cos(a), np.sin(a)
    mirror = (-np.arange(n_a)) % n_a  # alpha -> -alpha
    sa = 0.5 * (sa - sa[mirror])
    ca = 0.5 * (ca + ca[mirror])
    if n_a % 2 == 0:
        flip = (n_a // 2 - np.arange(n_a)) % n_a  # alpha -> pi - alpha
        ca = 0.5 * (ca - ca[flip])
        sa = 0.5 * (sa + sa[flip])
    return ca, sa


def cap_quadrature(center, radius_tangent, n_r, n_a, guard=POLE_GUARD):
    """Product rule on the geodesic cap of radius ``radius_tangent``.

    Gauss-Legendre in the geodesic radius, the trapezoid rule in the polar
    angle. Weights include ``sin(rho)`` so they sum to the exact cap area
    ``2 pi (1 - cos r)``, which differs from ``pi r**2`` by O(r**4).
    """
    n_r, n_a = int(n_r), int(n_a)
    if n_r < 1 or n_a < 1:
        raise DomainError("n_r and n_a must be positive")
    r = float(radius_tangent)
    if not 0.0 < r < math.pi / 2:
        raise DomainError(f"cap radius {r} out of range")
    check_pole_guard(center, guard)
    if center.colatitude - r < guard or center.colatitude + r > math.pi - guard:
        raise DomainError("cap touches a pole")
    rho, wr = _gauss_radial(r, n_r)
    ca, sa = _symmetric_circle(n_a)
    e_t, e_p, c = frame_vectors(center.colatitude, center.longitude)
    sr, cr = np.sin(rho)[:, None], np.cos(rho)[:, None]
    dirs = ca[:, None] * e_t + sa[:, None] * e_p  # (n_a, 3)
    pts = cr[..., None] * c + sr[..., None] * dirs[None, :, :]
    w = (wr * np.sin(rho))[:, None] * np.full(n_a, TWO_PI / n_a)[None, :]
    pts = pts.reshape(-1, 3)
    th, ph = spherical(pts)
    return QuadratureGrid(th, ph, w.ravel(), pts, rho, wr * np.sin(rho) * TWO_PI)


def chart_disk_quadrature(center, radius, n_r, n_a, guard=POLE_GUARD):
    """Product rule on the disk ``|A(z - center)| < radius`` of the area chart.

    The chart ``(d theta, d phi sin theta)`` preserves area exactly, so the
    weights sum to ``pi radius**2`` up to rounding.
    """
    n_r, n_a = int(n_r), int(n_a)
    if n_r < 1 or n_a < 1:
        raise DomainError("n_r and n_a must be positive")
    r = float(radius)
    check_pole_guard(center, guard)
    if center.colatitude - r < guard or center.colatitude + r > math.pi - guard:
        raise DomainError("disk touches a pole")
    rr, wr = _gauss_radial(r, n_r)
    ca, sa = _symmetric_circle(n_a)
    x1 = rr[:, None] * ca[None, :]
    x2 = rr[:, None] * sa[None, :]
    th = center.colatitude + x1
    ph = center.longitude + x2 / np.sin(th)
    w = (wr * rr)[:, None] * np.full(n_a, TWO_PI / n_a)[None, :]
    th, ph = th.ravel(), ph.ravel()
    return QuadratureGrid(th, normalize_longitude(ph), w.ravel(),
                          cartesian(th, ph), rr, wr * rr * TWO_PI)
