"""Contour dynamics of uniform-vorticity patches on the sphere.

Each boundary is stored as geodesic polar radii ``rho`` on equispaced
angles ``alpha`` about a centre ``c`` that follows the patch's area
centroid, in the frame ``(e_theta(c), e_phi(c), c)``::

    y(alpha) = cos(rho) c + sin(rho) (cos(alpha) e_theta + sin(alpha) e_phi)

Only the normal velocity moves a curve, so tangential slip of fluid along
the boundary is never tracked and the radii evolve by

    drho/dt = (u - dy/dt|rho) . n / (e_rho . n)

with ``dy/dt|rho`` the motion induced by the moving frame. The velocity
induced by a patch of vorticity ``omega`` is

    u(x) = (omega / 4 pi) int_A (y x x) / (1 - x.y) dA
         = -(omega / 4 pi) oint ln(1 - x.X) dX

plus ``-gamma z x x`` from the frame rotation. The area form is the
reference (:func:`induced_velocity` with ``method="area"``); the contour
form drives the time stepping, with a log-singular rule on the patch's own
nodes.

A patch spins at ``omega/2``, which is far faster than anything else in a
desingularized system, and its boundary waves inherit that stiffness. The
stepper therefore integrates the linear Kelvin-wave rotation of each
Fourier mode exactly (exponential time differencing, ETDRK4). The rates
are measured numerically on a circular patch with the same area and
vorticity.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from . import _kernels
from .errors import DomainError, OverlapError, ValidationError
from .greens import green_value
from .sphere_geom import SpherePoint, cartesian, frame_vectors, spherical

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi
MIN_NODES = 64
SPACING_BAND = (0.2, 5.0)
RECENTER_TOL = 1e-3
_Z = np.array([0.0, 0.0, 1.0])


# ------------------------------------------------------------------ state

def _frame(theta, phi):
    e_t, e_p, e_r = frame_vectors(np.array(theta), np.array(phi))
    return e_t, e_p, e_r


@dataclass(frozen=True, eq=False)
class PatchContour:
    """One patch: centre (unwrapped longitude), polar radii, vorticity.

    ``rates`` are the Kelvin-wave rates ``lambda_m`` (m = 0..n/2) used by
    the exponential integrator; mode m rotates as ``exp(i lambda_m t)``.
    """

    theta: float
    phi: float
    rho: np.ndarray
    vorticity: float
    rates: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 1 or rho.size < MIN_NODES or rho.size % 2:
            raise ValidationError(
                f"need an even node count >= {MIN_NODES}, got {rho.size}")
        if not 0.0 < self.theta < math.pi:
            raise DomainError(f"centre colatitude {self.theta} outside (0, pi)")
        if self.vorticity == 0.0 or not math.isfinite(self.vorticity):
            raise ValidationError("vorticity must be finite and nonzero")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))

    @property
    def n(self):
        return self.rho.size

    @property
    def alpha(self):
        return TWO_PI * np.arange(self.n) / self.n

    @property
    def center(self):
        return SpherePoint(self.theta, self.phi)

    @property
    def nodes(self):
        return _polar_points(self.theta, self.phi, self.rho, self.alpha)

    @property
    def node_points(self):
        th, ph = spherical(self.nodes)
        return [SpherePoint(float(t), float(p)) for t, p in zip(th, ph)]

    @property
    def area(self):
        return polar_area(self.rho)

    @property
    def circulation(self):
        """Signed circulation ``omega * area``."""
        return self.vorticity * self.area

    @property
    def moment(self):
        """Area integral of the position vector."""
        return _polar_moment(self.theta, self.phi, self.rho)

    @property
    def centroid(self):
        return self.moment / self.area

    def with_values(self, theta, phi, rho):
        return PatchContour(float(theta), float(phi), rho, self.vorticity, self.rates)


@dataclass(frozen=True, eq=False)
class ContourState:
    patches: tuple
    gamma: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        if not self.patches:
            raise ValidationError("a contour state needs at least one patch")

    @property
    def nodes(self):
        return [p.nodes for p in self.patches]

    def replace_patches(self, patches, time=None):
        return ContourState(tuple(patches), self.gamma,
                            self.time if time is None else float(time))


# ------------------------------------------------------------------ geometry

def _polar_points(theta, phi, rho, alpha):
    e1, e2, c = _frame(theta, phi)
    cr, sr = np.cos(rho), np.sin(rho)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return (cr[:, None] * c + (sr * ca)[:, None] * e1 + (sr * sa)[:, None] * e2)


def polar_area(rho):
    """Area ``int (1 - cos rho) d alpha`` (spectrally accurate)."""
    return float(TWO_PI * np.mean(1.0 - np.cos(rho)))


def _polar_moment(theta, phi, rho):
    e1, e2, c = _frame(theta, phi)
    n = rho.size
    alpha = TWO_PI * np.arange(n) / n
    radial = 0.5 * np.sin(rho) ** 2
    lateral = 0.5 * rho - 0.25 * np.sin(2.0 * rho)
    h = TWO_PI / n
    return h * (np.sum(radial) * c + np.sum(lateral * np.cos(alpha)) * e1
                + np.sum(lateral * np.sin(alpha)) * e2)


def _spectral_derivative(f):
    n = f.size
    fh = np.fft.rfft(f)
    k = np.arange(fh.size)
    dh = 1j * k * fh
    dh[-1] = 0.0
    return np.fft.irfft(dh, n)


def _trig_resample(f, m):
    """Trigonometric interpolant of periodic samples ``f`` on ``m`` nodes."""
    n = f.size
    if m == n:
        return f.copy()
    fh = np.fft.rfft(f)
    out = np.zeros(m // 2 + 1, dtype=complex)
    keep = min(fh.size, out.size)
    out[:keep] = fh[:keep]
    if m > n:
        out[n // 2] *= 0.5  # split the old Nyquist term
    else:
        out[m // 2] = 2.0 * out[m // 2].real  # new Nyquist term, seen at the new nodes
    return np.fft.irfft(out, m) * (m / n)


def _trig_eval(coef, n, alpha):
    """Evaluate the interpolant with rfft coefficients ``coef`` at ``alpha``."""
    alpha = np.atleast_1d(alpha)
    k = np.arange(coef.size)
    w = np.full(coef.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    ph = np.exp(1j * np.outer(alpha, k))
    return (ph @ (w * coef)).real / n


def _curve(theta, phi, rho):
    """Nodes, d/dalpha tangents and e_rho on the polar curve."""
    n = rho.size
    alpha = TWO_PI * np.arange(n) / n
    e1, e2, c = _frame(theta, phi)
    cr, sr = np.cos(rho), np.sin(rho)
    ca, sa = np.cos(alpha), np.sin(alpha)
    radial = ca[:, None] * e1 + sa[:, None] * e2
    y = cr[:, None] * c + sr[:, None] * radial
    e_rho = -sr[:, None] * c + cr[:, None] * radial
    ya = (_spectral_derivative(rho)[:, None] * e_rho
          + sr[:, None] * (-sa[:, None] * e1 + ca[:, None] * e2))
    return y, ya, e_rho


def _frame_motion(theta, phi, rho, dtheta, dphi):
    """Velocity of the polar nodes at fixed rho due to centre motion."""
    n = rho.size
    alpha = TWO_PI * np.arange(n) / n
    e_t, e_p, e_r = _frame(theta, phi)
    st, ct = math.sin(theta), math.cos(theta)
    cr, sr = np.cos(rho), np.sin(rho)
    ca, sa = np.cos(alpha), np.sin(alpha)
    by_theta = cr[:, None] * e_t - (sr * ca)[:, None] * e_r
    by_phi = ((cr * st + sr * ca * ct)[:, None] * e_p
              - (sr * sa)[:, None] * (st * e_r + ct * e_t))
    return dtheta * by_theta + dphi * by_phi


def min_spacing(patch):
    y = patch.nodes
    return float(np.min(np.linalg.norm(np.roll(y, -1, axis=0) - y, axis=1)))


def _spacings(patch):
    y = patch.nodes
    return np.linalg.norm(np.roll(y, -1, axis=0) - y, axis=1)


# ------------------------------------------------------------------ velocity

@lru_cache(maxsize=16)
def _kress(n):
    return _kernels.kress_weights(n)


def _node_velocities(patches, gamma):
    """Velocity (3-vectors) at every node of every patch."""
    curves = [_curve(p.theta, p.phi, p.rho) for p in patches]
    out = []
    for i, p in enumerate(patches):
        y, ya, _ = curves[i]
        u = -(p.vorticity / FOUR_PI) * _kernels.contour_self_velocity(y, ya, _kress(p.n))
        for j, q in enumerate(patches):
            if j == i:
                continue
            yq, yqa, _ = curves[j]
            u -= (q.vorticity / FOUR_PI) * _kernels.contour_velocity(
                y, yq, yqa, TWO_PI / q.n)
        if gamma:
            u -= gamma * np.cross(_Z, y)
        out.append(u)
    return curves, out


def _rhs(patches, gamma):
    """(dtheta, dphi, drho) for each patch."""
    curves, vel = _node_velocities(patches, gamma)
    out = []
    for p, (y, ya, e_rho), u in zip(patches, curves, vel):
        nrm = np.cross(ya, y)  # outward, |nrm| = dl/dalpha
        un = np.sum(u * nrm, axis=1)
        h = TWO_PI / p.n
        m = _polar_moment(p.theta, p.phi, p.rho)
        mdot = h * (un @ y)
        e_t, e_p, c = _frame(p.theta, p.phi)
        cdot = (mdot - (mdot @ c) * c) / np.linalg.norm(m)
        dth = float(cdot @ e_t)
        dph = float(cdot @ e_p) / math.sin(p.theta)
        frame = _frame_motion(p.theta, p.phi, p.rho, dth, dph)
        drho = np.sum((u - frame) * nrm, axis=1) / np.sum(e_rho * nrm, axis=1)
        out.append((dth, dph, drho))
    return out


def kelvin_rates(n, rho0, omega):
    """Rotation rate of each boundary mode of a circular patch.

    Mode ``m`` of ``rho`` rotates as ``exp(i lambda_m t)`` in rfft
    coefficients; ``lambda_m`` is read off the linear response of
    ``drho/dt`` to a small ``cos(m alpha)`` perturbation of a cap of radius
    ``rho0`` on the equator. Modes 0, 1 and the Nyquist mode get 0.
    """
    rates = np.zeros(n // 2 + 1)
    alpha = TWO_PI * np.arange(n) / n
    base = np.full(n, float(rho0))
    delta = 1e-6 * rho0
    tmpl = PatchContour(math.pi / 2, 0.0, base, omega, rates)
    for m in range(2, n // 2):
        pert = delta * np.cos(m * alpha)
        up = _rhs([tmpl.with_values(math.pi / 2, 0.0, base + pert)], 0.0)[0][2]
        dn = _rhs([tmpl.with_values(math.pi / 2, 0.0, base - pert)], 0.0)[0][2]
        resp = (up - dn) / (2.0 * delta)
        rates[m] = -2.0 * float(np.mean(resp * np.sin(m * alpha)))
    return rates


def planar_kelvin_rates(n, omega):
    """Flat-plane limit ``lambda_m = -(m - 1) omega / 2`` (oracle).

    Waves on a positive patch travel with the fluid, towards increasing
    alpha, so the rfft phase of mode m decreases.
    """
    m = np.arange(n // 2 + 1, dtype=float)
    r = -0.5 * (m - 1.0) * omega
    r[:2] = 0.0
    r[-1] = 0.0
    return r


def _point_on_node(state, x, tol=1e-12):
    for p in state.patches:
        if np.min(np.linalg.norm(p.nodes - x, axis=1)) < tol:
            return True
    return False


def _boundary_velocity(patch, x):
    """Contour form at an off-node target, refining the rule near the curve."""
    y = patch.nodes
    d = float(np.min(np.linalg.norm(y - x, axis=1)))
    h_arc = float(np.max(_spacings(patch)))
    factor = 1
    while factor < 64 and h_arc / factor > d / 8.0:
        factor *= 2
    rho = _trig_resample(patch.rho, patch.n * factor)
    yf, yfa, _ = _curve(patch.theta, patch.phi, rho)
    v = _kernels.contour_velocity(x[None, :], yf, yfa, TWO_PI / rho.size)[0]
    return -(patch.vorticity / FOUR_PI) * v


def _area_kernel(x, y, w):
    num = np.cross(y, x)
    den = 1.0 - y @ x
    return (w / den) @ num


def _area_far(patch, x, n_r=48):
    n_a = max(4 * patch.n, 256)
    rho = _trig_resample(patch.rho, n_a)
    alpha = TWO_PI * np.arange(n_a) / n_a
    gx, gw = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (gx[None, :] + 1.0) * rho[:, None]
    w = 0.5 * rho[:, None] * gw[None, :] * np.sin(r) * (TWO_PI / n_a)
    e1, e2, c = _frame(patch.theta, patch.phi)
    radial = np.cos(alpha)[:, None] * e1 + np.sin(alpha)[:, None] * e2
    pts = np.cos(r)[..., None] * c + np.sin(r)[..., None] * radial[:, None, :]
    return _area_kernel(x, pts.reshape(-1, 3), w.ravel())


class _Membership:
    """``g(y) = rho(alpha_c(y)) - dist(c, y)``, positive inside the patch."""

    def __init__(self, patch):
        self.e1, self.e2, self.c = _frame(patch.theta, patch.phi)
        self.coef = np.fft.rfft(patch.rho)
        self.n = patch.n

    def __call__(self, y):
        y = np.atleast_2d(y)
        p1, p2, p3 = y @ self.e1, y @ self.e2, y @ self.c
        ang = np.arctan2(p2, p1)
        dist = np.arctan2(np.hypot(p1, p2), p3)
        return _trig_eval(self.coef, self.n, ang) - dist


def _area_near(patch, x, tol=1e-13):
    """Area form in geodesic polar coordinates about the target itself."""
    g = _Membership(patch)
    th, ph = spherical(x)
    f1, f2, _ = _frame(float(th), float(ph))
    dist_c = math.atan2(np.linalg.norm(np.cross(x, g.c)), float(x @ g.c))
    rmax = min(math.pi - 1e-6, dist_c + 1.5 * float(np.max(patch.rho)))
    inside = float(g(x)[0]) > 0.0

    def point(beta, r):
        d = math.cos(beta) * f1 + math.sin(beta) * f2
        return math.cos(r) * x + math.sin(r) * d

    def along(beta, r):
        return float(g(point(beta, r))[0])

    def segment(beta, a, b):
        # on a ray y = cos(r) x + sin(r) d the integrand (y x x) sin(r)/(1 - x.y)
        # is exactly (1 + cos r) (d x x), so each segment has a closed form
        d = math.cos(beta) * f1 + math.sin(beta) * f2
        return ((b - a) + math.sin(b) - math.sin(a)) * np.cross(d, x)

    def ray(beta):
        if inside:
            r1 = brentq(lambda r: along(beta, r), 0.0, rmax, xtol=tol)
            return segment(beta, 0.0, r1)
        res = minimize_scalar(lambda r: -along(beta, r), bounds=(0.0, rmax),
                              method="bounded", options={"xatol": 1e-13})
        rs, gmax = float(res.x), -float(res.fun)
        if gmax <= 0.0:
            return np.zeros(3)
        r1 = brentq(lambda r: along(beta, r), 0.0, rs, xtol=tol)
        r2 = brentq(lambda r: along(beta, r), rs, rmax, xtol=tol)
        return segment(beta, r1, r2)

    if inside:
        val, _ = quad_vec(ray, 0.0, TWO_PI, epsabs=1e-13, epsrel=1e-12, limit=400)
        return val
    # angular window of the patch seen from x; the ray integral vanishes
    # like a square root at the tangent rays, removed by beta = mid + half sin(u)
    dense = _polar_points(patch.theta, patch.phi, _trig_resample(patch.rho, 4096),
                          TWO_PI * np.arange(4096) / 4096)
    bc = math.atan2(float(g.c @ f2), float(g.c @ f1))
    bet = np.arctan2(dense @ f2, dense @ f1) - bc
    bet = (bet + math.pi) % TWO_PI - math.pi
    lo, hi = float(bet.min()), float(bet.max())
    # refine the tangent directions on the continuous curve
    coef = np.fft.rfft(patch.rho)

    def beta_of(a):
        rr = _trig_eval(coef, patch.n, a)
        yy = _polar_points(patch.theta, patch.phi, rr, np.atleast_1d(a))
        b = math.atan2(float(yy[0] @ f2), float(yy[0] @ f1)) - bc
        return (b + math.pi) % TWO_PI - math.pi

    k_lo, k_hi = int(np.argmin(bet)), int(np.argmax(bet))
    step = TWO_PI / 4096
    a_lo = minimize_scalar(beta_of, bounds=(k_lo * step - step, k_lo * step + step),
                           method="bounded", options={"xatol": 1e-14}).x
    a_hi = minimize_scalar(lambda a: -beta_of(a),
                           bounds=(k_hi * step - step, k_hi * step + step),
                           method="bounded", options={"xatol": 1e-14}).x
    lo, hi = min(lo, beta_of(a_lo)), max(hi, beta_of(a_hi))
    mid, half = bc + 0.5 * (lo + hi), 0.5 * (hi - lo)

    def sub(u):
        return ray(mid + half * math.sin(u)) * (half * math.cos(u))

    val, _ = quad_vec(sub, -0.5 * math.pi, 0.5 * math.pi, epsabs=1e-13, epsrel=1e-12,
                      limit=400)
    return val


def induced_velocity(state, z, method="area"):
    """Velocity ``(v_theta, v_phi)`` at ``z`` (a :class:`SpherePoint`).

    ``method="area"`` is the reference area quadrature: a Gauss x trapezoid
    rule in polar coordinates about the patch centre for distant targets
    and, inside a patch or within half a radius of it, a rule in polar
    coordinates about the target so that the kernel singularity drops out.
    ``method="boundary"`` is the contour form.
    """
    if method not in ("area", "boundary"):
        raise DomainError(f"unknown method {method!r}")
    x = cartesian(z.colatitude, z.longitude)
    if _point_on_node(state, x):
        raise DomainError("target coincides with a boundary node")
    v = np.zeros(3)
    for p in state.patches:
        if method == "boundary":
            v += _boundary_velocity(p, x)
            continue
        c = cartesian(p.theta, p.phi)
        dist = math.atan2(np.linalg.norm(np.cross(x, c)), float(x @ c))
        near = dist < 1.5 * float(np.max(p.rho))
        vec = _area_near(p, x) if near else _area_far(p, x)
        v += p.vorticity / FOUR_PI * vec
    if state.gamma:
        v -= state.gamma * np.cross(_Z, x)
    e_t, e_p, _ = _frame(z.colatitude, z.longitude)
    return np.array([float(v @ e_t), float(v @ e_p)])


# ------------------------------------------------------------------ construction

def _polar_fit(points, n_nodes, area=None, iterations=4):
    """Polar radii about the area centroid of a closed, ordered curve.

    The curve is resampled on equispaced polar angles by a periodic cubic
    spline; the centre is moved to the centroid of the fitted region and
    the fit repeated. If ``area`` is given, a uniform radial shift makes
    the enclosed area match it exactly.
    """
    pts = np.asarray(points, dtype=float)
    c = pts.sum(axis=0)
    c /= np.linalg.norm(c)
    th, ph = spherical(c)
    th, ph = float(th), float(ph)
    alpha_out = TWO_PI * np.arange(n_nodes) / n_nodes
    for _ in range(iterations):
        rho = _fit_about(pts, th, ph, alpha_out)
        m = _polar_moment(th, ph, rho)
        th_new, ph_new = spherical(m / np.linalg.norm(m))
        th_new = float(th_new)
        ph_new = ph + math.remainder(float(ph_new) - ph, TWO_PI)
        moved = math.hypot(th_new - th, math.sin(th) * (ph_new - ph))
        th, ph = th_new, ph_new
        if moved < 1e-15:
            break
    rho = _fit_about(pts, th, ph, alpha_out)
    if area is not None:
        rho = _match_area(rho, area)
    return th, ph, rho


def _fit_about(pts, theta, phi, alpha_out):
    e1, e2, c = _frame(theta, phi)
    p1, p2, p3 = pts @ e1, pts @ e2, pts @ c
    raw = np.arctan2(p2, p1)
    turn = np.diff(np.unwrap(np.append(raw, raw[0])))
    if np.any(turn <= 0.0) or abs(turn.sum() - TWO_PI) > 1e-9:
        raise OverlapError("curve is not a positively oriented star about its centroid",
                           {"theta": theta, "phi": phi})
    ang = np.mod(raw, TWO_PI)
    rad = np.arctan2(np.hypot(p1, p2), p3)
    order = np.argsort(ang)
    ang, rad = ang[order], rad[order]
    spline = CubicSpline(np.append(ang, ang[0] + TWO_PI), np.append(rad, rad[0]),
                         bc_type="periodic")
    return spline(alpha_out)


def _match_area(rho, area):
    for _ in range(50):
        err = polar_area(rho) - area
        if abs(err) <= 1e-15 * area:
            break
        rho = rho - err / (TWO_PI * float(np.mean(np.sin(rho))))
    return rho


def _rates_for(rho, vorticity):
    rho0 = math.acos(1.0 - polar_area(rho) / TWO_PI)
    return kelvin_rates(rho.size, rho0, vorticity)


def circular_patch(center, radius, vorticity, n_nodes=MIN_NODES):
    """A cap of geodesic radius ``radius`` about ``center``."""
    rho = np.full(int(n_nodes), float(radius))
    return PatchContour(center.colatitude, center.longitude, rho, float(vorticity),
                        _rates_for(rho, vorticity))


def state_from_nodes(curves, vorticities, gamma=0.0, time=0.0, n_nodes=None):
    """Build a state from ordered, positively oriented node arrays (n, 3)."""
    if len(curves) != len(vorticities):
        raise ValidationError("one vorticity per curve is required")
    patches = []
    for pts, w in zip(curves, vorticities):
        pts = np.asarray(pts, dtype=float)
        n = int(n_nodes or max(MIN_NODES, pts.shape[0] + pts.shape[0] % 2))
        th, ph, rho = _polar_fit(pts, n)
        patches.append(PatchContour(th, ph, rho, float(w), _rates_for(rho, w)))
    state = ContourState(tuple(patches), float(gamma), float(time))
    _check_state(state)
    return state


def state_from_system(system, n_nodes=128, n_dense=4096):
    """Contour state of a solved :class:`~spherevortex.patch.PatchSystem`.

    Each chart boundary is sampled densely, refitted in polar form about
    its centroid and shifted to the exact enclosed area of the solution.
    The frame rate is the system's frame speed (W or gamma).
    """
    from .patch import boundary_geometry, patch_area

    xi = TWO_PI * np.arange(n_dense) / n_dense
    patches = []
    for spec, curve in system.patches:
        a, b = curve.coefficients()
        X, _ = boundary_geometry(spec.center.colatitude, spec.center.longitude,
                                 spec.core_radius, np.asarray(a), np.asarray(b), xi)
        th, ph, rho = _polar_fit(X, int(n_nodes), area=patch_area(spec, curve))
        w = spec.vorticity
        patches.append(PatchContour(th, ph, rho, w, _rates_for(rho, w)))
    state = ContourState(tuple(patches), float(system.frame_speed), 0.0)
    _check_state(state)
    return state


def renode(state, n_nodes=None):
    """Refit every patch about its centroid, optionally at a new node count.

    The curve is first refined spectrally, then refitted with a periodic
    cubic spline; the enclosed area is restored exactly afterwards.
    """
    out = []
    for p in state.patches:
        n = int(n_nodes or p.n)
        dense = _trig_resample(p.rho, 16 * max(n, p.n))
        pts = _polar_points(p.theta, p.phi, dense, TWO_PI * np.arange(dense.size) / dense.size)
        th, ph, rho = _polar_fit(pts, n, area=p.area)
        ph = p.phi + math.remainder(ph - p.phi, TWO_PI)
        rates = p.rates if n == p.n else _rates_for(rho, p.vorticity)
        out.append(PatchContour(th, ph, rho, p.vorticity, rates))
    return state.replace_patches(out)


# ------------------------------------------------------------------ checks

def state_dump(state):
    """Plain-data snapshot (exact float round trip via repr)."""
    return {
        "gamma": float(state.gamma),
        "time": float(state.time),
        "patches": [{"theta": float(p.theta), "phi": float(p.phi),
                     "vorticity": float(p.vorticity),
                     "rho": [float(v) for v in p.rho],
                     "rates": [float(v) for v in p.rates]} for p in state.patches],
    }


def state_load(d):
    patches = [PatchContour(float(p["theta"]), float(p["phi"]),
                            np.array(p["rho"], dtype=float), float(p["vorticity"]),
                            np.array(p["rates"], dtype=float)) for p in d["patches"]]
    return ContourState(tuple(patches), float(d["gamma"]), float(d["time"]))


def _spacing_ok(p):
    sp = _spacings(p)
    mean = float(np.mean(sp))
    return SPACING_BAND[0] * mean <= sp.min() and sp.max() <= SPACING_BAND[1] * mean


def _check_state(state):
    """Raise :class:`OverlapError` (with a dump) on an inadmissible state."""
    for i, p in enumerate(state.patches):
        if not np.all(np.isfinite(p.rho)) or np.min(p.rho) <= 0.0 or \
                np.max(p.rho) >= 0.5 * math.pi or not 0.0 < p.theta < math.pi:
            raise OverlapError(f"patch {i} self-intersects or degenerated at "
                               f"t={state.time:.6g}", state_dump(state))
    cs = [cartesian(p.theta, p.phi) for p in state.patches]
    for i in range(len(cs)):
        for j in range(i + 1, len(cs)):
            d = math.atan2(np.linalg.norm(np.cross(cs[i], cs[j])), float(cs[i] @ cs[j]))
            if d <= float(np.max(state.patches[i].rho) + np.max(state.patches[j].rho)):
                raise OverlapError(f"patches {i} and {j} may overlap at "
                                   f"t={state.time:.6g}", state_dump(state))


# ------------------------------------------------------------------ stepping

def _pack(patches):
    return [(p.theta, p.phi, p.rho) for p in patches]


def _unpack(template, values):
    return [p.with_values(t, f, r) for p, (t, f, r) in zip(template, values)]


def _axpy(x, a, y):
    """x + a*y on lists of (theta, phi, rho)."""
    return [(xt + a * yt, xf + a * yf, xr + a * yr)
            for (xt, xf, xr), (yt, yf, yr) in zip(x, y)]


def _etd_coefficients(rates, h, n_contour=32):
    """Cox-Matthews ETDRK4 multipliers for ``z = i lambda h``, mode by mode.

    The phi-functions are averaged over a unit circle around each ``z``
    (Kassam-Trefethen), which stays accurate through ``z = 0``. ``z`` is
    imaginary here, so the whole circle is needed: the half-circle shortcut
    only holds for real ``z``.
    """
    z = 1j * np.asarray(rates) * h
    r = np.exp(2j * math.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    lr = z[:, None] + r[None, :]
    e2 = np.exp(0.5 * z)
    q = h * np.mean((np.exp(0.5 * lr) - 1.0) / lr, axis=1)
    f1 = h * np.mean((-4.0 - lr + np.exp(lr) * (4.0 - 3.0 * lr + lr * lr)) / lr ** 3, axis=1)
    f2 = h * np.mean((2.0 + lr + np.exp(lr) * (lr - 2.0)) / lr ** 3, axis=1)
    f3 = h * np.mean((-4.0 - 3.0 * lr - lr * lr + np.exp(lr) * (4.0 - lr)) / lr ** 3, axis=1)
    return {"e": np.exp(z), "e2": e2, "q": q, "f1": f1, "f2": f2, "f3": f3}


# scalar (theta, phi) unknowns have no linear part: z = 0
def _scalar_coefficients(h):
    return {"e": 1.0, "e2": 1.0, "q": 0.5 * h, "f1": h / 6.0, "f2": h / 6.0, "f3": h / 6.0}


def _apply(coefs, name, values):
    """Multiply each (theta, phi, rho) by the named ETD multiplier."""
    out = []
    for (cs, cr), (th, ph, rho) in zip(coefs, values):
        out.append((cs[name] * th, cs[name] * ph,
                    np.fft.irfft(cr[name] * np.fft.rfft(rho), rho.size)))
    return out


def _sum(*parts):
    acc = parts[0]
    for p in parts[1:]:
        acc = _axpy(acc, 1.0, p)
    return acc


def _remainder(template, values, gamma):
    """Right-hand side minus the Kelvin rotation handled exactly."""
    patches = _unpack(template, values)
    out = []
    for p, (dth, dph, drho) in zip(patches, _rhs(patches, gamma)):
        out.append((dth, dph, drho - _rotation_rate(p.rho, p.rates)))
    return out


def _rotation_rate(rho, rates):
    fh = np.fft.rfft(rho)
    return np.fft.irfft(1j * rates * fh, rho.size)


def step(state, dt, scheme="rk4", check=True):
    """Advance the state by ``dt`` with exponential time differencing RK4.

    The Kelvin rotation of each boundary mode is the linear part and is
    integrated exactly (Cox-Matthews ETDRK4), so a steady shape stays a
    fixed point of the scheme however stiff that rotation is.

    The guard compares ``dt`` times the fastest node motion relative to its
    patch frame, after the Kelvin rotation is removed, with the smallest
    node spacing and raises :class:`DomainError` when exceeded. Rigid
    motion of the centre does not count: it moves every node alike.
    Patches whose node spacing leaves the admissible band are renoded;
    self-intersection or overlap raises :class:`OverlapError` with a dump.
    """
    if scheme != "rk4":
        raise DomainError(f"unknown scheme {scheme!r}")
    dt = float(dt)
    if not math.isfinite(dt) or dt < 0.0:
        raise DomainError("dt must be a finite non-negative number")
    if dt == 0.0:
        return state
    tmpl = state.patches
    g = state.gamma
    u = _pack(tmpl)
    nu = _remainder(tmpl, u, g)
    if check:
        speed = 0.0
        for drho in (v[2] for v in nu):
            speed = max(speed, float(np.max(np.abs(drho))))
        spacing = min(min_spacing(p) for p in tmpl)
        if dt * speed >= spacing:
            raise DomainError(
                f"step guard: dt*max|v| = {dt * speed:.3g} >= node spacing {spacing:.3g}")
    coefs = [(_scalar_coefficients(dt), _etd_coefficients(p.rates, dt)) for p in tmpl]
    eu = _apply(coefs, "e2", u)
    a = _sum(eu, _apply(coefs, "q", nu))
    na = _remainder(tmpl, a, g)
    b = _sum(eu, _apply(coefs, "q", na))
    nb = _remainder(tmpl, b, g)
    c = _sum(_apply(coefs, "e2", a), _apply(coefs, "q", _axpy(_axpy(nb, 1.0, nb), -1.0, nu)))
    nc = _remainder(tmpl, c, g)
    new_vals = _sum(_apply(coefs, "e", u), _apply(coefs, "f1", nu),
                    _apply(coefs, "f2", _axpy(_axpy(na, 1.0, nb), 1.0, _axpy(na, 1.0, nb))),
                    _apply(coefs, "f3", nc))
    new = state.replace_patches(_unpack(tmpl, new_vals), state.time + dt)
    if not check:
        return new
    _check_state(new)
    if any(_needs_renode(p) for p in new.patches):
        new = renode(new)
        if not all(_spacing_ok(p) for p in new.patches):
            raise OverlapError("node spacing left the admissible band after renoding",
                               state_dump(new))
    return new


def _needs_renode(p):
    if not _spacing_ok(p):
        return True
    c = cartesian(p.theta, p.phi)
    m = p.moment
    off = np.linalg.norm(np.cross(c, m / np.linalg.norm(m)))
    return off > RECENTER_TOL * float(np.mean(p.rho))


# ------------------------------------------------------------------ diagnostics

@dataclass(frozen=True, eq=False)
class Diagnostics:
    """One sample: per-patch area, circulation, centroid and the energy proxy."""

    time: float
    areas: np.ndarray
    circulations: np.ndarray
    centroids: np.ndarray
    energy: float
    energy_scale: float
    moment: np.ndarray


def energy_terms(state):
    """``(E, S)`` with ``E = 1/2 sum_{p != q} Gamma_p Gamma_q G(c_p, c_q)``.

    ``c_p`` are the centroid directions. ``S`` is the same sum of absolute
    values: for balanced systems ``E`` nearly cancels, so changes are
    measured against ``S``.
    """
    gam = np.array([p.circulation for p in state.patches])
    dirs = [p.centroid / np.linalg.norm(p.centroid) for p in state.patches]
    th, ph = spherical(np.array(dirs))
    e = scale = 0.0
    for i in range(gam.size):
        for j in range(gam.size):
            if i != j:
                term = 0.5 * gam[i] * gam[j] * float(green_value(th[i], ph[i], th[j], ph[j]))
                e += term
                scale += abs(term)
    return e, scale


def energy_proxy(state):
    return energy_terms(state)[0]


def diagnostics(state):
    areas = np.array([p.area for p in state.patches])
    circ = np.array([p.circulation for p in state.patches])
    cents = np.array([p.centroid for p in state.patches])
    moment = np.sum(np.array([p.vorticity * p.moment for p in state.patches]), axis=0)
    e, scale = energy_terms(state)
    return Diagnostics(float(state.time), areas, circ, cents, e, scale, moment)


@dataclass(frozen=True, eq=False)
class DiagnosticsSeries:
    times: np.ndarray
    areas: np.ndarray          # (samples, patches)
    circulations: np.ndarray
    centroids: np.ndarray      # (samples, patches, 3)
    energy: np.ndarray
    energy_scale: np.ndarray
    moment: np.ndarray         # (samples, 3)

    @classmethod
    def from_samples(cls, samples):
        return cls(np.array([s.time for s in samples]),
                   np.array([s.areas for s in samples]),
                   np.array([s.circulations for s in samples]),
                   np.array([s.centroids for s in samples]),
                   np.array([s.energy for s in samples]),
                   np.array([s.energy_scale for s in samples]),
                   np.array([s.moment for s in samples]))

    @property
    def colatitudes(self):
        c = self.centroids
        return np.arctan2(np.hypot(c[..., 0], c[..., 1]), c[..., 2])

    @property
    def longitudes(self):
        c = self.centroids
        return np.unwrap(np.arctan2(c[..., 1], c[..., 0]), axis=0)

    def fitted_drifts(self):
        """Least-squares slope of each patch's unwrapped centroid longitude."""
        if self.times.size < 2:
            return np.full(self.areas.shape[1], np.nan)
        return np.polyfit(self.times, self.longitudes, 1)[0]

    @property
    def drift(self):
        return float(np.mean(self.fitted_drifts()))

    @property
    def colatitude_drift(self):
        return float(np.max(np.abs(self.colatitudes - self.colatitudes[0])))

    @property
    def area_change(self):
        return float(np.max(np.abs(self.areas / self.areas[0] - 1.0)))

    @property
    def circulation_change(self):
        return float(np.max(np.abs(self.circulations / self.circulations[0] - 1.0)))

    @property
    def energy_change(self):
        """Largest energy change relative to the initial interaction scale."""
        return float(np.max(np.abs(self.energy - self.energy[0]))
                     / max(self.energy_scale[0], 1e-300))

    @property
    def moment_change(self):
        m0 = self.moment[0]
        return float(np.max(np.linalg.norm(self.moment - m0, axis=1))
                     / max(float(np.linalg.norm(m0)), 1e-300))


def run_and_measure(state, T, dt, sample_every=1, callback=None):
    """Advance ``round(T/dt)`` steps, sampling diagnostics every few steps.

    Returns ``(final_state, DiagnosticsSeries)``. ``callback(i, state)`` is
    called after each step (checkpointing hook).
    """
    if not (T >= 0.0 and dt > 0.0):
        raise DomainError("need T >= 0 and dt > 0")
    sample_every = int(sample_every)
    if sample_every < 1:
        raise DomainError("sample_every must be at least 1")
    steps = int(round(T / dt))
    samples = [diagnostics(state)]
    for i in range(steps):
        state = step(state, dt)
        if callback is not None:
            callback(i + 1, state)
        if (i + 1) % sample_every == 0 or i + 1 == steps:
            samples.append(diagnostics(state))
    return state, DiagnosticsSeries.from_samples(samples)
