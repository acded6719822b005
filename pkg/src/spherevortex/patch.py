"""Desingularised point vortices: uniform-vorticity patches.

A patch of strength ``kappa`` and scale ``eps`` carries vorticity
``+-1/eps**2`` on a region described in the area-preserving chart about
its centre ``c = (theta_c, phi_c)``::

    x1 = theta - theta_c,  x2 = (phi - phi_c) sin(theta),
    boundary: (x1, x2) = s (1 + t(xi)) (cos xi, sin xi).

Because the chart preserves area, the enclosed area is exactly
``1/2 int s^2 (1 + t)^2 dxi``.

The stream function of a patch is evaluated with a boundary formula: in
polar coordinates about the target point the radial integral of
``G sin(rho)`` is done in closed form, leaving
``int F(rho_b(alpha)) d alpha`` along the boundary with
``F(u) = -(u ln u - u)/(4 pi) + u ln2/(4 pi)``, ``u = 1 - cos rho``.
:func:`patch_stream_area` is an independent area-quadrature route kept as
a reference.

Steady patches satisfy: ``sign * (psi - Omega cos(theta))`` equals the flux
constant ``mu`` on each boundary, where ``Omega`` is the rigid longitude
rate of the pattern (the street speed ``W``, or the sphere rotation
``gamma`` in the general setting).
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import _kernels
from .errors import ConvergenceError, DomainError, OverlapError, ValidationError
from .equilibria import StreetSpec, karman_positions, karman_speed
from .greens import (H_DELTA, H_DIAG, green_grad, green_value, h_value,
                     robin_slope)
from .point_vortex import VortexConfig
from .sphere_geom import (SpherePoint, cartesian, chart_disk_quadrature,
                          frame_vectors, geodesic_distance, tangent_offset)

EPS0 = 0.1
TWO_PI = 2.0 * math.pi


# ------------------------------------------------------------------ basics

def rankine_profile(y):
    """Planar Rankine stream function: 1/4 (1 - |y|^2) inside, 1/2 ln(1/|y|) outside."""
    y = np.asarray(y, dtype=float)
    r = np.hypot(y[..., 0], y[..., 1])
    with np.errstate(divide="ignore"):
        out = np.where(r <= 1.0, 0.25 * (1.0 - r * r), -0.5 * np.log(np.where(r > 0, r, 1.0)))
    return float(out) if out.ndim == 0 else out


def _core_residual(s, kappa, eps):
    # s^2 |ln s| - (kappa/pi) eps^2 |ln eps|, scaled to O(1)
    target = kappa / math.pi * eps * eps * abs(math.log(eps))
    return (s * s * abs(math.log(s)) - target) / target


def solve_core_radius(kappa, eps):
    """Core radius from ``s^2 |ln s| = (kappa/pi) eps^2 |ln eps|``.

    The left side increases on (0, e^-1/2), where it peaks at 1/(2e), so the
    root is unique there. Bisection on (eps^3, e^-1/2), then Newton polishing.
    """
    kappa, eps = float(kappa), float(eps)
    if not kappa > 0.0:
        raise DomainError("kappa must be positive")
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)")
    lo, hi = eps ** 3, math.exp(-0.5) * (1 - 1e-12)
    flo, fhi = _core_residual(lo, kappa, eps), _core_residual(hi, kappa, eps)
    if flo * fhi > 0.0:
        raise DomainError(f"no core radius in ({lo:.3g}, {hi:.3g}) for kappa={kappa}, eps={eps}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = _core_residual(mid, kappa, eps)
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    s = 0.5 * (lo + hi)
    target = kappa / math.pi * eps * eps * abs(math.log(eps))
    for _ in range(5):
        f = s * s * (-math.log(s)) - target
        df = -2.0 * s * math.log(s) - s
        step = f / df
        s -= step
        if abs(step) <= 1e-17 * s:
            break
    if abs(_core_residual(s, kappa, eps)) > 1e-12:
        raise ConvergenceError("core radius polish failed")
    return s


def flux_constant(kappa, eps, external_stream=0.0, frame_speed=0.0,
                  colatitude=math.pi / 2, sign=1, robin=H_DIAG):
    """Flux constant of one patch.

    ``external_stream`` is the signed point-vortex stream of all *other*
    vortices at the patch centre. The result is the boundary value of
    ``sign * (psi - frame_speed cos(theta))``::

        mu = kappa/(2 pi) ln(1/eps) + kappa robin
             + sign (external_stream - frame_speed cos(colatitude))
    """
    return (kappa / TWO_PI * math.log(1.0 / eps) + kappa * robin
            + sign * (external_stream - frame_speed * math.cos(colatitude)))


def external_streams(th, ph, sk):
    """For each vortex, sum over the others of s_j G(z_i, z_j)."""
    n = th.size
    out = np.zeros(n)
    for i in range(n):
        mask = np.arange(n) != i
        out[i] = float(np.sum(sk[mask] * green_value(th[i], ph[i], th[mask], ph[mask])))
    return out


def external_gradients(th, ph, sk):
    """First-slot gradient of the other vortices' stream at each vortex."""
    n = th.size
    gt, gp = np.zeros(n), np.zeros(n)
    for i in range(n):
        mask = np.arange(n) != i
        a, b = green_grad(th[i], ph[i], th[mask], ph[mask])
        gt[i], gp[i] = np.sum(sk[mask] * a), np.sum(sk[mask] * b)
    return gt, gp


def system_fluxes(th, ph, sk, eps, omega, robin=H_DIAG):
    ext = external_streams(th, ph, sk)
    kap = np.abs(sk)
    sign = np.sign(sk)
    return (kap / TWO_PI * math.log(1.0 / eps) + kap * robin
            + sign * (ext - omega * np.cos(th)))


# ------------------------------------------------------------------ shapes

def fourier_eval(a, b, xi):
    """t(xi) and t'(xi) for ``t = sum_m a_m cos(m xi) + b_m sin(m xi)``."""
    xi = np.asarray(xi, dtype=float)
    m = np.arange(len(a))
    c, s = np.cos(np.outer(xi, m)), np.sin(np.outer(xi, m))
    t = c @ a + s @ b
    dt = (-s * m) @ a + (c * m) @ b
    return t, dt


def fourier_fit(samples, n_modes):
    """Cosine/sine coefficients (0..n_modes) of equispaced periodic samples."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    f = np.fft.rfft(samples) / n
    a = np.zeros(n_modes + 1)
    b = np.zeros(n_modes + 1)
    mmax = min(n_modes, f.size - 1)
    a[0] = f[0].real
    a[1:mmax + 1] = 2.0 * f[1:mmax + 1].real
    b[1:mmax + 1] = -2.0 * f[1:mmax + 1].imag
    if n % 2 == 0 and mmax == n // 2:
        a[mmax] *= 0.5
        b[mmax] = 0.0
    return a, b


@dataclass(frozen=True)
class PatchSpec:
    center: SpherePoint
    kappa: float
    sign: int
    eps: float
    core_radius: float
    flux: float

    @property
    def beta(self):
        return self.core_radius / (2.0 * self.eps ** 2)

    @property
    def vorticity(self):
        return self.sign / self.eps ** 2


@dataclass(frozen=True)
class BoundaryCurve:
    """Relative radial offset ``t`` on an equispaced angle grid.

    ``a``/``b`` hold Fourier coefficients when the curve came from the
    spectral solver; otherwise they are fitted from the samples.
    """

    xi_grid: np.ndarray
    radial_offset: np.ndarray
    a: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_coefficients(cls, a, b, n_grid=None):
        a, b = np.asarray(a, float), np.asarray(b, float)
        n_grid = n_grid or 4 * (len(a) - 1)
        xi = TWO_PI * np.arange(n_grid) / n_grid
        return cls(xi, fourier_eval(a, b, xi)[0], a, b)

    @classmethod
    def circle(cls, n_grid=64):
        return cls.from_coefficients(np.zeros(n_grid // 4 + 1), np.zeros(n_grid // 4 + 1), n_grid)

    def coefficients(self):
        if self.a is not None:
            return self.a, self.b
        return fourier_fit(self.radial_offset, self.xi_grid.size // 2)

    def evaluate(self, xi):
        a, b = self.coefficients()
        return fourier_eval(a, b, xi)

    @property
    def norm_inf(self):
        return float(np.max(np.abs(self.evaluate(TWO_PI * np.arange(1024) / 1024)[0])))

    def without_mode(self, m):
        a, b = (np.array(c, dtype=float) for c in self.coefficients())
        if m < len(a):
            a[m] = 0.0
            b[m] = 0.0
        return BoundaryCurve.from_coefficients(a, b, self.xi_grid.size)

    def mirrored(self):
        """Curve under theta -> pi - theta: t'(xi) = t(pi - xi)."""
        a, b = self.coefficients()
        m = np.arange(len(a))
        sgn = (-1.0) ** m
        return BoundaryCurve.from_coefficients(sgn * a, -sgn * b, self.xi_grid.size)


@dataclass
class PatchSystem:
    """Patches with their boundaries and the frame they are steady in."""

    patches: list
    mode: str
    frame_speed: float
    eps: float
    residual_norm: float = float("nan")
    converged: bool = False
    iterations: int = 0
    contraction: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    street: StreetSpec = None
    n_modes: int = 0
    message: str = ""

    @property
    def specs(self):
        return [p for p, _ in self.patches]

    @property
    def curves(self):
        return [c for _, c in self.patches]

    def centers(self):
        th = np.array([p.center.colatitude for p in self.specs])
        ph = np.array([p.center.longitude for p in self.specs])
        return th, ph

    def signed_strengths(self):
        return np.array([p.sign * p.kappa for p in self.specs])


# ------------------------------------------------------------------ geometry

def boundary_geometry(theta_c, phi_c, s, a, b, xi):
    """Boundary points and d/dxi tangents (unit 3-vectors, (n, 3))."""
    t, dt = fourier_eval(a, b, xi)
    r = s * (1.0 + t)
    dr = s * dt
    cx, sx = np.cos(xi), np.sin(xi)
    x1, x2 = r * cx, r * sx
    dx1 = dr * cx - r * sx
    dx2 = dr * sx + r * cx
    th = theta_c + x1
    st, ct = np.sin(th), np.cos(th)
    ph = phi_c + x2 / st
    dph = (dx2 * st - x2 * ct * dx1) / (st * st)
    e_t, e_p, X = frame_vectors(th, ph)
    dX = e_t * dx1[:, None] + e_p * (st * dph)[:, None]
    return X, dX


def _rotz(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_MIRROR = np.diag([1.0, 1.0, -1.0])


def _curve_coeffs(curve, n_modes=None):
    a, b = curve.coefficients()
    return np.asarray(a, float), np.asarray(b, float)


def patch_sources(system, n_quad=1024):
    """Positively oriented (X, dX, sign, h) per patch."""
    out = []
    xi = TWO_PI * np.arange(n_quad) / n_quad
    h = TWO_PI / n_quad
    for p, c in system.patches:
        a, b = _curve_coeffs(c)
        X, dX = boundary_geometry(p.center.colatitude, p.center.longitude,
                                  p.core_radius, a, b, xi)
        out.append((X, dX, p.sign, h))
    return out


def _stream_from_sources(targets, sources, eps):
    psi = np.zeros(targets.shape[0])
    for X, dX, sign, h in sources:
        psi += sign * _kernels.contour_stream(targets, X, dX, h)
    return psi / eps ** 2


def patch_stream(system, targets, n_quad=1024):
    """Patch-induced stream function at (n, 3) unit-vector targets."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    return _stream_from_sources(targets, patch_sources(system, n_quad), system.eps)


def patch_area_grid(spec, curve, n_r=48, n_a=128):
    """Gauss (radial) x trapezoid (angle) grid over the deformed patch."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    xi = TWO_PI * np.arange(n_a) / n_a
    a, b = _curve_coeffs(curve)
    t = fourier_eval(a, b, xi)[0]
    rb = spec.core_radius * (1.0 + t)
    frac = 0.5 * (x + 1.0)
    r = frac[:, None] * rb[None, :]
    wt = (0.5 * w)[:, None] * rb[None, :] * r * (TWO_PI / n_a)
    th = spec.center.colatitude + r * np.cos(xi)[None, :]
    ph = spec.center.longitude + r * np.sin(xi)[None, :] / np.sin(th)
    return cartesian(th, ph).reshape(-1, 3), wt.ravel()


def patch_stream_area(system, targets, n_r=48, n_a=128):
    """Reference route: area quadrature of G over each patch."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    psi = np.zeros(targets.shape[0])
    for spec, curve in system.patches:
        pts, w = patch_area_grid(spec, curve, n_r, n_a)
        val, _ = _kernels.area_sums(targets, pts, w)
        psi += spec.sign * val
    return psi / system.eps ** 2


def patch_area(spec, curve):
    """Spherical area enclosed by the boundary (exact in the area chart)."""
    xi = TWO_PI * np.arange(4096) / 4096
    t = curve.evaluate(xi)[0]
    return float(0.5 * spec.core_radius ** 2 * np.mean((1.0 + t) ** 2) * TWO_PI)


def patch_circulation(p, b):
    """Circulation magnitude: area / eps^2."""
    return patch_area(p, b) / p.eps ** 2


def boundary_aspect_ratio(spec, curve, n=4096):
    """Extent in longitude over extent in colatitude of the boundary."""
    xi = TWO_PI * np.arange(n) / n
    t = curve.evaluate(xi)[0]
    r = spec.core_radius * (1.0 + t)
    x1 = r * np.cos(xi)
    dphi = r * np.sin(xi) / np.sin(spec.center.colatitude + x1)
    return float(np.ptp(dphi) / np.ptp(x1))


def polar_curvature(curve, s, n=256):
    """Signed curvature of the chart polar curve r = s (1 + t(xi))."""
    xi = TWO_PI * np.arange(n) / n
    a, b = curve.coefficients()
    m = np.arange(len(a))
    c, sn = np.cos(np.outer(xi, m)), np.sin(np.outer(xi, m))
    r = s * (1.0 + c @ a + sn @ b)
    r1 = s * ((-sn * m) @ a + (c * m) @ b)
    r2 = s * ((-c * m * m) @ a + (-sn * m * m) @ b)
    return (r * r + 2 * r1 * r1 - r * r2) / (r * r + r1 * r1) ** 1.5


# ------------------------------------------------------------------ construction

def system_from_config(config, eps, frame_speed=None, n_grid=64, mode="general"):
    """Circular patches (t = 0) at the vortices of ``config``.

    Every patch gets its own core radius and flux constant. The frame speed
    defaults to ``config.gamma``.
    """
    eps = float(eps)
    if not 0.0 < eps <= EPS0:
        raise DomainError(f"eps={eps} outside (0, {EPS0}]")
    omega = config.gamma if frame_speed is None else float(frame_speed)
    th, ph, sk = config.arrays()
    mu = system_fluxes(th, ph, sk, eps, omega)
    patches = []
    for i in range(th.size):
        kap = abs(sk[i])
        spec = PatchSpec(SpherePoint(th[i], ph[i]), kap, int(np.sign(sk[i])), eps,
                         solve_core_radius(kap, eps), float(mu[i]))
        patches.append((spec, BoundaryCurve.circle(n_grid)))
    return PatchSystem(patches, mode, omega, eps)


def _effective_strength(spec):
    return math.pi * spec.core_radius ** 2 / spec.eps ** 2


def approx_stream_terms(system, z, n_r=32, n_a=64, delta=H_DELTA):
    """Per-patch (V, R) contributions to the approximate stream at ``z``.

    Within ``delta`` of a patch centre, V is the piecewise Rankine-type
    function of the chart distance and R is the quadrature of H over the
    chart disk of radius s. Farther away the patch is represented by its
    far field, ``kappa' G`` with ``kappa' = pi s^2/eps^2``, split as
    ``(kappa' G, 0)``.
    """
    out = []
    x = cartesian(z.colatitude, z.longitude)
    for spec, _ in system.patches:
        s, eps, kap = spec.core_radius, spec.eps, spec.kappa
        c = spec.center
        if geodesic_distance(z, c) > delta:
            v = _effective_strength(spec) * float(
                green_value(z.colatitude, z.longitude, c.colatitude, c.longitude))
            out.append((spec.sign * v, 0.0))
            continue
        r = tangent_offset(c, z, "at_point").norm
        if r <= s:
            v = kap / TWO_PI * math.log(1.0 / eps) + (s * s - r * r) / (4.0 * eps * eps)
        else:
            v = kap / TWO_PI * abs(math.log(eps)) / abs(math.log(s)) * math.log(1.0 / r)
        grid = chart_disk_quadrature(c, s, n_r, n_a)
        d = np.sum((grid.points - x) ** 2, axis=1)
        keep = d > 0.0
        hv = h_value(z.colatitude, z.longitude, grid.theta[keep], grid.phi[keep])
        rterm = float(np.sum(grid.weights[keep] * hv)) / eps ** 2
        out.append((spec.sign * v, spec.sign * rterm))
    return out


def approx_stream(system, z, **kw):
    """Sum of signed V and R terms over all patches."""
    return float(sum(v + r for v, r in approx_stream_terms(system, z, **kw)))


def first_order_field(index, system):
    """Gradient (d/dtheta, d/dphi) of the level function at patch ``index``.

    Built from the point-vortex stream of the other patches, the Robin
    slope of the patch itself and the frame term.
    """
    th, ph = system.centers()
    sk = system.signed_strengths()
    gt, gp = external_gradients(th, ph, sk)
    spec = system.specs[index]
    omega = system.frame_speed
    th_i = th[index]
    f_t = spec.sign * (gt[index] + omega * math.sin(th_i)) + spec.kappa * float(robin_slope(th_i))
    f_p = spec.sign * gp[index]
    return f_t, f_p


def boundary_first_order(index, system, n_grid=None):
    """Leading-order boundary ``t = H(xi)/(s beta)`` of patch ``index``.

    ``H(xi) = s (F_theta cos xi + F_phi sin xi / sin theta_c)`` with ``F`` from
    :func:`first_order_field`.
    """
    spec, curve = system.patches[index]
    f_t, f_p = first_order_field(index, system)
    s = spec.core_radius
    n_modes = max(len(curve.coefficients()[0]) - 1, 1)
    a = np.zeros(n_modes + 1)
    b = np.zeros(n_modes + 1)
    sb = s * spec.beta
    a[1] = s * f_t / sb
    b[1] = s * f_p / math.sin(spec.center.colatitude) / sb
    return BoundaryCurve.from_coefficients(a, b, n_grid or curve.xi_grid.size)


# ------------------------------------------------------------------ solver

@dataclass
class SolverOptions:
    n_modes: int = 16
    n_colloc_factor: int = 4
    n_quad: int = 1024
    tol_residual: float = 1e-10
    tol_step: float = 1e-12
    max_iter: int = 40
    fd_step: float = 1e-7
    eps0: float = EPS0
    include_self_term: bool = True

    def __post_init__(self):
        if self.n_modes < 2:
            raise ValidationError("need at least two boundary modes")
        if self.n_quad % (self.n_colloc_factor * self.n_modes):
            raise ValidationError("n_quad must be a multiple of the collocation count")


def _split_shape(v, m):
    """Shape unknowns [a0, a2..aM, b2..bM] -> full (a, b) arrays."""
    a = np.zeros(m + 1)
    b = np.zeros(m + 1)
    a[0] = v[0]
    a[2:] = v[1:m]
    b[2:] = v[m:2 * m - 1]
    return a, b


def _check_shape(a, b):
    t = fourier_eval(a, b, TWO_PI * np.arange(256) / 256)[0]
    if np.min(1.0 + t) < 0.2:
        raise OverlapError("boundary offset left the star-shaped range")


def _check_overlap(centers, radii):
    th, ph = centers
    x = cartesian(th, ph)
    n = th.size
    for i in range(n):
        for j in range(i + 1, n):
            d = math.atan2(np.linalg.norm(np.cross(x[i], x[j])), float(x[i] @ x[j]))
            if d < 1.05 * (radii[i] + radii[j]):
                raise OverlapError(
                    f"patches {i} and {j} overlap (distance {d:.4g}, radii "
                    f"{radii[i]:.4g}+{radii[j]:.4g})")


class _Newton:
    """Least-squares Newton with finite-difference Jacobian and backtracking."""

    def __init__(self, residual, opts, analytic_cols=None):
        self.residual = residual
        self.opts = opts
        self.analytic_cols = analytic_cols or {}

    def jacobian(self, u, r0):
        n = u.size
        jac = np.empty((r0.size, n))
        for j in range(n):
            if j in self.analytic_cols:
                jac[:, j] = self.analytic_cols[j](u)
                continue
            h = self.opts.fd_step
            e = np.zeros(n)
            e[j] = h
            jac[:, j] = (self.residual(u + e) - self.residual(u - e)) / (2.0 * h)
        return jac

    def solve(self, u0):
        o = self.opts
        u = u0.copy()
        r = self.residual(u)
        hist = [float(np.max(np.abs(r)))]
        ratios = []
        prev_step = None
        message = ""
        it = 0
        converged = hist[-1] < o.tol_residual
        while not converged and it < o.max_iter:
            it += 1
            jac = self.jacobian(u, r)
            step = np.linalg.lstsq(jac, -r, rcond=None)[0]
            base = float(r @ r)
            alpha = 1.0
            while True:
                try:
                    un = u + alpha * step
                    rn = self.residual(un)
                    if float(rn @ rn) < base or np.max(np.abs(rn)) < o.tol_residual:
                        break
                except OverlapError:
                    pass
                alpha *= 0.5
                if alpha < 1e-6:
                    raise ConvergenceError(
                        "line search stalled: contraction-rate estimate > 1",
                        {"residual_history": hist, "contraction": ratios})
            snorm = float(np.max(np.abs(alpha * step)))
            if prev_step is not None and prev_step > 0.0:
                ratios.append(snorm / prev_step)
            prev_step = snorm
            u, r = un, rn
            hist.append(float(np.max(np.abs(r))))
            if hist[-1] < o.tol_residual:
                converged = True
            elif snorm < o.tol_step:
                message = "step below tolerance before the residual tolerance"
                break
        if not converged and not message:
            message = f"no convergence in {o.max_iter} iterations"
        return u, r, converged, it, hist, ratios, message or "converged"


def _karman_solve(street, eps, opts):
    m = opts.n_modes
    kap, th0 = street.kappa, street.theta0
    s = solve_core_radius(kap, eps)
    pp, pn = street.longitudes()
    phi1 = float(pp[0])
    n_col = opts.n_colloc_factor * m
    up = opts.n_quad // n_col
    xi = TWO_PI * np.arange(opts.n_quad) / opts.n_quad
    h = TWO_PI / opts.n_quad
    rot_pos = [_rotz(float(p) - phi1) for p in pp]
    rot_neg = [_rotz(float(p) - phi1) @ _MIRROR for p in pn]
    radii_guess = np.full(2 * street.k, s)
    th_c = np.concatenate([np.full(street.k, th0), np.full(street.k, math.pi - th0)])
    ph_c = np.concatenate([pp, pn])
    _check_overlap((th_c, ph_c), radii_guess)
    # flux constant without the frame term (that part moves with W)
    cfg = karman_positions(street)
    tha, pha, ska = cfg.arrays()
    mu0 = float(system_fluxes(tha, pha, ska, eps, 0.0)[0])
    scale = abs(mu0)
    cos0 = math.cos(th0)

    def geometry(v):
        a, b = _split_shape(v, m)
        _check_shape(a, b)
        X, dX = boundary_geometry(th0, phi1, s, a, b, xi)
        return X, dX

    def residual(u):
        X, dX = geometry(u[:-1])
        W = u[-1]
        tgt = X[::up]
        psi = np.zeros(n_col)
        for R in rot_pos:
            psi += _kernels.contour_stream(tgt, X @ R.T, dX @ R.T, h)
        for R in rot_neg:
            # the mirror reverses orientation; -dX restores it
            psi -= _kernels.contour_stream(tgt, X @ R.T, -(dX @ R.T), h)
        psi /= eps * eps
        return (psi - W * tgt[:, 2] - (mu0 - W * cos0)) / scale

    def w_column(u):
        X, _ = geometry(u[:-1])
        return -(X[::up, 2] - cos0) / scale

    u0 = np.zeros(2 * m)
    u0[-1] = karman_speed(street, opts.include_self_term)
    solver = _Newton(residual, opts, {2 * m - 1: w_column})
    u, r, conv, it, hist, ratios, msg = solver.solve(u0)
    a, b = _split_shape(u[:-1], m)
    W = float(u[-1])
    curve = BoundaryCurve.from_coefficients(a, b, n_col)
    mirror = curve.mirrored()
    patches = []
    for f in pp:
        mu = mu0 - W * cos0
        patches.append((PatchSpec(SpherePoint(th0, f), kap, 1, eps, s, mu), curve))
    for f in pn:
        mu = mu0 - W * cos0
        patches.append((PatchSpec(SpherePoint(math.pi - th0, f), kap, -1, eps, s, mu), mirror))
    radii = np.array([s * (1.0 + np.max(c.evaluate(xi[::up])[0])) for _, c in patches])
    _check_overlap((th_c, ph_c), radii)
    return PatchSystem(patches, "karman", W, eps, float(np.max(np.abs(r))), conv, it,
                       ratios, hist, street, m, msg)


def _general_solve(config, eps, opts):
    m = opts.n_modes
    th0, ph0, sk = config.arrays()
    n = th0.size
    gam = config.gamma
    kap = np.abs(sk)
    sign = np.sign(sk)
    s = np.array([solve_core_radius(k, eps) for k in kap])
    n_col = opts.n_colloc_factor * m
    up = opts.n_quad // n_col
    xi = TWO_PI * np.arange(opts.n_quad) / opts.n_quad
    h = TWO_PI / opts.n_quad
    nsh = 2 * m - 1
    _check_overlap((th0, ph0), s)
    scale = float(np.max(np.abs(system_fluxes(th0, ph0, sk, eps, gam))))

    def unpack(u):
        shapes, th, ph = [], np.empty(n), np.empty(n)
        pos = 0
        for i in range(n):
            shapes.append(u[pos:pos + nsh])
            pos += nsh
            th[i] = u[pos]
            pos += 1
            if i == 0:
                ph[i] = ph0[0]
            else:
                ph[i] = u[pos]
                pos += 1
        return shapes, th, ph

    def residual(u):
        shapes, th, ph = unpack(u)
        if np.any(th <= 1e-3) or np.any(th >= math.pi - 1e-3):
            raise OverlapError("patch centre reached the pole guard")
        _check_overlap((th, ph), s * 1.0)
        geo = []
        for i in range(n):
            a, b = _split_shape(shapes[i], m)
            _check_shape(a, b)
            geo.append(boundary_geometry(th[i], ph[i], s[i], a, b, xi))
        mu = system_fluxes(th, ph, sk, eps, gam)
        out = []
        for i in range(n):
            tgt = geo[i][0][::up]
            psi = np.zeros(n_col)
            for j in range(n):
                psi += sign[j] * _kernels.contour_stream(tgt, geo[j][0], geo[j][1], h)
            psi /= eps * eps
            out.append((sign[i] * (psi - gam * tgt[:, 2]) - mu[i]) / scale)
        return np.concatenate(out)

    u0 = []
    for i in range(n):
        u0.extend([0.0] * nsh)
        u0.append(th0[i])
        if i:
            u0.append(ph0[i])
    u0 = np.array(u0)
    solver = _Newton(residual, opts)
    u, r, conv, it, hist, ratios, msg = solver.solve(u0)
    shapes, th, ph = unpack(u)
    mu = system_fluxes(th, ph, sk, eps, gam)
    patches = []
    for i in range(n):
        a, b = _split_shape(shapes[i], m)
        spec = PatchSpec(SpherePoint(th[i], ph[i]), float(kap[i]), int(sign[i]), eps,
                         float(s[i]), float(mu[i]))
        patches.append((spec, BoundaryCurve.from_coefficients(a, b, n_col)))
    return PatchSystem(patches, "general", gam, eps, float(np.max(np.abs(r))), conv, it,
                       ratios, hist, None, m, msg)


def steady_patch_solve(mode, eps, M=16, options=None, **kw):
    """Solve for steady patches.

    ``mode`` is a :class:`StreetSpec` (street mode: one boundary plus the
    speed W are unknowns, the rest follow by symmetry) or a
    :class:`VortexConfig` (general mode: every boundary plus the centres,
    with the first longitude held fixed, and the frame rate ``gamma``).
    """
    opts = options or SolverOptions(n_modes=M, **kw)
    if opts.n_modes != M and options is None:
        opts = replace(opts, n_modes=M)
    eps = float(eps)
    if not 0.0 < eps <= opts.eps0:
        raise DomainError(f"eps={eps} outside (0, {opts.eps0}]")
    if isinstance(mode, StreetSpec):
        out = _karman_solve(mode, eps, opts)
    elif isinstance(mode, VortexConfig):
        out = _general_solve(mode, eps, opts)
    else:
        raise ValidationError("mode must be a StreetSpec or a VortexConfig")
    if not out.converged:
        raise ConvergenceError(
            f"steady solve did not converge: {out.message}",
            {"residual_history": out.residual_history, "contraction": out.contraction})
    return out
