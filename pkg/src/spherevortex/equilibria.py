"""Kármán streets, their traveling speed, and critical points of K.

Longitudes of a street with fold ``k`` and index ``i = 1..k``::

    type1:  phi_i^+ = phi_i^- = 2 pi i/k - pi/k
    type2:  phi_i^+ = 2 pi i/k - 3 pi/(2k),  phi_i^- = 2 pi i/k - pi/(2k)

positives at colatitude ``theta0`` and negatives at ``pi - theta0``.

:func:`karman_speed` returns the common ``dphi/dt`` of the street in the
sign convention of :mod:`spherevortex.point_vortex`, so a street is a
critical point of K once ``gamma`` equals that speed.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError, ValidationError
from .greens import green_grad, robin_slope
from .point_vortex import (VortexConfig, _min_separation, gradient_arrays,
                           hessian_kirchhoff_routh, vortex_velocities)
from .sphere_geom import SpherePoint, normalize_longitude

VARIANTS = ("type1", "type2")


@dataclass(frozen=True)
class StreetSpec:
    k: int
    theta0: float
    kappa: float = 1.0
    variant: str = "type1"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        th = float(self.theta0)
        if not 0.0 < th <= math.pi / 2:
            raise ValidationError(f"theta0={th} outside (0, pi/2]")
        object.__setattr__(self, "theta0", th)
        if not float(self.kappa) > 0.0:
            raise ValidationError("kappa must be positive")
        object.__setattr__(self, "kappa", float(self.kappa))
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")

    def longitudes(self):
        """(phi^+, phi^-) arrays for i = 1..k (not normalised)."""
        i = np.arange(1, self.k + 1)
        k = self.k
        if self.variant == "type1":
            pos = 2 * math.pi * i / k - math.pi / k
            return pos, pos.copy()
        return (2 * math.pi * i / k - 1.5 * math.pi / k,
                2 * math.pi * i / k - 0.5 * math.pi / k)

    def reflection_shift(self):
        """Longitude offset from positive vortex i to negative vortex i."""
        return 0.0 if self.variant == "type1" else math.pi / self.k


def _street_degenerate(s):
    # type1 at the equator puts each negative vortex on top of a positive one
    return s.variant == "type1" and s.theta0 == math.pi / 2


def karman_positions(s, gamma=0.0):
    """The 2k vortices of a street as a :class:`VortexConfig`."""
    pp, pn = s.longitudes()
    pos = [(SpherePoint(s.theta0, f), s.kappa) for f in pp]
    neg = [(SpherePoint(math.pi - s.theta0, f), s.kappa) for f in pn]
    return VortexConfig(tuple(pos), tuple(neg), gamma)


def karman_speed(s, include_self_term=True):
    """Common longitude rate of the street (with gamma = 0)."""
    if _street_degenerate(s):
        raise DomainError("type1 street at theta0 = pi/2 has coincident vortices")
    pp, pn = s.longitudes()
    th0 = s.theta0
    gt_pos, _ = green_grad(th0, pp[0], th0, pp[1:])
    gt_neg, _ = green_grad(th0, pp[0], math.pi - th0, pn)
    dpsi = s.kappa * (np.sum(gt_pos) - np.sum(gt_neg))
    if include_self_term:
        dpsi += s.kappa * float(robin_slope(th0))
    return float(-dpsi / math.sin(th0))


def relative_equilibrium_residual(c, W, include_self_term=True):
    """max_i |dtheta_i/dt| + |dphi_i/dt - W|."""
    v = vortex_velocities(c, include_self_term)
    return float(np.max(np.abs(v.dtheta) + np.abs(v.dphi - W)))


def antipodal_dipole(theta_plus, kappa=1.0, include_self_term=True):
    """Antipodal +/- pair rigidly rotating; returns (config with gamma, rate).

    The mutual interaction of antipodal vortices is zero, so the rotation
    rate comes from the self term alone (and is zero without it).
    """
    c0 = VortexConfig(((SpherePoint(theta_plus, 0.0), kappa),),
                      ((SpherePoint(math.pi - theta_plus, math.pi), kappa),))
    rate = float(vortex_velocities(c0, include_self_term).dphi[0])
    return VortexConfig(c0.positives, c0.negatives, rate), rate


@dataclass
class CriticalPoint:
    config: VortexConfig
    gradient_norm: float
    hessian_spectrum: np.ndarray
    complement_spectrum: np.ndarray
    nondegenerate: bool
    converged: bool
    iterations: int
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def zero_mode_count(self):
        lam = np.abs(self.hessian_spectrum)
        return int(np.sum(lam < 1e-6 * max(lam.max(), 1e-300)))


def _complement_basis(n_vort):
    """Orthonormal basis of the complement of the longitude-shift mode."""
    e = np.zeros(2 * n_vort)
    e[1::2] = 1.0 / math.sqrt(n_vort)
    q, _ = np.linalg.qr(np.column_stack([e, np.eye(2 * n_vort)]))
    return e, q[:, 1:2 * n_vort]


def find_critical_point(initial, tol=1e-10, max_iter=100, include_self_term=True,
                        threshold=1e-6, hessian_step=1e-4):
    """Newton iteration for grad K = 0 modulo the longitude symmetry.

    Steps are taken in the complement of the global longitude mode with a
    backtracking line search on ``|grad|^2``. Failure (iteration cap,
    collision, non-finite values) is reported in the result, not raised.
    """
    th, ph, sk = initial.arrays()
    gam = initial.gamma
    n = th.size
    _, basis = _complement_basis(n)
    x = np.column_stack([th, ph]).ravel()
    phi_ref = ph[0]

    def grad(v):
        gt, gp = gradient_arrays(v[0::2], v[1::2], sk, gam, include_self_term)
        return np.column_stack([gt, gp]).ravel()

    def ok(v):
        t = v[0::2]
        return (np.all(np.isfinite(v)) and np.all(t > 0) and np.all(t < math.pi)
                and _min_separation(t, v[1::2]) > 1e-4)

    if not ok(x):
        raise DomainError("initial configuration is not admissible")
    g = grad(x)
    gn = float(np.linalg.norm(g))
    history = [gn]
    message = ""
    converged = gn < tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        cfg = initial.with_positions(x[0::2], normalize_longitude(x[1::2]))
        hess = hessian_kirchhoff_routh(cfg, include_self_term, hessian_step)
        hc = basis.T @ hess @ basis
        rhs = basis.T @ g
        step = -basis @ np.linalg.lstsq(hc, rhs, rcond=1e-12)[0]
        alpha = 1.0
        accepted = False
        for _ in range(40):
            xn = x + alpha * step
            if ok(xn):
                gnew = grad(xn)
                if np.linalg.norm(gnew) < gn * (1.0 - 1e-4 * alpha) or \
                        np.linalg.norm(gnew) < tol:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            message = "line search failed" if ok(x + 1e-12 * step) else "collision guard"
            break
        x, g = xn, gnew
        gn = float(np.linalg.norm(g))
        history.append(gn)
        converged = gn < tol
    if not converged and not message:
        message = f"no convergence in {max_iter} iterations"
    # gauge: first vortex back to its initial longitude
    x[1::2] += phi_ref - x[1]
    cfg = initial.with_positions(x[0::2], normalize_longitude(x[1::2]))
    hess = hessian_kirchhoff_routh(cfg, include_self_term, hessian_step)
    spec = np.sort(np.linalg.eigvalsh(hess))
    comp = np.sort(np.linalg.eigvalsh(basis.T @ hess @ basis))
    absc = np.abs(comp)
    nondeg = bool(absc.min() > threshold * max(absc.max(), 1e-300))
    return CriticalPoint(cfg, gn, spec, comp, nondeg, bool(converged), it,
                         message or "converged", history)
