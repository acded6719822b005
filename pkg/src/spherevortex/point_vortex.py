"""Signed point vortices on the rotating sphere.

Kirchhoff-Routh function (positive strengths, signs carried by the lists)::

    K = 1/2 sum_{i != j} s_i s_j G(z_i, z_j) + 1/2 sum_i kappa_i^2 h(theta_i)
        - gamma sum_i s_i cos(theta_i)

with ``s_i = +kappa`` for positive and ``-kappa`` for negative vortices.
The motion is the Hamiltonian flow

    s_i sin(theta_i) dtheta_i/dt =  dK/dphi_i
    s_i sin(theta_i) dphi_i/dt   = -dK/dtheta_i

which is ``v = J grad psi`` with ``J = [[0, 1], [-1, 0]]`` in the
``(e_theta, e_phi)`` frame. The gamma term gives every vortex
``dphi/dt = -gamma``.

The self term ``h`` is the Robin potential of :mod:`spherevortex.greens`
when ``include_self_term`` is on, so each vortex picks up an extra
longitude rate ``-sign_i kappa_i cot(theta_i) / (16 pi sin(theta_i))``.
With the flag off ``h`` is the constant diagonal value and the dynamics
are the classical ones.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import _kernels
from .errors import DomainError, SingularityError, ValidationError
from .greens import H_DIAG, robin_potential, robin_slope
from .sphere_geom import SpherePoint, cartesian, normalize_longitude

CLOSE_APPROACH = 1e-4
GAUSS_RTOL = 1e-12


@dataclass(frozen=True)
class VortexConfig:
    """Positive and negative point vortices plus the sphere rotation gamma.

    ``relaxed=True`` skips the Gauss constraint (sub-systems).
    """

    positives: tuple
    negatives: tuple
    gamma: float = 0.0
    relaxed: bool = False

    def __post_init__(self):
        pos = tuple((p, float(k)) for p, k in self.positives)
        neg = tuple((p, float(k)) for p, k in self.negatives)
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)
        object.__setattr__(self, "gamma", float(self.gamma))
        if not pos and not neg:
            raise ValidationError("empty vortex configuration")
        for p, k in pos + neg:
            if not isinstance(p, SpherePoint):
                raise ValidationError("positions must be SpherePoint instances")
            if not (k > 0.0 and math.isfinite(k)):
                raise ValidationError(f"strength {k} must be positive")
        if not self.relaxed:
            sp = sum(k for _, k in pos)
            sn = sum(k for _, k in neg)
            if abs(sp - sn) > GAUSS_RTOL * max(sp, sn):
                raise ValidationError(
                    f"Gauss constraint violated: {sp!r} positive vs {sn!r} negative")
        th, ph, _ = self.arrays()
        if th.size > 1:
            x = cartesian(th, ph)
            dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
            np.fill_diagonal(dist, np.inf)
            if dist.min() == 0.0:
                raise SingularityError("two vortices coincide")

    @property
    def n(self):
        return len(self.positives) + len(self.negatives)

    def arrays(self):
        """(theta, phi, signed strength) arrays, positives first."""
        allv = self.positives + self.negatives
        th = np.array([p.colatitude for p, _ in allv])
        ph = np.array([p.longitude for p, _ in allv])
        sk = np.array([k for _, k in self.positives] + [-k for _, k in self.negatives])
        return th, ph, sk

    def with_positions(self, th, ph):
        """Same strengths and gamma at new coordinates."""
        npos = len(self.positives)
        pts = [SpherePoint(float(t), float(f)) for t, f in zip(th, ph)]
        pos = tuple((pts[i], k) for i, (_, k) in enumerate(self.positives))
        neg = tuple((pts[npos + i], k) for i, (_, k) in enumerate(self.negatives))
        return replace(self, positives=pos, negatives=neg)

    def moment(self):
        """Signed-strength moment vector sum s_i x_i."""
        th, ph, sk = self.arrays()
        return sk @ cartesian(th, ph)


@dataclass(frozen=True)
class PhaseVelocity:
    """Per-vortex (dtheta/dt, dphi/dt), positives first."""

    dtheta: np.ndarray
    dphi: np.ndarray

    def as_pairs(self):
        return list(zip(self.dtheta.tolist(), self.dphi.tolist()))


# -------------------------------------------------------------- array core

def _self_potential(th, include_self_term):
    if include_self_term:
        return robin_potential(th)
    return np.full_like(th, H_DIAG)


def energy_arrays(th, ph, sk, gamma, include_self_term=True):
    e_int, _, _ = _kernels.pv_interactions(th, ph, sk)
    kap2 = sk * sk
    e_self = 0.5 * np.sum(kap2 * _self_potential(th, include_self_term))
    return e_int + e_self - gamma * np.sum(sk * np.cos(th))


def gradient_arrays(th, ph, sk, gamma, include_self_term=True):
    _, gt, gp = _kernels.pv_interactions(th, ph, sk)
    gt = gt + gamma * sk * np.sin(th)
    if include_self_term:
        gt = gt + sk * sk * robin_slope(th)
    return gt, gp


def velocity_arrays(th, ph, sk, gamma, include_self_term=True):
    gt, gp = gradient_arrays(th, ph, sk, gamma, include_self_term)
    den = sk * np.sin(th)
    return gp / den, -gt / den


def _min_separation(th, ph):
    if th.size < 2:
        return math.inf
    x = cartesian(th, ph)
    diff = x[:, None, :] - x[None, :, :]
    chord = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(chord, np.inf)
    c = chord.min()
    return 2.0 * math.asin(min(1.0, 0.5 * c))


# -------------------------------------------------------------- public API

def kirchhoff_routh(c, include_self_term=True):
    """Value of the Kirchhoff-Routh function."""
    th, ph, sk = c.arrays()
    return float(energy_arrays(th, ph, sk, c.gamma, include_self_term))


def grad_kirchhoff_routh(c, include_self_term=True):
    """Per-vortex ``(dK/dtheta, dK/dphi)`` as an (N, 2) array."""
    th, ph, sk = c.arrays()
    gt, gp = gradient_arrays(th, ph, sk, c.gamma, include_self_term)
    return np.column_stack([gt, gp])


def hessian_kirchhoff_routh(c, include_self_term=True, step=1e-4):
    """Symmetrised central-difference Hessian; variables [th1, ph1, th2, ...]."""
    th, ph, sk = c.arrays()
    x0 = np.column_stack([th, ph]).ravel()
    n = x0.size

    def grad(x):
        gt, gp = gradient_arrays(x[0::2], x[1::2], sk, c.gamma, include_self_term)
        return np.column_stack([gt, gp]).ravel()

    hess = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        hess[:, i] = (grad(x0 + e) - grad(x0 - e)) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def vortex_velocities(c, include_self_term=True):
    """Phase velocities of every vortex (positives first)."""
    th, ph, sk = c.arrays()
    dth, dph = velocity_arrays(th, ph, sk, c.gamma, include_self_term)
    return PhaseVelocity(dth, dph)


def frame_shift(c, delta):
    """Same vortices seen from a frame rotating ``delta`` faster."""
    return replace(c, gamma=c.gamma + float(delta))


@dataclass
class Trajectory:
    """Integration output sampled every step."""

    times: np.ndarray
    theta: np.ndarray  # (steps+1, N)
    phi: np.ndarray
    energy: np.ndarray
    moment: np.ndarray  # (steps+1, 3)
    template: VortexConfig = field(repr=False)

    def config(self, i=-1):
        return self.template.with_positions(self.theta[i], normalize_longitude(self.phi[i]))

    @property
    def energy_drift(self):
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / max(abs(e0), 1e-300))

    @property
    def moment_drift(self):
        return float(np.max(np.abs(self.moment - self.moment[0])))


def integrate(c, dt, steps, scheme="rk4", include_self_term=True,
              guard=0.1, close_approach=CLOSE_APPROACH):
    """Integrate the vortex motion with fixed steps.

    Raises :class:`DomainError` when ``dt * max|v|`` exceeds ``guard`` and
    :class:`SingularityError` when two vortices come within
    ``close_approach`` radians.
    """
    if scheme not in ("rk4", "midpoint"):
        raise DomainError(f"unknown scheme {scheme!r}")
    steps = int(steps)
    if steps < 0:
        raise DomainError("steps must be non-negative")
    th, ph, sk = c.arrays()
    th, ph = th.copy(), ph.copy()
    gam = c.gamma

    def rhs(t_, p_):
        return velocity_arrays(t_, p_, sk, gam, include_self_term)

    n = th.size
    out_t = np.empty((steps + 1, n))
    out_p = np.empty((steps + 1, n))
    energy = np.empty(steps + 1)
    moment = np.empty((steps + 1, 3))

    def record(i):
        out_t[i], out_p[i] = th, ph
        energy[i] = energy_arrays(th, ph, sk, gam, include_self_term)
        moment[i] = sk @ cartesian(th, ph)

    record(0)
    for i in range(steps):
        a_t, a_p = rhs(th, ph)
        speed = np.max(np.hypot(a_t, np.sin(th) * a_p))
        if dt * speed > guard:
            raise DomainError(
                f"step guard: dt*max|v| = {dt * speed:.3g} > {guard} at step {i}")
        if scheme == "rk4":
            b_t, b_p = rhs(th + 0.5 * dt * a_t, ph + 0.5 * dt * a_p)
            c_t, c_p = rhs(th + 0.5 * dt * b_t, ph + 0.5 * dt * b_p)
            d_t, d_p = rhs(th + dt * c_t, ph + dt * c_p)
            th = th + dt / 6.0 * (a_t + 2.0 * b_t + 2.0 * c_t + d_t)
            ph = ph + dt / 6.0 * (a_p + 2.0 * b_p + 2.0 * c_p + d_p)
        else:
            b_t, b_p = rhs(th + 0.5 * dt * a_t, ph + 0.5 * dt * a_p)
            th = th + dt * b_t
            ph = ph + dt * b_p
        sep = _min_separation(th, ph)
        if sep < close_approach:
            raise SingularityError(
                f"close approach {sep:.3g} rad at t={(i + 1) * dt:.6g}")
        if np.any(th <= 0.0) or np.any(th >= math.pi):
            raise SingularityError(f"vortex reached a pole at t={(i + 1) * dt:.6g}")
        record(i + 1)
    return Trajectory(dt * np.arange(steps + 1), out_t, out_p, energy, moment, c)
