"""Hot loops, each in two flavours.

``*_nb`` functions are numba-compiled loops; ``*_np`` functions are the
vectorised numpy equivalents. The public names at the bottom point at one
or the other depending on :data:`spherevortex._backend.USE_NUMBA`. Both
sets are importable at all times so tests and the benchmark can compare
them.

Geometry is passed as unit 3-vectors. ``1 - x.y`` is always formed as
``|x - y|^2 / 2``, which keeps full relative accuracy for nearby points.
"""
import math

import numpy as np

from ._backend import USE_NUMBA, njit

FOUR_PI = 4.0 * math.pi
LN2_4PI = math.log(2.0) / FOUR_PI
# contour_stream: nodes closer than ~1e-12 rad to a target are skipped
U_SKIP = 1e-24
# full-ray value F(2) of the radial antiderivative of G sin(rho)
F2 = -(2.0 * math.log(2.0) - 2.0) / FOUR_PI + 2.0 * LN2_4PI


# ------------------------------------------------------------ point vortices

def pv_interactions_np(th, ph, sk):
    """Pair energy 1/2 sum_{i!=j} s_i s_j G and its per-vortex gradient."""
    n = th.size
    a, b = th[:, None], th[None, :]
    dph = ph[:, None] - ph[None, :]
    s1, s2 = np.sin(0.5 * (a - b)), np.sin(0.5 * dph)
    sa, sb = np.sin(a), np.sin(b)
    d = 2.0 * (s1 * s1 + sa * sb * s2 * s2)
    eye = np.eye(n, dtype=bool)
    d = np.where(eye, 1.0, d)
    ss = sk[:, None] * sk[None, :]
    ss = np.where(eye, 0.0, ss)
    g = -np.log(d) / FOUR_PI + LN2_4PI
    energy = 0.5 * np.sum(ss * g)
    dtd = np.sin(a - b) + 2.0 * np.cos(a) * sb * s2 * s2
    dpd = sa * sb * np.sin(dph)
    gt = np.sum(ss * (-dtd / (FOUR_PI * d)), axis=1)
    gp = np.sum(ss * (-dpd / (FOUR_PI * d)), axis=1)
    return energy, gt, gp


@njit
def pv_interactions_nb(th, ph, sk):
    n = th.size
    gt = np.zeros(n)
    gp = np.zeros(n)
    energy = 0.0
    for i in range(n):
        si, ci = math.sin(th[i]), math.cos(th[i])
        for j in range(n):
            if j == i:
                continue
            sj = math.sin(th[j])
            s1 = math.sin(0.5 * (th[i] - th[j]))
            dph = ph[i] - ph[j]
            s2 = math.sin(0.5 * dph)
            d = 2.0 * (s1 * s1 + si * sj * s2 * s2)
            ss = sk[i] * sk[j]
            energy += 0.5 * ss * (-math.log(d) / FOUR_PI + LN2_4PI)
            dtd = math.sin(th[i] - th[j]) + 2.0 * ci * sj * s2 * s2
            dpd = si * sj * math.sin(dph)
            gt[i] -= ss * dtd / (FOUR_PI * d)
            gp[i] -= ss * dpd / (FOUR_PI * d)
    return energy, gt, gp


# ------------------------------------------------------------ patch streams

def _f_of_u_np(u):
    # radial antiderivative of G times sin(rho); F(0) = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ulog = np.where(u > 0.0, u * np.log(u), 0.0)
    return -(ulog - u) / FOUR_PI + LN2_4PI * u


def _f_minus_f2_np(u, v):
    # F(u) - F(2), with v = 2 - u formed accurately; vanishes like v^2
    with np.errstate(divide="ignore", invalid="ignore"):
        far = -(v + (2.0 - v) * np.log1p(-0.5 * v)) / FOUR_PI
    return np.where(u < 1.0, _f_of_u_np(u) - F2, far)


def contour_stream_np(targets, X, dX, h):
    """Stream function of a unit-vorticity region bounded by (X, dX).

    The region's integral of G is done along rays from the target: the
    radial part integrates to ``F(u)``, leaving a sum of ``F d alpha`` over
    nodes, where alpha is the polar angle of the node seen from the target.
    Contours in the target's near hemisphere use ``F`` directly (nodes
    within 1e-12 of the target add nothing since F(0) = 0). Contours lying
    wholly in the far hemisphere use ``F - F(2)``, which removes the
    singular behaviour of d alpha at the antipode; the two agree for
    regions that do not contain the target, which is always the case there
    for regions smaller than a hemisphere.
    """
    diff = targets[:, None, :] - X[None, :, :]
    summ = targets[:, None, :] + X[None, :, :]
    u = 0.5 * np.sum(diff * diff, axis=2)
    v = 0.5 * np.sum(summ * summ, axis=2)
    num = targets @ np.cross(X, dX).T
    cxx = np.cross(targets[:, None, :], X[None, :, :])
    den = np.sum(cxx * cxx, axis=2)
    near = u.min(axis=1) < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den > 0.0, num / den, 0.0)
        f_near = np.where(u > U_SKIP, _f_of_u_np(u), 0.0)
        f_far = _f_minus_f2_np(u, v)
    val = np.where(near, np.sum(f_near * q, axis=1), np.sum(f_far * q, axis=1))
    return h * val


@njit
def contour_stream_nb(targets, X, dX, h):
    nt, n = targets.shape[0], X.shape[0]
    out = np.zeros(nt)
    for i in range(nt):
        x0, x1, x2 = targets[i, 0], targets[i, 1], targets[i, 2]
        acc_near = 0.0
        acc_far = 0.0
        umin = 4.0
        for j in range(n):
            a0, a1, a2 = X[j, 0], X[j, 1], X[j, 2]
            d0, d1, d2 = x0 - a0, x1 - a1, x2 - a2
            u = 0.5 * (d0 * d0 + d1 * d1 + d2 * d2)
            if u < umin:
                umin = u
            c0 = x1 * a2 - x2 * a1
            c1 = x2 * a0 - x0 * a2
            c2 = x0 * a1 - x1 * a0
            den = c0 * c0 + c1 * c1 + c2 * c2
            if den <= 0.0:
                continue
            b0, b1, b2 = dX[j, 0], dX[j, 1], dX[j, 2]
            num = (x0 * (a1 * b2 - a2 * b1) + x1 * (a2 * b0 - a0 * b2)
                   + x2 * (a0 * b1 - a1 * b0))
            q = num / den
            if u < 1.0:
                f = 0.0
                if u > U_SKIP:
                    f = -(u * math.log(u) - u) / FOUR_PI + LN2_4PI * u
                acc_near += f * q
                acc_far += (f - F2) * q
            else:
                e0, e1, e2 = x0 + a0, x1 + a1, x2 + a2
                v = 0.5 * (e0 * e0 + e1 * e1 + e2 * e2)
                fm = -(v + (2.0 - v) * math.log1p(-0.5 * v)) / FOUR_PI
                acc_far += fm * q
                acc_near += (fm + F2) * q
        out[i] = h * (acc_near if umin < 1.0 else acc_far)
    return out


# ------------------------------------------------------------ contour velocity

def contour_velocity_np(targets, X, dX, h):
    """Raw trapezoid sum ``h sum_j ln(1 - x.X_j) dX_j`` (targets off-contour)."""
    diff = targets[:, None, :] - X[None, :, :]
    lg = np.log(0.5 * np.sum(diff * diff, axis=2))
    return h * (lg @ dX)


@njit
def contour_velocity_nb(targets, X, dX, h):
    nt, n = targets.shape[0], X.shape[0]
    out = np.zeros((nt, 3))
    for i in range(nt):
        v0 = v1 = v2 = 0.0
        for j in range(n):
            d0 = targets[i, 0] - X[j, 0]
            d1 = targets[i, 1] - X[j, 1]
            d2 = targets[i, 2] - X[j, 2]
            lg = math.log(0.5 * (d0 * d0 + d1 * d1 + d2 * d2))
            v0 += lg * dX[j, 0]
            v1 += lg * dX[j, 1]
            v2 += lg * dX[j, 2]
        out[i, 0] = h * v0
        out[i, 1] = h * v1
        out[i, 2] = h * v2
    return out


def kress_weights(n):
    """Weights R_m for the log-singular rule on 2n = ``n`` equispaced nodes.

    Integrates ``ln(4 sin^2((t - s)/2)) f(s)`` over a period exactly for
    trigonometric f of degree < n/2; R depends only on the index offset m.
    """
    if n % 2:
        raise ValueError("Kress rule needs an even node count")
    half = n // 2
    m = np.arange(1, half)
    k = np.arange(n)
    ang = 2.0 * math.pi * k[:, None] * m[None, :] / n
    r = -(2.0 * math.pi / half) * np.sum(np.cos(ang) / m[None, :], axis=1)
    r -= (math.pi / half ** 2) * np.cos(math.pi * k)
    return r


def contour_self_velocity_np(X, dX, R):
    """Kress-corrected ``sum ln(1 - X_i.X_j) dX_j`` for targets on the nodes."""
    n = X.shape[0]
    h = 2.0 * math.pi / n
    idx = np.arange(n)
    off = (idx[:, None] - idx[None, :]) % n
    diff = X[:, None, :] - X[None, :, :]
    u = 0.5 * np.sum(diff * diff, axis=2)
    s = np.sin(0.5 * h * off)
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.log(u / (4.0 * s * s))
    diag = np.log(0.5 * np.sum(dX * dX, axis=1))
    smooth[idx, idx] = diag
    w = R[off] + h * smooth
    return w @ dX


@njit
def contour_self_velocity_nb(X, dX, R):
    n = X.shape[0]
    h = 2.0 * math.pi / n
    out = np.zeros((n, 3))
    for i in range(n):
        v0 = v1 = v2 = 0.0
        for j in range(n):
            off = (i - j) % n
            if off == 0:
                lg = math.log(0.5 * (dX[j, 0] ** 2 + dX[j, 1] ** 2 + dX[j, 2] ** 2))
            else:
                d0 = X[i, 0] - X[j, 0]
                d1 = X[i, 1] - X[j, 1]
                d2 = X[i, 2] - X[j, 2]
                s = math.sin(0.5 * h * off)
                lg = math.log(0.5 * (d0 * d0 + d1 * d1 + d2 * d2) / (4.0 * s * s))
            w = R[off] + h * lg
            v0 += w * dX[j, 0]
            v1 += w * dX[j, 1]
            v2 += w * dX[j, 2]
        out[i, 0] = v0
        out[i, 1] = v1
        out[i, 2] = v2
    return out


# ------------------------------------------------------------ area sums

def area_sums_np(targets, pts, w):
    """``(sum w G(x, x'), sum w x'/(1 - x.x'))`` over quadrature points."""
    diff = targets[:, None, :] - pts[None, :, :]
    u = 0.5 * np.sum(diff * diff, axis=2)
    psi = (-np.log(u) / FOUR_PI + LN2_4PI) @ w
    vec = (w[None, :] / u) @ pts
    return psi, vec


@njit
def area_sums_nb(targets, pts, w):
    nt, n = targets.shape[0], pts.shape[0]
    psi = np.zeros(nt)
    vec = np.zeros((nt, 3))
    for i in range(nt):
        acc = 0.0
        v0 = v1 = v2 = 0.0
        for j in range(n):
            d0 = targets[i, 0] - pts[j, 0]
            d1 = targets[i, 1] - pts[j, 1]
            d2 = targets[i, 2] - pts[j, 2]
            u = 0.5 * (d0 * d0 + d1 * d1 + d2 * d2)
            acc += w[j] * (-math.log(u) / FOUR_PI + LN2_4PI)
            c = w[j] / u
            v0 += c * pts[j, 0]
            v1 += c * pts[j, 1]
            v2 += c * pts[j, 2]
        psi[i] = acc
        vec[i, 0] = v0
        vec[i, 1] = v1
        vec[i, 2] = v2
    return psi, vec


if USE_NUMBA:
    pv_interactions = pv_interactions_nb
    contour_stream = contour_stream_nb
    contour_velocity = contour_velocity_nb
    contour_self_velocity = contour_self_velocity_nb
    area_sums = area_sums_nb
else:
    pv_interactions = pv_interactions_np
    contour_stream = contour_stream_np
    contour_velocity = contour_velocity_np
    contour_self_velocity = contour_self_velocity_np
    area_sums = area_sums_np
