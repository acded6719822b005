"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once first so compilation stays out of the timing.
The maximum relative difference between the two outputs is printed next
to the speed-up.
"""
import argparse
import math
import timeit

import numpy as np

from spherevortex import _kernels as K
from spherevortex._backend import backend_name
from spherevortex.sphere_geom import cartesian


def _curve(n, theta=1.0, r=0.05):
    a = 2 * math.pi * np.arange(n) / n
    th = theta + r * np.cos(a)
    ph = r * np.sin(a) / np.sin(theta)
    X = cartesian(th, ph)
    dth = -r * np.sin(a)
    dph = r * np.cos(a) / np.sin(theta)
    e_t = np.column_stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
    e_p = np.column_stack([-np.sin(ph), np.cos(ph), np.zeros(n)])
    dX = e_t * dth[:, None] + e_p * (np.sin(th) * dph)[:, None]
    return X, dX


def cases(rng):
    n_pv = 200
    th = rng.uniform(0.3, 2.8, n_pv)
    ph = rng.uniform(0, 2 * math.pi, n_pv)
    sk = rng.choice([-1.0, 1.0], n_pv)
    X, dX = _curve(512)
    h = 2 * math.pi / 512
    tgt = cartesian(rng.uniform(0.3, 2.8, 400), rng.uniform(0, 2 * math.pi, 400))
    R = K.kress_weights(512)
    pts = cartesian(rng.uniform(0.3, 2.8, 4000), rng.uniform(0, 2 * math.pi, 4000))
    w = rng.uniform(0, 1e-3, 4000)
    yield "pv_interactions n=200", K.pv_interactions_np, K.pv_interactions_nb, (th, ph, sk)
    yield "contour_stream 400x512", K.contour_stream_np, K.contour_stream_nb, (tgt, X, dX, h)
    yield "contour_velocity 400x512", K.contour_velocity_np, K.contour_velocity_nb, (tgt, X, dX, h)
    yield ("contour_self_velocity 512", K.contour_self_velocity_np,
           K.contour_self_velocity_nb, (X, dX, R))
    yield "area_sums 400x4000", K.area_sums_np, K.area_sums_nb, (tgt, pts, w)


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o, float)) for o in out])
    return np.ravel(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(7)
    print(f"active backend: {backend_name()}")
    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'rel diff':>9s}")
    for name, f_np, f_nb, a in cases(rng):
        r_np, r_nb = _flat(f_np(*a)), _flat(f_nb(*a))
        diff = np.max(np.abs(r_np - r_nb)) / max(np.max(np.abs(r_np)), 1e-300)
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat))
        print(f"{name:28s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
