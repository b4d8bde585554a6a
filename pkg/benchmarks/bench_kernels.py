"""Time the numba and numpy paths of each hot kernel on representative sizes.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call is timed separately as compile (or cache load) time.
"""

import argparse
import time

import numpy as np

from emergelab import _accel, kernels as K


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    x = np.linspace(-4, 4, 512)
    p = np.exp(-x**2)
    F = 0.5 * x**2

    def fp(step):
        def go():
            q = p
            for _ in range(200):
                q = step(q, F, 0.25, 1.0, 1e-3, x[1] - x[0], False)
        return go

    xm = np.linspace(-6, 6, 512)
    ell, v, V = -0.5 * xm**2, np.zeros_like(xm), 0.5 * xm**2

    def mad(adv):
        return lambda: adv(ell, v, V, xm[1] - xm[0], 1.0, 1.0, 2.0, 1e-3, 100, False)

    pts = rng.normal(size=(4096, 3))
    centers = rng.normal(size=(64, 3))
    A = rng.normal(size=(64, 3, 3))
    gm = A @ A.transpose(0, 2, 1) + np.eye(3)
    payload = rng.normal(size=(64, 10))

    def curly(acc):
        return lambda: acc(pts, centers, gm, payload)

    vals = rng.normal(size=(1, 32, 32, 32, 80))
    origin = np.zeros(4)
    spacing = np.array([1.0, 0.2, 0.2, 0.2])
    per = np.array([False, True, True, True])
    qs = rng.uniform(0, 6.4, size=(2000, 4)) * np.array([0, 1, 1, 1])

    def interp(fn):
        return lambda: [fn(vals, origin, spacing, per, q) for q in qs]

    return [
        ("fp_flux_step x200 (n=512)", fp(K.fp_flux_step_np), fp(K.fp_flux_step_jit)),
        ("madelung_advance 100 RK4 (n=512)", mad(K.madelung_advance_np), mad(K.madelung_advance_jit)),
        ("curly_accumulate (4096 pts, 64 neurons)", curly(K.curly_accumulate_np), curly(K.curly_accumulate_jit)),
        ("interp_multilinear x2000 (32^3, 80 comps)", interp(K.interp_multilinear_np), interp(K.interp_multilinear_jit)),
        ("interp_multilinear_batch (2000 pts)",
         lambda: K.interp_multilinear_batch(vals, origin, spacing, per, qs), None),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba not installed: timing the numpy path only")
    print(f"{'kernel':44s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'compile [s]':>12s} {'speedup':>8s}")
    for name, np_fn, jit_fn in cases():
        t_np = _time(np_fn, args.repeat)
        if jit_fn is None or not _accel.HAVE_NUMBA:
            print(f"{name:44s} {t_np * 1e3:11.2f} {'-':>11s} {'-':>12s} {'-':>8s}")
            continue
        t0 = time.perf_counter()
        jit_fn()
        first = time.perf_counter() - t0
        t_jit = _time(jit_fn, args.repeat)
        print(f"{name:44s} {t_np * 1e3:11.2f} {t_jit * 1e3:11.2f} {first:12.2f} {t_np / t_jit:7.1f}x")


if __name__ == "__main__":
    main()
