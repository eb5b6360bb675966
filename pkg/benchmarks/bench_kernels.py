"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each case runs the same arguments through both backends, checks that the
results agree, and prints the best wall time and the speed-up.
"""

import argparse
import time

import numpy as np

from cdw_lab import _kernels_py, kernels
from cdw_lab.core import generate_impurities


def cases():
    lat = generate_impurities(64, 1.0, 64.0, seed=42)
    yield "transport rk2, 64 sites x 20000 steps", "transport_run", (
        np.zeros(64), lat.sites, lat.pinning_phases, lat.grid_length, 0.5, 0.05, 0.3, 1.0,
        0.0, 0.035, 20_000, np.array([5e-4, 0.3]), 100, 1e9, 1)

    phi = np.linspace(0.0, 2 * np.pi, 400)
    yield "pendulum chain, 400 sites x 20000 steps", "pendulum_run", (
        phi, np.zeros(400), 100.0, 1.0, True, 0.0, 2 * np.pi, 0.005, 20_000, 100, 1e6)

    x = np.linspace(-2 * np.pi, 3 * np.pi, 1024)
    dx = x[1] - x[0]
    psi = np.exp(-(x / 0.3) ** 2).astype(complex)
    psi /= np.sqrt(np.sum(abs(psi) ** 2) * dx)
    yield "crank-nicolson, 1024 points x 6000 steps", "cn_run", (
        psi, x, dx, 1.0, 1.0, 20.0, 200.0, 1.0, 0.0, 1e-3, 6000, False, 10.0, np.pi, 1.0)

    xq = np.linspace(-20.0, 20.0, 128)
    w = np.full(128, xq[1] - xq[0])
    yield "gaussian moments, 128 points x 5 images", "gaussian_moments", (
        0.3, 2 * np.pi * np.arange(-2, 3.0), xq, w, np.cos(xq), np.sin(xq))


def best_time(fn, args, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    cy = kernels.load_backend("cython")
    print(f"{'case':<44}{'cython s':>10}{'python s':>10}{'speed-up':>10}  agree")
    for name, fn, fargs in cases():
        t_c, out_c = best_time(getattr(cy, fn), fargs, args.repeat)
        t_p, out_p = best_time(getattr(_kernels_py, fn), fargs, args.repeat)
        print(f"{name:<44}{t_c:>10.4f}{t_p:>10.4f}{t_p / t_c:>9.1f}x  {agree(out_c, out_p)}")


if __name__ == "__main__":
    main()
