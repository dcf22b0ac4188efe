"""Time each hot kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 7] [--scale 1.0]

The first numba call (JIT compilation) is excluded from the timings.
"""

import argparse
import timeit

import numpy as np

from wislam.kernels import get_backend


def cases(rng, scale: float):
    F = max(1, int(2000 * scale))
    G = 321
    pos = np.array([[0.0, 0.0], [0.0216, 0.0], [0.0216, 0.0216], [0.0, 0.0216]])
    k = 2 * np.pi / 0.0575
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    H = rng.standard_normal((4, 32)) + 1j * rng.standard_normal((4, 32))
    Hs = rng.standard_normal((max(1, int(20 * scale)), 4, 32)) + 1j * rng.standard_normal((max(1, int(20 * scale)), 4, 32))
    freqs = np.linspace(5.19e9, 5.23e9, 32)
    thetas = np.linspace(-2.79, 2.79, G)
    delays = np.arange(0.0, 200.5e-9, 1e-9)
    q1 = rng.standard_normal((F, 4))
    q1 /= np.linalg.norm(q1, axis=1)[:, None]
    q2 = rng.standard_normal((F, 4))
    q2 /= np.linalg.norm(q2, axis=1)[:, None]
    t1, t2 = rng.standard_normal((F, 3)), rng.standard_normal((F, 3))
    B = rng.standard_normal((4, 40)) + 1j * rng.standard_normal((4, 40))
    A = B @ B.conj().T
    return {
        "steering_objective": lambda m: m.steering_objective(pos, k, thetas, u),
        "grid2d_power": lambda m: m.grid2d_power(H, pos, k, freqs, thetas, delays),
        "autocorr": lambda m: m.autocorr(Hs),
        "odom_residuals": lambda m: m.odom_residuals(t1, q1, t2, q2, rng.standard_normal((F, 6))),
        "bearing_residuals": lambda m: m.bearing_residuals(t1, q1, rng.uniform(-9, 9, (F, 2)), rng.uniform(-3, 3, F)),
        "power_iteration": lambda m: m.power_iteration(A, 500, 1e-12, 1e-10),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies the factor and window counts")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = {name: get_backend(name) for name in ("numpy", "numba")}
    print(f"{'kernel':<20}{'numpy [us]':>14}{'numba [us]':>14}{'speedup':>10}")
    for name, fn in cases(rng, args.scale).items():
        best = {}
        for bname, mod in backends.items():
            fn(mod)  # warm-up, includes JIT compilation for numba
            t = timeit.Timer(lambda: fn(mod))
            n, _ = t.autorange()
            best[bname] = min(t.repeat(args.repeat, n)) / n * 1e6
        print(f"{name:<20}{best['numpy']:>14.1f}{best['numba']:>14.1f}{best['numpy'] / best['numba']:>9.2f}x")


if __name__ == "__main__":
    main()
