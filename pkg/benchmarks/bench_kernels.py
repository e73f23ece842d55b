"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the environment switch is not
needed. Each row also checks that the two backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from inhomfield import _kernels_py as py

try:
    from inhomfield import _kernels as cy
except ImportError:  # extension not built
    cy = None


def _cases(rng):
    noise = rng.standard_normal((512, 512))

    def torus(mod):
        out = np.zeros_like(noise)
        for k in range(9):
            mod.add_torus_box_sum(noise, 1 << k, 0.5, out)
        return out

    pts = rng.integers(0, 512, size=(400, 2))
    xs, ys = pts[:, 0].copy(), pts[:, 1].copy()

    traj = rng.standard_normal((5000, 10)).cumsum(axis=1)
    center = np.zeros(10)
    half = np.full(10, 6.0)

    samples = rng.standard_normal((2000, 64))
    omega = rng.integers(0, 64, size=(300, 3))

    return {
        "add_torus_box_sum 512^2 x 9 levels": lambda m: torus(m),
        # an empty window forces the full pair scan
        "pair_in_range 400 points": lambda m: m.pair_in_range(xs, ys, 10 ** 7, 10 ** 7 + 1),
        "tube_exit 5000 x 10": lambda m: m.tube_exit(traj, center, half, 2, 7),
        "max_subset_sums 2000 x 300": lambda m: m.max_subset_sums(samples, omega),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':38s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  agree")
    for name, fn in cases.items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:38s} {t_py:10.2f} {'-':>10s} {'-':>8s}  -")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        agree = np.allclose(np.asarray(fn(py), float), np.asarray(fn(cy), float))
        print(f"{name:38s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
