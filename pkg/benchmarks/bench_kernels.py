"""Time the compiled kernels against the numpy reference implementation.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--intervals 16]

Inputs are random but seeded; both backends receive identical arrays and the
script also reports the largest difference between their outputs.
"""
import argparse
import time

import numpy as np

from depcag_lab import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def make_inputs(rng, L, m, q, N, steps):
    c = lambda *shape: rng.normal(size=shape) + 1j * rng.normal(size=shape)
    ts = np.linspace(0.0, 1.0, steps + 1)
    march = (ts, 0.1 * c(steps, 3, N, N), c(steps, 3, N), c(N))
    w = rng.uniform(size=(L, m, q))
    H = np.eye(N) + 0.1 * c(L, N, N)
    green = (c(L, m, N), c(L, m, N), H, np.linalg.inv(H),
             c(L, m + 1, N, N), c(L, m + 1, N, N), c(L, m + 1, N, N))
    return march, (c(L, m, q, N, N), w, c(L, m, q, N)), green


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--intervals", type=int, default=16)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--steps", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)

    if kernels.BACKEND != "cython":
        print("compiled kernels not built; only the python backend is available")
        return 1
    rng = np.random.default_rng(args.seed)
    march, moments, green = make_inputs(rng, args.intervals, args.samples, 4, args.dim, args.steps)
    cases = [
        ("march_affine", lambda b: kernels.march_affine(*march, backend=b)),
        ("panel_moments", lambda b: kernels.panel_moments(*moments, backend=b)),
        ("green_assemble", lambda b: kernels.green_assemble(*green, exact=False, backend=b)),
        ("green_assemble_exact", lambda b: kernels.green_assemble(*green, exact=True, backend=b)),
    ]
    print(f"{'kernel':<22}{'python [ms]':>13}{'cython [ms]':>13}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases:
        tp, op = best_of(lambda: fn("python"), args.repeat)
        tc, oc = best_of(lambda: fn("cython"), args.repeat)
        diff = float(np.max(np.abs(op - oc)))
        print(f"{name:<22}{tp * 1e3:>13.3f}{tc * 1e3:>13.3f}{tp / tc:>10.1f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
