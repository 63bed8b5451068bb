"""Compare the compiled cone kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--cones 2000] [--repeat 20]

Cone sizes mimic the OPF relaxations: mostly 3-dimensional blocks with a
few 4-dimensional ones.
"""

import argparse
import timeit

import numpy as np

from socopf.solver import kernels


def random_interior(rng, dims):
    parts = []
    for d in dims:
        v = rng.standard_normal(d)
        v[0] = np.linalg.norm(v[1:]) + rng.uniform(0.1, 2.0)
        parts.append(v)
    return np.concatenate(parts)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cones", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    dims = np.where(rng.random(args.cones) < 0.9, 3, 4).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(np.int64)
    s, z, d = (random_interior(rng, dims) for _ in range(3))

    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled kernels not built; timing the fallback only")

    def calls(k):
        eta, w, lam = k.nt_scaling(s, z, offsets, dims)
        return {
            "nt_scaling": lambda: k.nt_scaling(s, z, offsets, dims),
            "apply_scaling": lambda: k.apply_scaling(d, eta, w, offsets, dims),
            "jordan_product": lambda: k.jordan_product(s, z, offsets, dims),
            "jordan_divide": lambda: k.jordan_divide(lam, d, offsets, dims),
            "max_step": lambda: k.max_step(s, d, offsets, dims),
            "scaling_squared": lambda: k.scaling_squared(eta, w, offsets, dims),
        }

    timings = {}
    for name, k in backends.items():
        for op, fn in calls(k).items():
            fn()  # warm caches
            timings[name, op] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    ops = list(calls(kernels.python_backend))
    print(f"{args.cones} cones, best of {args.repeat}")
    print(f"{'kernel':<16} {'python (us)':>12} {'cython (us)':>12} {'speedup':>8}")
    for op in ops:
        py = timings["python", op] * 1e6
        if "cython" in backends:
            cy = timings["cython", op] * 1e6
            print(f"{op:<16} {py:12.1f} {cy:12.1f} {py / cy:8.1f}")
        else:
            print(f"{op:<16} {py:12.1f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
