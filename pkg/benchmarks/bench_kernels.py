#!/usr/bin/env python3
"""Time the edge scatter/gather kernels on both backends.

The compiled extension and the numpy fallback share accumulation order for
the scatter kernels, so besides timing this also asserts those outputs
agree bitwise at every size; the row-dot reduction is only checked to
float rounding (einsum reduces in a different order).

Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from gapgcn import kernels

# (rows, edges, width): one typical batched snippet, one large batch, one
# stress size well past anything training produces
SIZES = [(64, 190, 256), (512, 1500, 256), (4096, 12000, 256)]


def make_case(rng, rows, edges, width, dtype=np.float32):
    return {
        "mat": rng.standard_normal((rows, width)).astype(dtype),
        "src": rng.integers(0, rows, edges),
        "dst": rng.integers(0, rows, edges),
        "coef": rng.standard_normal(edges).astype(dtype),
        "gate_w": rng.standard_normal((rows, width)).astype(dtype),
    }


def run_once(case, rows, width, dtype=np.float32):
    out = np.zeros((rows, width), dtype=dtype)
    kernels.scaled_row_scatter(out, case["dst"], case["mat"], case["src"],
                               case["coef"])
    dots = np.empty(len(case["src"]), dtype=dtype)
    kernels.edge_row_dot(case["mat"], case["src"], case["gate_w"],
                         case["dst"], dots)
    acc = np.zeros(rows, dtype=dtype)
    kernels.scatter_add_1d(acc, case["dst"], case["coef"])
    return out, dots, acc


def bench(case, rows, width, repeats):
    run_once(case, rows, width)  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_once(case, rows, width)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not available; timing numpy only")

    rng = np.random.default_rng(0)
    print(f"{'rows':>6} {'edges':>6} {'width':>6}"
          + "".join(f" {b + ' (us)':>12}" for b in backends)
          + ("     speedup" if len(backends) > 1 else ""))
    try:
        for rows, edges, width in SIZES:
            case = make_case(rng, rows, edges, width)
            times = {}
            results = {}
            for b in backends:
                kernels.set_backend(b)
                times[b] = bench(case, rows, width, args.repeats)
                results[b] = run_once(case, rows, width)
            if len(backends) > 1:
                c_out, c_dots, c_acc = results["cython"]
                n_out, n_dots, n_acc = results["numpy"]
                np.testing.assert_array_equal(c_out, n_out)
                np.testing.assert_array_equal(c_acc, n_acc)
                np.testing.assert_allclose(c_dots, n_dots, rtol=1e-4,
                                           atol=1e-4)
            line = f"{rows:>6} {edges:>6} {width:>6}" + "".join(
                f" {times[b] * 1e6:>12.1f}" for b in backends)
            if len(backends) > 1:
                line += f" {times['numpy'] / times['cython']:>10.2f}x"
            print(line)
    finally:
        kernels.set_backend("auto")
    if len(backends) > 1:
        print("scatter outputs bitwise-identical across backends "
              "at every size")


if __name__ == "__main__":
    main()
