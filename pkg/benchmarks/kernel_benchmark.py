#!/usr/bin/env python3
"""Compare the compiled reservoir kernel against the NumPy fallback.

Runs blocked ensemble state evolutions at benchmark-like sizes and
reports wall time per backend plus the numerical agreement between the
two implementations.  The input drive (W_in x_t, state-independent) is
precomputed outside the timed recursion, exactly as the forecaster
does.

Usage: python benchmarks/kernel_benchmark.py [--repeats 3]
"""

import argparse
import time

import numpy as np
from scipy import sparse

from echocast.kernels import available_backends


def build_case(n_members, n_h, n_inputs, n_steps, density=0.1, seed=0):
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(n_members):
        w = sparse.random(n_h, n_h, density=density, random_state=rng,
                          data_rvs=rng.standard_normal, format="csr")
        blocks.append(w)
    w_blk = sparse.block_diag(blocks, format="csr")
    win = sparse.random(n_members * n_h, n_inputs, density=density,
                        random_state=rng, data_rvs=rng.standard_normal,
                        format="csr")
    inputs = rng.standard_normal((n_steps, n_inputs))
    drive = np.ascontiguousarray((win @ inputs.T).T)
    h0 = np.zeros(n_members * n_h)
    return (w_blk.data, w_blk.indices.astype(np.int32),
            w_blk.indptr.astype(np.int32), drive, h0, 0.5, 0.2, 0)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    cases = [
        ("single reservoir, n_h=60, T=1000", build_case(1, 60, 161, 1000)),
        ("ensemble 100, n_h=60, T=1000", build_case(100, 60, 161, 1000)),
        ("ensemble 300, n_h=60, T=1000", build_case(300, 60, 161, 1000)),
    ]
    print(f"available backends: {', '.join(backends)}")
    print(f"{'case':<36} {'backend':<10} {'best of ' + str(args.repeats):>12}")
    for label, case in cases:
        results = {}
        for name, mod in backends.items():
            best = np.inf
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                out = mod.run_states(*case)
                best = min(best, time.perf_counter() - t0)
            results[name] = (best, out)
            print(f"{label:<36} {name:<10} {best * 1e3:>10.1f} ms")
        if len(results) == 2:
            a = results["python"][1]
            b = results["compiled"][1]
            diff = float(np.max(np.abs(a - b)))
            speedup = results["python"][0] / results["compiled"][0]
            print(f"{'':<36} agreement max|diff|={diff:.2e}  "
                  f"speedup x{speedup:.1f}")


if __name__ == "__main__":
    main()
