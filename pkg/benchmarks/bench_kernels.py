"""Time the compiled and NumPy Riccati kernels on random problems.

Usage::

    python benchmarks/bench_kernels.py [--sizes 2 5 10 20] [--repeat 5]

Both backends get identical inputs; the largest difference between their
final iterates is printed next to the timings.
"""

import argparse
import time

import numpy as np

from econlq._backend import available_backends


def random_problem(rng, n, m):
    A = rng.standard_normal((n, n)) / np.sqrt(n) * 1.2
    B = rng.standard_normal((n, m))
    Q = np.eye(n)
    R = np.eye(m)
    S = np.zeros((m, n))
    return A, B, Q, S, R


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(sizes, repeat, steps, seed):
    backends = available_backends()
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        m = max(1, n // 2)
        A, B, Q, S, R = random_problem(rng, n, m)
        P0 = np.zeros((n, n))
        cases = {
            "regularized_iteration": lambda k: k.regularized_iteration(A, B, Q, S, R, P0, 1e-13, steps, 1e12, 1e-14)[0],
            "generalized_recursion": lambda k: k.generalized_recursion(
                A, B, Q, S, R, P0, steps, 1e-10, 0.0, 1e12, False
            )[0],
        }
        for name, call in cases.items():
            times, results = {}, {}
            for label, mod in backends.items():
                times[label], results[label] = best_time(lambda: call(mod), repeat)
            diff = max(np.abs(results[a] - results["python"]).max() for a in results)
            rows.append((name, n, m, times, diff))
    return rows, sorted(backends)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[2, 5, 10, 20])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--steps", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rows, labels = bench(args.sizes, args.repeat, args.steps, args.seed)
    head = f"{'kernel':<24}{'n':>4}{'m':>4}" + "".join(f"{lab + ' [ms]':>16}" for lab in labels)
    if "compiled" in labels:
        head += f"{'speedup':>10}"
    print(head + f"{'max |diff|':>13}")
    for name, n, m, times, diff in rows:
        line = f"{name:<24}{n:>4}{m:>4}" + "".join(f"{1e3 * times[lab]:>16.3f}" for lab in labels)
        if "compiled" in labels:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line + f"{diff:>13.2e}")


if __name__ == "__main__":
    main()
