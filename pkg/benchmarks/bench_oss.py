"""Compare the compiled and pure-Python OSS kernels on simulated processes.

    python benchmarks/bench_oss.py --n 200 400 --measure oss_both --repeat 3
"""

import argparse
import time

import numpy as np

from procflow import dissim, gen


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--measure", choices=("oss_action", "oss_both"), default="oss_both")
    ap.add_argument("--p-continue", type=float, default=0.8, help="controls sequence length")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if dissim._oss_c is None:
        raise SystemExit("compiled extension not available; build with `pip install --no-build-isolation -e .`")
    print(f"{'n':>6} {'pairs':>9} {'mean_len':>9} {'compiled_s':>11} {'python_s':>10} {'speedup':>8}  identical")
    for n in args.n:
        p = gen.seq_gen(n, p_continue=args.p_continue, time=gen.TimeModel(), seed=args.seed)
        tc, a = best_of(lambda: dissim.dissimilarity_matrix(p, args.measure, backend="compiled").values, args.repeat)
        tp, b = best_of(lambda: dissim.dissimilarity_matrix(p, args.measure, backend="python").values, args.repeat)
        print(f"{n:>6} {n * (n - 1) // 2:>9} {p.lengths.mean():>9.1f} {tc:>11.4f} {tp:>10.4f} {tp / tc:>8.1f}  {np.array_equal(a, b)}")


if __name__ == "__main__":
    main()
