"""Compare the numba and numpy kernel backends on pipeline-sized inputs.

    python benchmarks/bench_kernels.py --samples 5000000 --repeat 3
"""

import argparse
import timeit

import numpy as np
from scipy.stats import norm

from twinqrng._kernels import NUMBA_KERNELS, NUMPY_KERNELS


def cases(n_samples: int, rng: np.random.Generator):
    x = rng.standard_normal(n_samples)
    edges = norm.ppf(np.arange(1, 256) / 256)
    a = rng.integers(0, 2, 8 * n_samples, dtype=np.uint8)
    b = rng.integers(0, 2, 8 * n_samples, dtype=np.uint8)
    mask = a == b
    seq = a[:1_000_000]
    return {
        "encode_bits (8-bit)": lambda k: k.encode_bits(x, edges, 8),
        "common_bits": lambda k: k.common_bits(a, b),
        "mask_indices": lambda k: k.mask_indices(mask, 0),
        "single_pole": lambda k: k.single_pole(x, 0.53, 0.85),
        "pattern_counts (m=3, 1e6)": lambda k: k.pattern_counts(seq, 3),
        "longest_runs (M=1e4, 1e6)": lambda k: k.longest_runs(seq, 10_000),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=5_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if NUMBA_KERNELS is None:
        raise SystemExit("numba is not installed; nothing to compare")

    table = cases(args.samples, np.random.default_rng(0))
    for fn in table.values():  # compile outside the timed region
        fn(NUMBA_KERNELS)

    print(f"{'kernel':28s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, fn in table.items():
        t_np = min(timeit.repeat(lambda: fn(NUMPY_KERNELS), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fn(NUMBA_KERNELS), number=1, repeat=args.repeat))
        print(f"{name:28s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
