"""Compare the compiled kernels with the numpy/scipy fallback.

    python3 benchmarks/bench_kernels.py [--samples N] [--repeat R]

Both backends run the same inputs; the script checks they agree and
reports the best-of-R wall time for each kernel.
"""

import argparse
import time

import numpy as np

from pulsehd import kernels
from pulsehd.catalog import default_catalog
from pulsehd.circuit import FilterSpec, HIGH_PASS, TiaConfig, filter_sos, tia_sos


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cat = default_catalog()
    tia = TiaConfig(cat.opamp("OPA856"), cat.photodiode("FGA015"), 1200.0, 0.0)
    fs = 10e9
    sos = np.vstack([tia_sos(tia, fs), filter_sos(FilterSpec(HIGH_PASS, 100e3), fs)])
    x = np.random.default_rng(0).standard_normal(args.samples)
    period = 100

    backends = kernels.available_backends()
    print(f"samples={args.samples} repeat={args.repeat} backends={backends} default={kernels.BACKEND}")
    results = {}
    for b in backends:
        y, _, _ = kernels.sos_filter(sos, x, lo=-3.0, hi=3.0, backend=b)
        s = kernels.slot_sums(x, 0, period, period, args.samples // period, backend=b)
        results[b] = (y, s)
        t_f = best_of(lambda: kernels.sos_filter(sos, x, lo=-3.0, hi=3.0, backend=b), args.repeat)
        t_s = best_of(lambda: kernels.slot_sums(x, 0, period, period, args.samples // period, backend=b), args.repeat)
        print(f"{b:>8}  sos_filter {t_f * 1e3:8.1f} ms ({args.samples / t_f / 1e6:7.1f} MS/s)"
              f"   slot_sums {t_s * 1e3:7.1f} ms")
    if len(results) == 2:
        (y0, s0), (y1, s1) = results.values()
        print(f"max |dy| = {np.max(np.abs(y0 - y1)):.3g}   max |ds| = {np.max(np.abs(s0 - s1)):.3g}")


if __name__ == "__main__":
    main()
