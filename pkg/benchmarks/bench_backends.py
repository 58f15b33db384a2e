#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the exhaustive encoder search and the iterative decoder on the bundled
256x256 test image with both backends and prints per-call timings. Results
are asserted bit-identical, so the numbers compare like for like.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from fractalpose import kernels
from fractalpose.codec import EncoderConfig, decode, encode
from fractalpose.synth import load_sample_image


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    img = load_sample_image()
    cfg = EncoderConfig()
    backends = kernels.available_backends()
    if "numba" in backends:
        encode(img, cfg, backend="numba")  # compile outside the timed region

    print(f"image 256x256, range {cfg.range_size}, stride {cfg.domain_stride}, "
          f"{args.repeats} repeats (best shown)")
    print(f"{'stage':<10} {'backend':<8} {'seconds':>9}")

    codes = {}
    times = {}
    for backend in backends:
        t, codes[backend] = _time(lambda b=backend: encode(img, cfg, backend=b), args.repeats)
        times[("encode", backend)] = t
        print(f"{'encode':<10} {backend:<8} {t:>9.3f}")
    if len(backends) == 2:
        assert codes["numba"] == codes["numpy"], "backends disagree"

    decodes = {}
    for backend in backends:
        code = codes[backend]
        t, decodes[backend] = _time(
            lambda b=backend: decode(code, iterations=10, backend=b), args.repeats
        )
        times[("decode", backend)] = t
        print(f"{'decode x10':<10} {backend:<8} {t:>9.3f}")
    if len(backends) == 2:
        assert np.array_equal(decodes["numba"].pixels, decodes["numpy"].pixels)
        enc = times[("encode", "numpy")] / times[("encode", "numba")]
        dec = times[("decode", "numpy")] / times[("decode", "numba")]
        print(f"numba speedup: encode {enc:.1f}x, decode {dec:.1f}x")


if __name__ == "__main__":
    main()
