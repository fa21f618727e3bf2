"""Compare the compiled resampling kernels against the NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from paddydoc import kernels
from paddydoc.kernels import reference


def _time(fn, *args, repeats=20):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    if kernels.BACKEND != "native":
        print("note: compiled extension not available; timing the fallback against itself")
    rng = np.random.default_rng(0)
    cases = [
        ("resize 512->224", "resize", rng.random((512, 512, 3), dtype=np.float32), (224, 224)),
        ("resize 2048->224", "resize", rng.random((2048, 2048, 3), dtype=np.float32), (224, 224)),
        ("warp 224", "warp", rng.random((224, 224, 3), dtype=np.float32), (0.9, 0.0, 0.12, 0.9)),
        ("warp 512", "warp", rng.random((512, 512, 3), dtype=np.float32), (1.1, 0.0, -0.08, 1.1)),
    ]

    print(f"{'case':<18} {'native (ms)':>12} {'python (ms)':>12} {'speedup':>8}  max|diff|")
    for label, kind, image, params in cases:
        if kind == "resize":
            native = lambda: kernels.bilinear_resize(image, *params)
            python = lambda: reference.bilinear_resize(image, *params)
        else:
            native = lambda: kernels.affine_warp(image, *params)
            python = lambda: reference.affine_warp(image, *params)
        t_native = _time(native) * 1000
        t_python = _time(python) * 1000
        diff = float(np.abs(native() - python()).max())
        print(
            f"{label:<18} {t_native:>12.3f} {t_python:>12.3f} "
            f"{t_python / t_native:>7.1f}x  {diff:.2e}"
        )


if __name__ == "__main__":
    main()
