"""Throughput comparison: compiled core vs numpy fallback.

Run as ``python3 benchmarks/bench_kernels.py``.  Both backends are imported
directly (the package-level selection is bypassed), timed on the same
inputs, and checked for agreement before reporting.
"""

import time

import numpy as np

from stnet.kernels import _fallback

try:
    from stnet.kernels import _core
except ImportError:
    _core = None


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(name, args, check=None):
    t_py, out_py = timeit(getattr(_fallback, name), *args)
    row = f"{name:<14} python {t_py * 1e3:8.2f} ms"
    if _core is not None:
        t_c, out_c = timeit(getattr(_core, name), *args)
        agree = np.allclose(out_py, out_c, rtol=1e-5, atol=1e-6)
        row += f"   compiled {t_c * 1e3:8.2f} ms   speedup {t_py / t_c:6.1f}x   agree={agree}"
    print(row)


def main():
    rng = np.random.default_rng(0)
    print(f"compiled core available: {_core is not None}")

    x = rng.normal(size=(16, 64, 64)).astype(np.float32)
    w = rng.normal(size=(32, 16, 3, 3)).astype(np.float32)
    b = rng.normal(size=32).astype(np.float32)
    bench("conv2d", (x, w, b, 1, 1))

    xp = rng.normal(size=(32, 64, 64)).astype(np.float32)
    bench("maxpool2d", (xp, 2, 2, 0))
    bench("avgpool2d", (xp, 2, 2, 0))

    img = rng.uniform(size=(224, 224))
    bench("gaussian_blur", (img, 6.0))

    anchors = rng.integers(0, 224, size=(400, 2)).astype(np.int64)
    bench("box_votes", (224, 224, anchors, 11))


if __name__ == "__main__":
    main()
