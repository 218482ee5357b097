"""Hot-kernel backend selection.

The compiled Cython core is preferred when importable; the numpy fallback
is selected otherwise.  ``STNET_BACKEND=python`` forces the fallback and
``STNET_BACKEND=compiled`` requires the extension (import error if it is
missing).  Both backends expose the same functions and produce results
equal within float32 rounding; ``benchmarks/bench_kernels.py`` compares
their throughput.
"""

import os

_choice = os.environ.get("STNET_BACKEND", "auto").lower()

if _choice == "python":
    from stnet.kernels import _fallback as _impl
elif _choice == "compiled":
    from stnet.kernels import _core as _impl  # type: ignore[no-redef]
elif _choice == "auto":
    try:
        from stnet.kernels import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        from stnet.kernels import _fallback as _impl
else:
    raise ImportError(f"STNET_BACKEND must be auto, python, or compiled, not {_choice!r}")

BACKEND = _impl.BACKEND
conv2d = _impl.conv2d
maxpool2d = _impl.maxpool2d
avgpool2d = _impl.avgpool2d
gaussian_blur = _impl.gaussian_blur
gaussian_kernel = _impl.gaussian_kernel
box_votes = _impl.box_votes

__all__ = [
    "BACKEND",
    "conv2d",
    "maxpool2d",
    "avgpool2d",
    "gaussian_blur",
    "gaussian_kernel",
    "box_votes",
]
