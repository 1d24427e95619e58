"""Kernel backend selection.

Imports the compiled extension when available, otherwise the pure-numpy
fallback. Set WASTESCAN_PURE_PYTHON=1 to force the fallback (the benchmark
suite uses this to compare the two). Both backends are bit-identical by
construction; the choice only affects speed.
"""

import os

if os.environ.get("WASTESCAN_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION

resample_u8 = _impl.resample_u8
bilinear_f64 = _impl.bilinear_f64
gray_u8 = _impl.gray_u8
block_variance = _impl.block_variance
