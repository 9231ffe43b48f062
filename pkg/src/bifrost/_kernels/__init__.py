"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback
is used otherwise.  ``BIFROST_KERNELS=python`` forces the fallback,
``BIFROST_KERNELS=compiled`` demands the extension (import error if it
is missing).  Both backends expose the same functions and produce
identical results for integer-valued data.
"""

import os

from . import pyref

_choice = os.environ.get("BIFROST_KERNELS", "auto").lower()

if _choice == "python":
    impl = pyref
elif _choice == "compiled":
    from . import _core as impl
elif _choice == "auto":
    try:
        from . import _core as impl
    except ImportError:
        impl = pyref
else:
    raise ImportError(f"BIFROST_KERNELS must be auto, compiled, or python, not {_choice!r}")


def backend_name():
    return "compiled" if impl is not pyref else "python"


gemm = impl.gemm
conv2d_nchw = impl.conv2d_nchw
conv2d_nhwc = impl.conv2d_nhwc
im2col_nchw = impl.im2col_nchw
im2col_nhwc = impl.im2col_nhwc
maxpool2d = impl.maxpool2d
flex_conv = impl.flex_conv
flex_fc = impl.flex_fc
sparse_gemm = impl.sparse_gemm
systolic_gemm = impl.systolic_gemm
