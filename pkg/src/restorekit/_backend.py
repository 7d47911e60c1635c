"""Select the kernel implementation at import time.

The compiled extension is used when it was built; set
``RESTOREKIT_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from restorekit import _pykernels

python_kernels = _pykernels
compiled_kernels = None

if os.environ.get("RESTOREKIT_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from restorekit import _ckernels as compiled_kernels
    except ImportError:
        compiled_kernels = None
    kernels = compiled_kernels if compiled_kernels is not None else _pykernels

NAME = "cython" if kernels is compiled_kernels else "python"
