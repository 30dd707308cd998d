"""Backend selection for the hot kernels.

The compiled extension is preferred when importable; set
``SELFDEPTH_BACKEND=numpy`` or ``SELFDEPTH_BACKEND=compiled`` to force a
choice.  Both backends expose the same five functions and are compared
against each other (and against loop oracles) in the test suite and in
``selfdepth bench``.
"""

import os

from . import numpy_backend

_choice = os.environ.get("SELFDEPTH_BACKEND", "auto")

if _choice not in ("auto", "numpy", "compiled"):
    raise ValueError(
        f"SELFDEPTH_BACKEND must be auto|numpy|compiled, got {_choice!r}"
    )

compiled_backend = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core as compiled_backend
    except ImportError:
        compiled_backend = None
        if _choice == "compiled":
            raise

if _choice == "numpy" or compiled_backend is None:
    active = numpy_backend
else:
    active = compiled_backend

BACKEND_NAME = active.NAME

conv2d_forward = active.conv2d_forward
conv2d_backward_input = active.conv2d_backward_input
conv2d_backward_kernel = active.conv2d_backward_kernel
bilinear_sample_forward = active.bilinear_sample_forward
bilinear_sample_backward = active.bilinear_sample_backward
