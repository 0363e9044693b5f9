"""Backend selection for the RBF kernel hot path.

Prefers the compiled extension, falls back to the numpy implementation.
Set ``HTCPIPE_PURE_PYTHON=1`` to force the fallback (used by the kernel
benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

from . import _kernels_np

if os.environ.get("HTCPIPE_PURE_PYTHON"):
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_np
        BACKEND = "numpy"

KERNEL_GAUSSIAN = _kernels_np.KERNEL_GAUSSIAN
KERNEL_MULTIQUADRIC = _kernels_np.KERNEL_MULTIQUADRIC
KERNEL_IDS = {"gaussian": KERNEL_GAUSSIAN, "multiquadric": KERNEL_MULTIQUADRIC}

kernel_matrix = _impl.kernel_matrix
rbf_eval = _impl.rbf_eval
