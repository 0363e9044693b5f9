"""Numpy fallback for the RBF kernel hot path.

Mirrors the compiled extension in ``_kernels.pyx``; selected at import time
by ``htcpipe.kernels`` when the extension is unavailable.
"""

from __future__ import annotations

import numpy as np

KERNEL_GAUSSIAN = 0
KERNEL_MULTIQUADRIC = 1


def _apply_kernel(r2: np.ndarray, eps: float, kind: int) -> np.ndarray:
    e2 = eps * eps
    if kind == KERNEL_GAUSSIAN:
        return np.exp(-e2 * r2)
    if kind == KERNEL_MULTIQUADRIC:
        return np.sqrt(1.0 + e2 * r2)
    raise ValueError(f"unknown kernel id {kind}")


def kernel_matrix(a: np.ndarray, b: np.ndarray, eps: float, kind: int) -> np.ndarray:
    """phi(||a_i - b_j||) for all pairs; a (na,3), b (nb,3) -> (na,nb)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    return _apply_kernel(r2, float(eps), int(kind))


def rbf_eval(
    centers: np.ndarray, coeffs: np.ndarray, points: np.ndarray, eps: float, kind: int
) -> np.ndarray:
    """sum_j c_j * phi(||p_i - x_j||) at every point; (npoints,)."""
    k = kernel_matrix(points, centers, eps, kind)
    return k @ np.ascontiguousarray(coeffs, dtype=np.float64)
