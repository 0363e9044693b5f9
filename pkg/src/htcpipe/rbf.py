"""Radial basis function interpolation on scattered 3D points.

Dense direct solve with partial pivoting plus iterative refinement; face
subsets stay at a few hundred centers, so no fast summation is needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from . import kernels

MIN_CENTER_SEPARATION = 1e-12  # m
CONDITION_WARN_THRESHOLD = 1e14
_REFINE_STEPS = 2


class RBFFitError(RuntimeError):
    """Singular or unusable interpolation system."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        if condition_estimate is not None:
            message = f"{message} (condition estimate {condition_estimate:.3g})"
        super().__init__(message)
        self.condition_estimate = condition_estimate


@dataclass(frozen=True)
class RBFModel:
    centers: np.ndarray       # (m, 3)
    coefficients: np.ndarray  # (m,)
    kernel: str               # "gaussian" | "multiquadric"
    shape_eps: float          # 1/m
    ridge: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")


@dataclass(frozen=True)
class Factorization:
    """LU-factorized interpolation system, reusable across value vectors."""

    centers: np.ndarray
    kernel: str
    shape_eps: float
    ridge: float
    lu: tuple
    matrix: np.ndarray
    condition_estimate: float


def _check_centers(centers: np.ndarray) -> np.ndarray:
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != 3:
        raise ValueError("centers must be an (m, 3) array")
    if centers.shape[0] < 1:
        raise ValueError("at least one center is required")
    if centers.shape[0] > 1:
        d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        if d2.min() <= MIN_CENTER_SEPARATION**2:
            raise RBFFitError("duplicate (or nearly coincident) centers")
    return centers


def default_shape(centers) -> float:
    """eps = 1 / (mean nearest-neighbor distance); 1.0 for a single center."""
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if centers.ndim != 2:
        raise ValueError("centers must be an (m, 3) array")
    if centers.shape[0] < 2:
        return 1.0
    d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    return float(1.0 / nn.mean())


def factorize(
    centers,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float | None = 0.0,
) -> Factorization:
    """Assemble and LU-factor (Phi + ridge*I); ridge=None picks the auto ridge."""
    centers = _check_centers(centers)
    if kernel not in kernels.KERNEL_IDS:
        raise ValueError(f"unknown kernel '{kernel}'")
    eps = default_shape(centers) if shape_eps is None else float(shape_eps)
    if eps <= 0:
        raise ValueError("shape_eps must be positive")

    phi = kernels.kernel_matrix(centers, centers, eps, kernels.KERNEL_IDS[kernel])
    if ridge is None:
        ridge = 1e-10 * float(np.trace(phi)) / phi.shape[0]
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    a = phi if ridge == 0.0 else phi + ridge * np.eye(phi.shape[0])

    anorm = np.linalg.norm(a, 1)
    try:
        lu = scipy.linalg.lu_factor(a, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise RBFFitError(f"singular interpolation system: {exc}") from exc

    gecon = lapack.get_lapack_funcs("gecon", (a,))
    rcond, info = gecon(lu[0], anorm)
    cond = float("inf") if rcond == 0.0 else 1.0 / float(rcond)
    if not np.isfinite(cond) or info != 0:
        raise RBFFitError("singular interpolation system", condition_estimate=cond)
    if cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"ill-conditioned RBF system (condition estimate {cond:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return Factorization(
        centers=centers, kernel=kernel, shape_eps=eps, ridge=float(ridge),
        lu=lu, matrix=a, condition_estimate=cond,
    )


def solve_coeffs(fact: Factorization, values) -> np.ndarray:
    """Solve for coefficients with a couple of refinement steps to shrink residuals."""
    w = np.ascontiguousarray(values, dtype=np.float64)
    if w.shape != (fact.centers.shape[0],):
        raise ValueError(
            f"expected {fact.centers.shape[0]} values, got {w.shape}"
        )
    c = scipy.linalg.lu_solve(fact.lu, w, check_finite=False)
    for _ in range(_REFINE_STEPS):
        r = w - fact.matrix @ c
        c = c + scipy.linalg.lu_solve(fact.lu, r, check_finite=False)
    if not np.all(np.isfinite(c)):
        raise RBFFitError(
            "interpolation coefficients overflowed",
            condition_estimate=fact.condition_estimate,
        )
    return c


def fit(
    centers,
    values,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float | None = 0.0,
) -> RBFModel:
    """Interpolate values at centers; with ridge=0 the model reproduces them exactly."""
    fact = factorize(centers, kernel=kernel, shape_eps=shape_eps, ridge=ridge)
    coeffs = solve_coeffs(fact, values)
    return RBFModel(
        centers=fact.centers,
        coefficients=coeffs,
        kernel=fact.kernel,
        shape_eps=fact.shape_eps,
        ridge=fact.ridge,
    )


def evaluate(model: RBFModel, points) -> np.ndarray:
    """s(x) = sum_j c_j phi(||x - x_j||) at each query point."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must be (n, 3) or a single 3D point")
    out = kernels.rbf_eval(
        model.centers,
        model.coefficients,
        points,
        model.shape_eps,
        kernels.KERNEL_IDS[model.kernel],
    )
    return out[0] if single else out
