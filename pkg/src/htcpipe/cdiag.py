"""Characteristic diagrams: smoothed grid regression over the 4D load-case
space (t_air, v, az, el), one diagram per optimal node, multilinear query.

Support values solve a penalized least-squares problem; the penalty is the
squared change of slope across interior knots per axis (scaled by the mean
knot spacing so it carries value units), which vanishes on affine data.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import Face, HTCField, LoadCase
from .iotools import read_json, write_json
from .rbf import evaluate as rbf_evaluate
from .rbf import fit as rbf_fit

AXIS_NAMES = ("t", "v", "az", "el")
DEFAULT_LAMBDA = 1e-3
RECON_FLOOR = 1e-6  # W/(m^2 K); reconstructed fields stay positive


class UnconstrainedGridError(ValueError):
    """lambda = 0 with grid knots no sample touches."""

    def __init__(self, message: str, unconstrained: list[tuple[int, ...]]):
        super().__init__(message)
        self.unconstrained = unconstrained


@dataclass(frozen=True)
class CDGrid:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]  # knots per (t, v, az, el)
    support_values: np.ndarray  # shape = knot counts
    smoothing_lambda: float
    owner: tuple[int, int]      # (face_id, node_index)

    def __post_init__(self):
        axes = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in self.axes)
        if len(axes) != 4:
            raise ValueError("exactly 4 axes (t, v, az, el) are required")
        for name, a in zip(AXIS_NAMES, axes):
            if a.ndim != 1 or a.size < 1:
                raise ValueError(f"axis {name} needs at least one knot")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"axis {name} knots must be strictly increasing")
        values = np.ascontiguousarray(self.support_values, dtype=np.float64)
        shape = tuple(a.size for a in axes)
        if values.shape != shape:
            raise ValueError(f"support_values shape {values.shape} != knot counts {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("support values must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "support_values", values)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.support_values.shape


def _axis_weights(knots: np.ndarray, x: float) -> tuple[list[tuple[int, float]], bool]:
    """Multilinear (index, weight) pairs along one axis, clamped to the knot span."""
    k = knots.size
    if k == 1:
        return [(0, 1.0)], False
    clamped = x < knots[0] or x > knots[-1]
    xc = min(max(x, float(knots[0])), float(knots[-1]))
    i = int(np.searchsorted(knots, xc, side="right")) - 1
    i = min(max(i, 0), k - 2)
    u = (xc - knots[i]) / (knots[i + 1] - knots[i])
    return [(i, 1.0 - u), (i + 1, u)], clamped


def _case_weights(axes, coords) -> tuple[list[tuple[tuple[int, ...], float]], bool]:
    per_axis = []
    extrapolated = False
    for knots, x in zip(axes, coords):
        w, clamped = _axis_weights(knots, float(x))
        per_axis.append(w)
        extrapolated = extrapolated or clamped
    combos: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
    for w in per_axis:
        combos = [
            (idx + (i,), wt * wi)
            for idx, wt in combos
            for i, wi in w
            if wt * wi != 0.0
        ]
    return combos, extrapolated


def query_flagged(grid: CDGrid, case: LoadCase) -> tuple[float, bool]:
    """Multilinear interpolation; returns (value, clamped-outside-the-box flag)."""
    combos, extrapolated = _case_weights(grid.axes, case.coords())
    val = 0.0
    for idx, wt in combos:
        val += wt * float(grid.support_values[idx])
    return val, extrapolated


def query(grid: CDGrid, case: LoadCase) -> float:
    return query_flagged(grid, case)[0]


def _penalty_rows(axes, shape) -> np.ndarray:
    """Change-of-slope rows per axis and grid line; empty if no axis has >= 3 knots."""
    n_unknowns = int(np.prod(shape))
    rows = []
    for ax, knots in enumerate(axes):
        k = knots.size
        if k < 3:
            continue
        h = np.diff(knots)
        h_mean = float(h.mean())
        other_ranges = [range(s) for d, s in enumerate(shape) if d != ax]
        for other in itertools.product(*other_ranges):
            base = list(other)
            for j in range(1, k - 1):
                row = np.zeros(n_unknowns)
                for off, coef in (
                    (j - 1, h_mean / h[j - 1]),
                    (j, -h_mean / h[j] - h_mean / h[j - 1]),
                    (j + 1, h_mean / h[j]),
                ):
                    idx = tuple(base[:ax] + [off] + base[ax:])
                    row[int(np.ravel_multi_index(idx, shape))] = coef
                rows.append(row)
    if not rows:
        return np.zeros((0, n_unknowns))
    return np.array(rows)


def train_cd(
    samples,
    axes,
    smoothing_lambda: float | None = None,
    owner: tuple[int, int] = (0, 0),
) -> CDGrid:
    """Fit support values to (LoadCase, alpha) samples by penalized least squares.

    Samples outside the knot bounding box are clamped with a warning. With
    smoothing_lambda = 0 every knot must be constrained by some sample.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("at least one sample is required")
    axes = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in axes)
    if len(axes) != 4:
        raise ValueError("exactly 4 axes (t, v, az, el) are required")
    lam = DEFAULT_LAMBDA if smoothing_lambda is None else float(smoothing_lambda)
    if lam < 0:
        raise ValueError("smoothing_lambda must be >= 0")

    shape = tuple(a.size for a in axes)
    n_unknowns = int(np.prod(shape))
    a_mat = np.zeros((len(samples), n_unknowns))
    alpha = np.zeros(len(samples))
    clamped_any = False
    for r, (case, value) in enumerate(samples):
        combos, clamped = _case_weights(axes, case.coords())
        clamped_any = clamped_any or clamped
        for idx, wt in combos:
            flat = int(np.ravel_multi_index(idx, shape))
            a_mat[r, flat] += wt
        alpha[r] = float(value)
    if clamped_any:
        warnings.warn(
            "training samples outside the knot bounding box were clamped",
            RuntimeWarning,
            stacklevel=2,
        )

    if lam == 0.0:
        untouched = np.where(~np.any(a_mat != 0.0, axis=0))[0]
        if untouched.size:
            cells = [tuple(int(c) for c in np.unravel_index(i, shape)) for i in untouched]
            raise UnconstrainedGridError(
                f"lambda=0 with {untouched.size} unconstrained grid knots: {cells[:10]}",
                cells,
            )
        system = a_mat
        rhs = alpha
    else:
        d_mat = _penalty_rows(axes, shape)
        system = np.vstack([a_mat, np.sqrt(lam) * d_mat])
        rhs = np.concatenate([alpha, np.zeros(d_mat.shape[0])])

    theta, residuals, rank, _ = np.linalg.lstsq(system, rhs, rcond=None)
    if lam == 0.0 and rank < n_unknowns:
        raise UnconstrainedGridError(
            f"lambda=0 system is rank deficient (rank {rank} of {n_unknowns})", []
        )

    return CDGrid(
        axes=axes,
        support_values=theta.reshape(shape),
        smoothing_lambda=lam,
        owner=owner,
    )


def train_all(optimal_subsets, fields_by_face, axes, smoothing_lambda=None) -> list[CDGrid]:
    """One CDGrid per optimal node of every subset.

    ``fields_by_face`` maps face_id to the list of (LoadCase, HTCField) pairs
    covering all load cases for that face.
    """
    grids = []
    for subset in optimal_subsets:
        try:
            pairs = fields_by_face[subset.face_id]
        except KeyError as exc:
            raise ValueError(f"no fields supplied for face {subset.face_id}") from exc
        if not pairs:
            raise ValueError(f"empty field list for face {subset.face_id}")
        for node_index in subset.members:
            samples = [(case, field.values[node_index]) for case, field in pairs]
            grids.append(
                train_cd(samples, axes, smoothing_lambda, owner=(subset.face_id, node_index))
            )
    return grids


def reconstruct_face(
    face: Face,
    subset,
    cds,
    case: LoadCase,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float = 0.0,
) -> HTCField:
    """Query each optimal node's diagram at the case, RBF-fit on those nodes,
    evaluate at all face nodes: the convection boundary field for the case."""
    by_owner = {g.owner: g for g in cds}
    predicted = []
    for node_index in subset.members:
        key = (face.face_id, node_index)
        if key not in by_owner:
            raise ValueError(f"no characteristic diagram for face {key[0]} node {key[1]}")
        predicted.append(query(by_owner[key], case))

    centers = face.positions[list(subset.members)]
    model = rbf_fit(centers, predicted, kernel=kernel, shape_eps=shape_eps, ridge=ridge)
    values = rbf_evaluate(model, face.positions)
    values = np.maximum(values, RECON_FLOOR)
    return HTCField(face_id=face.face_id, case_id=case.case_id, values=values)


def write_cds(grids, path) -> None:
    doc = {
        "version": 1,
        "grids": [
            {
                "owner": [g.owner[0], g.owner[1]],
                "axes": {name: list(a) for name, a in zip(AXIS_NAMES, g.axes)},
                "lambda": g.smoothing_lambda,
                "values": [float(v) for v in g.support_values.ravel()],
            }
            for g in grids
        ],
    }
    write_json(path, doc)


def read_cds(path) -> list[CDGrid]:
    doc = read_json(path)
    if doc.get("version") != 1:
        raise ValueError(f"{path}: unsupported characteristic-diagram document version")
    grids = []
    for g in doc["grids"]:
        axes = tuple(np.asarray(g["axes"][name], dtype=np.float64) for name in AXIS_NAMES)
        shape = tuple(a.size for a in axes)
        grids.append(
            CDGrid(
                axes=axes,
                support_values=np.asarray(g["values"], dtype=np.float64).reshape(shape),
                smoothing_lambda=float(g["lambda"]),
                owner=(int(g["owner"][0]), int(g["owner"][1])),
            )
        )
    return grids
