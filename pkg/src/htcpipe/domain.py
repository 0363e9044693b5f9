"""Core data model: machine faces, load cases, HTC fields, and their on-disk formats.

The CSV schema (``node_id,x,y,z,htc``, LF line endings, 17 significant digits)
and the JSON load-case manifest are the pipeline's on-disk contract; both
round-trip bit-exactly.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .iotools import atomic_write_text, read_json, write_json

PLANE_TOL = 1e-8        # m, coplanarity of face nodes and boundary
CONTAINMENT_TOL = 1e-9  # m, node-inside-boundary slack

CSV_HEADER = "node_id,x,y,z,htc"
_FIELD_NAME_RE = re.compile(r"face_(-?\d+)_case_(-?\d+)\.csv$")


class FormatError(ValueError):
    """Malformed or inconsistent on-disk document."""


def _as_points(points, name: str) -> np.ndarray:
    arr = np.array(points, dtype=np.float64, order="C", copy=True)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must be an (n, 3) array of 3D points")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def _newell_normal(boundary: np.ndarray) -> np.ndarray:
    nxt = np.roll(boundary, -1, axis=0)
    n = np.array(
        [
            np.sum((boundary[:, 1] - nxt[:, 1]) * (boundary[:, 2] + nxt[:, 2])),
            np.sum((boundary[:, 2] - nxt[:, 2]) * (boundary[:, 0] + nxt[:, 0])),
            np.sum((boundary[:, 0] - nxt[:, 0]) * (boundary[:, 1] + nxt[:, 1])),
        ]
    )
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise ValueError("boundary polygon is degenerate (zero area)")
    return n / norm


def plane_frame(boundary: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic in-plane frame (origin, e1, e2, normal) of a boundary polygon."""
    origin = boundary[0]
    e1 = boundary[1] - origin
    n1 = np.linalg.norm(e1)
    if n1 == 0.0:
        raise ValueError("boundary polygon repeats its first vertex")
    e1 = e1 / n1
    normal = _newell_normal(boundary)
    e2 = np.cross(normal, e1)
    e2 = e2 / np.linalg.norm(e2)
    return origin, e1, e2, normal


def _to_local_2d(points: np.ndarray, origin, e1, e2) -> np.ndarray:
    rel = points - origin
    return np.column_stack((rel @ e1, rel @ e2))


def _segments_intersect(p, q, r, s) -> bool:
    # Proper crossing test for open segments in 2D.
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p, q, r), orient(p, q, s)
    d3, d4 = orient(r, s, p), orient(r, s, q)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _dist_to_segments_2d(point: np.ndarray, poly2d: np.ndarray) -> float:
    a = poly2d
    b = np.roll(poly2d, -1, axis=0)
    ab = b - a
    ap = point - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0.0, np.einsum("ij,ij->i", ap, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(point - closest, axis=1)))


def _point_in_polygon_2d(point: np.ndarray, poly2d: np.ndarray) -> bool:
    x, y = point
    inside = False
    n = len(poly2d)
    for i in range(n):
        x1, y1 = poly2d[i]
        x2, y2 = poly2d[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if x < xc:
                inside = not inside
    return inside


@dataclass(frozen=True)
class Face:
    """A planar machine face: node ids, node positions, and a boundary polygon."""

    face_id: int
    node_ids: tuple[int, ...]
    positions: np.ndarray  # (N, 3), meters
    boundary: np.ndarray   # (M, 3), closed simple polygon, first vertex not repeated

    def __post_init__(self):
        positions = _as_points(self.positions, "positions")
        boundary = _as_points(self.boundary, "boundary")
        node_ids = tuple(int(i) for i in self.node_ids)
        if len(node_ids) < 1:
            raise ValueError("a face needs at least one node")
        if len(set(node_ids)) != len(node_ids):
            raise ValueError(f"face {self.face_id}: duplicate node ids")
        if len(node_ids) != positions.shape[0]:
            raise ValueError("node_ids and positions disagree in length")
        if boundary.shape[0] < 3:
            raise ValueError("boundary polygon needs at least 3 vertices")

        origin, e1, e2, normal = plane_frame(boundary)
        for pts, what in ((boundary, "boundary"), (positions, "node")):
            off = np.abs((pts - origin) @ normal)
            if np.max(off) > PLANE_TOL:
                raise ValueError(f"face {self.face_id}: {what} points off-plane by {np.max(off):.3g} m")

        poly2d = _to_local_2d(boundary, origin, e1, e2)
        m = len(poly2d)
        for i in range(m):
            for j in range(i + 1, m):
                if j == i or (j + 1) % m == i or (i + 1) % m == j:
                    continue
                if _segments_intersect(poly2d[i], poly2d[(i + 1) % m], poly2d[j], poly2d[(j + 1) % m]):
                    raise ValueError(f"face {self.face_id}: boundary polygon self-intersects")

        nodes2d = _to_local_2d(positions, origin, e1, e2)
        for idx, p in enumerate(nodes2d):
            if not _point_in_polygon_2d(p, poly2d) and _dist_to_segments_2d(p, poly2d) > CONTAINMENT_TOL:
                raise ValueError(
                    f"face {self.face_id}: node {node_ids[idx]} lies outside the boundary polygon"
                )

        positions.flags.writeable = False
        boundary.flags.writeable = False
        object.__setattr__(self, "node_ids", node_ids)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "boundary", boundary)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return plane_frame(self.boundary)


@dataclass(frozen=True)
class LoadCase:
    """One design point: ambient temperature, inlet speed, and flow direction."""

    case_id: int
    t_air: float  # degC
    v: float      # m/s
    az: float     # deg
    el: float     # deg

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"case {self.case_id}: inlet speed must be >= 0")
        if not 0.0 <= self.az < 360.0:
            raise ValueError(f"case {self.case_id}: azimuth must lie in [0, 360)")
        if not -90.0 <= self.el <= 90.0:
            raise ValueError(f"case {self.case_id}: elevation must lie in [-90, 90]")

    def coords(self) -> tuple[float, float, float, float]:
        return (self.t_air, self.v, self.az, self.el)


@dataclass(frozen=True)
class HTCField:
    """HTC values at one face under one load case, ordered like ``Face.node_ids``."""

    face_id: int
    case_id: int
    values: np.ndarray  # W/(m^2 K)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("values must be a non-empty 1D vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("HTC field contains non-finite values")
        if np.any(values <= 0.0):
            raise ValueError("HTC values must be strictly positive")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class CaseGrid:
    """Axis value lists whose Cartesian product defines the load cases."""

    t_values: tuple[float, ...]
    v_values: tuple[float, ...]
    az_values: tuple[float, ...] = (0.0,)
    el_values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        for name in ("t_values", "v_values", "az_values", "el_values"):
            vals = tuple(float(x) for x in getattr(self, name))
            if len(vals) == 0:
                raise ValueError(f"{name} must be non-empty")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)

    @property
    def n_cases(self) -> int:
        return len(self.t_values) * len(self.v_values) * len(self.az_values) * len(self.el_values)


def enumerate_cases(grid: CaseGrid) -> list[LoadCase]:
    """Cartesian product (t outer, then v, az, el); case_id is the 0-based position."""
    return [
        LoadCase(case_id=i, t_air=t, v=v, az=az, el=el)
        for i, (t, v, az, el) in enumerate(
            itertools.product(grid.t_values, grid.v_values, grid.az_values, grid.el_values)
        )
    ]


_RECT_AXES = {
    # normal axis -> (in-plane u axis, in-plane v axis), right-handed
    "x": (1, 2),
    "y": (2, 0),
    "z": (0, 1),
}


def gen_rect_face(
    face_id: int,
    rows: int,
    cols: int,
    width: float,
    height: float,
    origin=(0.0, 0.0, 0.0),
    normal_axis: str = "z",
) -> Face:
    """Structured rows x cols lattice on a planar rectangle; ids row-major from 0.

    Degenerate rows (or cols) of 1 sit on the rectangle midline.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    if normal_axis not in _RECT_AXES:
        raise ValueError(f"normal_axis must be one of {sorted(_RECT_AXES)}")

    ui, vi = _RECT_AXES[normal_axis]
    origin = np.asarray(origin, dtype=np.float64)
    us = np.array([width / 2.0]) if cols == 1 else np.linspace(0.0, width, cols)
    vs = np.array([height / 2.0]) if rows == 1 else np.linspace(0.0, height, rows)

    positions = np.tile(origin, (rows * cols, 1))
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            positions[k, ui] += us[c]
            positions[k, vi] += vs[r]

    boundary = np.tile(origin, (4, 1))
    boundary[1, ui] += width
    boundary[2, ui] += width
    boundary[2, vi] += height
    boundary[3, vi] += height

    return Face(
        face_id=face_id,
        node_ids=tuple(range(rows * cols)),
        positions=positions,
        boundary=boundary,
    )


def field_filename(face_id: int, case_id: int) -> str:
    return f"face_{face_id}_case_{case_id}.csv"


def write_htc_csv(field: HTCField, face: Face, path) -> None:
    """One row per node, face order, 17 significant digits, LF endings."""
    if field.face_id != face.face_id:
        raise ValueError(f"field belongs to face {field.face_id}, not {face.face_id}")
    if field.values.shape[0] != face.n_nodes:
        raise ValueError(
            f"field has {field.values.shape[0]} values for a {face.n_nodes}-node face"
        )
    lines = [CSV_HEADER]
    for nid, pos, htc in zip(face.node_ids, face.positions, field.values):
        lines.append(f"{nid},{pos[0]:.17g},{pos[1]:.17g},{pos[2]:.17g},{htc:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_htc_csv(path, face: Face, case_id: int | None = None) -> HTCField:
    """Inverse of :func:`write_htc_csv`; case_id is parsed from the standard filename."""
    path = Path(path)
    if case_id is None:
        m = _FIELD_NAME_RE.search(path.name)
        if m is None:
            raise FormatError(f"{path.name}: cannot infer case_id; pass it explicitly")
        file_face = int(m.group(1))
        if file_face != face.face_id:
            raise FormatError(f"{path.name}: file names face {file_face}, got face {face.face_id}")
        case_id = int(m.group(2))

    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise FormatError(f"{path.name}: malformed header (expected '{CSV_HEADER}')")
    rows = lines[1:]
    if len(rows) != face.n_nodes:
        raise FormatError(
            f"{path.name}: {len(rows)} rows for a {face.n_nodes}-node face"
        )

    index_of = {nid: i for i, nid in enumerate(face.node_ids)}
    values = np.empty(face.n_nodes, dtype=np.float64)
    seen = set()
    for lineno, row in enumerate(rows, start=2):
        parts = row.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path.name}:{lineno}: expected 5 comma-separated fields")
        try:
            nid = int(parts[0])
            htc = float(parts[4])
        except ValueError as exc:
            raise FormatError(f"{path.name}:{lineno}: {exc}") from exc
        if nid not in index_of:
            raise FormatError(f"{path.name}:{lineno}: unknown node_id {nid}")
        if nid in seen:
            raise FormatError(f"{path.name}:{lineno}: duplicate node_id {nid}")
        if not math.isfinite(htc):
            raise FormatError(f"{path.name}:{lineno}: non-finite HTC value")
        seen.add(nid)
        values[index_of[nid]] = htc

    return HTCField(face_id=face.face_id, case_id=case_id, values=values)


def write_manifest(cases: list[LoadCase], path) -> None:
    write_json(
        path,
        {
            "cases": [
                {"case_id": c.case_id, "t_air": c.t_air, "v": c.v, "az": c.az, "el": c.el}
                for c in cases
            ]
        },
    )


def read_manifest(path) -> list[LoadCase]:
    doc = read_json(path)
    try:
        return [
            LoadCase(
                case_id=int(c["case_id"]),
                t_air=float(c["t_air"]),
                v=float(c["v"]),
                az=float(c["az"]),
                el=float(c["el"]),
            )
            for c in doc["cases"]
        ]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed load-case manifest: {exc}") from exc
