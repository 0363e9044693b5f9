"""Deterministic synthetic HTC fields.

Fields are smooth across a face, rise near the boundary (edge enhancement),
grow with inlet speed via a forced-convection power law, and respond weakly
to ambient temperature. Identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .domain import Face, HTCField, LoadCase, plane_frame

HTC_FLOOR = 0.1  # W/(m^2 K), lower clamp on emitted values

_GOLDEN = 0.6180339887498949
_FREQ_U = 0.75  # cycles across the face, kept below 1 so fields stay smooth
_FREQ_V = 0.5


@dataclass(frozen=True)
class SurrogateParams:
    """Shape parameters of the synthetic HTC generator."""

    base: float = 8.0           # W/(m^2 K), free-convection floor
    vel_coeff: float = 4.0      # W/(m^2 K) per (m/s)^vel_exponent
    vel_exponent: float = 0.8
    temp_coeff: float = 0.5     # W/(m^2 K) per degC
    edge_amp: float = 0.5
    edge_scale: float = 0.05    # m
    face_phase: int = 0
    synthetic_cost_s: float = 0.0  # optional per-call stall for runtime accounting

    def __post_init__(self):
        if self.base <= 0:
            raise ValueError("base must be positive")
        if self.edge_scale <= 0:
            raise ValueError("edge_scale must be positive")
        if not 0.0 < self.vel_exponent <= 1.5:
            raise ValueError("vel_exponent must lie in (0, 1.5]")
        if self.edge_amp < 0:
            raise ValueError("edge_amp must be >= 0")
        if self.synthetic_cost_s < 0:
            raise ValueError("synthetic_cost_s must be >= 0")

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "vel_coeff": self.vel_coeff,
            "vel_exponent": self.vel_exponent,
            "temp_coeff": self.temp_coeff,
            "edge_amp": self.edge_amp,
            "edge_scale": self.edge_scale,
            "face_phase": self.face_phase,
            "synthetic_cost_s": self.synthetic_cost_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateParams":
        return cls(**d)


def d_edge(face: Face, point) -> float:
    """Euclidean distance from an on-plane point to the nearest boundary segment."""
    point = np.asarray(point, dtype=np.float64)
    origin, e1, e2, normal = face.frame()
    off = abs(float((point - origin) @ normal))
    if off > 1e-8:
        raise ValueError(f"point lies {off:.3g} m off the face plane")
    return _edge_distances(face, point[None, :])[0]


def _edge_distances(face: Face, points: np.ndarray) -> np.ndarray:
    a = face.boundary
    b = np.roll(a, -1, axis=0)
    ab = b - a                                    # (M, 3)
    denom = np.einsum("ij,ij->i", ab, ab)
    ap = points[:, None, :] - a[None, :, :]       # (N, M, 3)
    t = np.einsum("nmj,mj->nm", ap, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return d.min(axis=1)


def smooth_modulation(face: Face, params: SurrogateParams) -> np.ndarray:
    """Fixed low-frequency sinusoid product g(x) in [0.5, 1.5] at every face node."""
    origin, e1, e2, _ = face.frame()
    rel = face.positions - origin
    u = rel @ e1
    v = rel @ e2
    bnd = face.boundary - origin
    bu, bv = bnd @ e1, bnd @ e2
    span_u = max(bu.max() - bu.min(), 1e-30)
    span_v = max(bv.max() - bv.min(), 1e-30)
    un = (u - bu.min()) / span_u
    vn = (v - bv.min()) / span_v
    p1 = 2.0 * math.pi * ((_GOLDEN * params.face_phase) % 1.0)
    p2 = 2.0 * math.pi * ((_GOLDEN * _GOLDEN * params.face_phase + 0.37) % 1.0)
    return 1.0 + 0.5 * np.sin(2.0 * math.pi * _FREQ_U * un + p1) * np.sin(
        2.0 * math.pi * _FREQ_V * vn + p2
    )


def synth_htc(face: Face, case: LoadCase, params: SurrogateParams) -> HTCField:
    """Synthetic HTC field for one (face, load case) pair.

    value(x) = [base + temp_coeff*(t_air - 20) + vel_coeff*v^e * g(x)]
               * (1 + edge_amp * exp(-d_edge(x)/edge_scale)), clamped at 0.1.
    """
    if params.synthetic_cost_s > 0.0:
        time.sleep(params.synthetic_cost_s)
    g = smooth_modulation(face, params)
    d = _edge_distances(face, face.positions)
    smooth = (
        params.base
        + params.temp_coeff * (case.t_air - 20.0)
        + params.vel_coeff * case.v**params.vel_exponent * g
    )
    values = smooth * (1.0 + params.edge_amp * np.exp(-d / params.edge_scale))
    values = np.maximum(values, HTC_FLOOR)
    return HTCField(face_id=face.face_id, case_id=case.case_id, values=values)
