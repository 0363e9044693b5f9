"""Pipeline configuration document (JSON) and its validation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cluster import GAParams
from .domain import CaseGrid, Face, gen_rect_face
from .iotools import read_json
from .surrogate import SurrogateParams


class ConfigError(ValueError):
    """Invalid or incomplete pipeline configuration."""


@dataclass(frozen=True)
class FaceSpec:
    face_id: int
    rows: int
    cols: int
    width: float
    height: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normal_axis: str = "z"
    face_phase: int | None = None  # default: surrogate.face_phase + face_id

    def build(self) -> Face:
        return gen_rect_face(
            self.face_id, self.rows, self.cols, self.width, self.height,
            origin=self.origin, normal_axis=self.normal_axis,
        )


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    rng_seed: int
    faces: tuple[FaceSpec, ...]
    case_grid: CaseGrid
    surrogate: SurrogateParams
    ga: GAParams
    m: int | dict[int, int]
    cd_axes: tuple[tuple[float, ...], ...] | None = None
    cd_lambda: float = 1e-3
    rbf_kernel: str = "gaussian"
    rbf_shape_eps: float | None = None
    rbf_ridge: float = 0.0
    workers: int | None = None
    probe_fraction: float = 0.25
    simulate_setup_cost_s: float = 0.0

    def __post_init__(self):
        if not self.faces:
            raise ConfigError("at least one face is required")
        ids = [f.face_id for f in self.faces]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate face ids in config")
        if isinstance(self.m, dict):
            missing = [i for i in ids if i not in self.m]
            if missing:
                raise ConfigError(f"m not specified for faces {missing}")
        if self.probe_fraction <= 0 or self.probe_fraction > 1:
            raise ConfigError("probe_fraction must lie in (0, 1]")
        if self.cd_lambda < 0:
            raise ConfigError("cd_lambda must be >= 0")

    def build_faces(self) -> list[Face]:
        return [spec.build() for spec in self.faces]

    def m_for(self, face_id: int) -> int:
        return self.m[face_id] if isinstance(self.m, dict) else int(self.m)

    def surrogate_for(self, face_id: int) -> SurrogateParams:
        spec = next(s for s in self.faces if s.face_id == face_id)
        phase = spec.face_phase
        if phase is None:
            phase = self.surrogate.face_phase + face_id
        return replace(self.surrogate, face_phase=phase)

    def resolved_cd_axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self.cd_axes is not None:
            return tuple(np.asarray(a, dtype=np.float64) for a in self.cd_axes)
        g = self.case_grid
        return tuple(
            np.asarray(vals, dtype=np.float64)
            for vals in (g.t_values, g.v_values, g.az_values, g.el_values)
        )

    def rbf_opts(self) -> dict:
        return {"kernel": self.rbf_kernel, "shape_eps": self.rbf_shape_eps,
                "ridge": self.rbf_ridge}


def load_config(
    path,
    out_override=None,
    seed_override: int | None = None,
    workers_override: int | None = None,
) -> PipelineConfig:
    try:
        doc = read_json(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc

    try:
        faces = tuple(
            FaceSpec(
                face_id=int(f["face_id"]),
                rows=int(f["rows"]),
                cols=int(f["cols"]),
                width=float(f["width"]),
                height=float(f["height"]),
                origin=tuple(f.get("origin", (0.0, 0.0, 0.0))),
                normal_axis=f.get("normal_axis", "z"),
                face_phase=f.get("face_phase"),
            )
            for f in doc["faces"]
        )
        grid_doc = doc["case_grid"]
        case_grid = CaseGrid(
            t_values=tuple(grid_doc["t_values"]),
            v_values=tuple(grid_doc["v_values"]),
            az_values=tuple(grid_doc.get("az_values", (0.0,))),
            el_values=tuple(grid_doc.get("el_values", (0.0,))),
        )
        seed = int(doc.get("rng_seed", 0)) if seed_override is None else int(seed_override)
        surrogate = SurrogateParams.from_dict(doc.get("surrogate", {}))
        ga_doc = dict(doc.get("ga", {}))
        ga_doc["rng_seed"] = seed
        ga = GAParams.from_dict(ga_doc)
        m_doc = doc["m"]
        m = {int(k): int(v) for k, v in m_doc.items()} if isinstance(m_doc, dict) else int(m_doc)
        cd_axes = doc.get("cd_axes")
        if cd_axes is not None:
            cd_axes = tuple(tuple(float(x) for x in cd_axes[k]) for k in ("t", "v", "az", "el"))
        rbf_doc = doc.get("rbf", {})
        config = PipelineConfig(
            out_dir=Path(out_override if out_override is not None else doc["out_dir"]),
            rng_seed=seed,
            faces=faces,
            case_grid=case_grid,
            surrogate=surrogate,
            ga=ga,
            m=m,
            cd_axes=cd_axes,
            cd_lambda=float(doc.get("cd_lambda", 1e-3)),
            rbf_kernel=rbf_doc.get("kernel", "gaussian"),
            rbf_shape_eps=rbf_doc.get("shape_eps"),
            rbf_ridge=float(rbf_doc.get("ridge", 0.0)),
            workers=workers_override
            if workers_override is not None
            else doc.get("workers"),
            probe_fraction=float(doc.get("probe_fraction", 0.25)),
            simulate_setup_cost_s=float(doc.get("simulate_setup_cost_s", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    return config
