"""Static load balancing for per-face clustering jobs.

Runtimes are probed on a few small/medium faces, extrapolated with a
quadratic fit in the node count, and packed greedily (largest first into the
least-loaded bin) while the bin count is grown until the makespan stops
improving.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .cluster import GAParams, two_stage_cluster
from .iotools import read_json, write_json
from .seeding import mix_seed

MIN_ESTIMATE_S = 1e-6
_STOP_TOL_S = 1e-9


@dataclass(frozen=True)
class RuntimeModel:
    """Quadratic runtime estimate t(n) = c0 + c1*n + c2*n^2."""

    c0: float
    c1: float
    c2: float
    sample_points: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class Task:
    task_id: int
    n_nodes: int
    estimated_seconds: float
    measured_seconds: float | None = None

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if self.estimated_seconds <= 0:
            raise ValueError("estimated_seconds must be positive")


@dataclass(frozen=True)
class Schedule:
    bins: tuple[tuple[Task, ...], ...]

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def bin_loads(self) -> tuple[float, ...]:
        return tuple(sum(t.estimated_seconds for t in b) for b in self.bins)

    @property
    def makespan(self) -> float:
        return max(self.bin_loads)

    def tasks(self) -> list[Task]:
        return [t for b in self.bins for t in b]


def fit_runtime_model(samples) -> RuntimeModel:
    """Least-squares quadratic through (n_nodes, measured seconds) samples."""
    pts = [(int(n), float(s)) for n, s in samples]
    if len(pts) < 3:
        raise ValueError("at least 3 samples are required for a quadratic fit")
    if len({n for n, _ in pts}) < 3:
        raise ValueError("need >= 3 distinct node counts (system is rank deficient)")
    n = np.array([p[0] for p in pts], dtype=np.float64)
    t = np.array([p[1] for p in pts], dtype=np.float64)
    design = np.column_stack([np.ones_like(n), n, n * n])
    coeffs, *_ = np.linalg.lstsq(design, t, rcond=None)
    return RuntimeModel(c0=float(coeffs[0]), c1=float(coeffs[1]), c2=float(coeffs[2]),
                        sample_points=tuple(pts))


def estimate(model: RuntimeModel, n_nodes: int) -> float:
    """Model prediction, clamped to a positive floor."""
    n = float(n_nodes)
    return max(model.c0 + model.c1 * n + model.c2 * n * n, MIN_ESTIMATE_S)


def model_residuals(model: RuntimeModel) -> list[float]:
    return [s - (model.c0 + model.c1 * n + model.c2 * n * n) for n, s in model.sample_points]


def pack(tasks, n_bins: int) -> Schedule:
    """Largest-estimate-first into the currently least-loaded bin (LPT).

    Ties: smaller task_id packs first; equal loads go to the lowest bin index.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("tasks must be non-empty")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    order = sorted(tasks, key=lambda t: (-t.estimated_seconds, t.task_id))
    bins: list[list[Task]] = [[] for _ in range(n_bins)]
    loads = [0.0] * n_bins
    for task in order:
        b = min(range(n_bins), key=lambda i: loads[i])
        bins[b].append(task)
        loads[b] += task.estimated_seconds
    return Schedule(bins=tuple(tuple(b) for b in bins))


def balance(tasks) -> Schedule:
    """Grow the bin count until the packed makespan stops strictly improving
    (or hits the max-task lower bound): short runtime with the fewest bins."""
    tasks = list(tasks)
    if not tasks:
        raise ValueError("tasks must be non-empty")
    lower_bound = max(t.estimated_seconds for t in tasks)
    k = 1
    schedule = pack(tasks, k)
    while k < len(tasks):
        if schedule.makespan <= lower_bound + _STOP_TOL_S:
            break
        nxt = pack(tasks, k + 1)
        if nxt.makespan >= schedule.makespan - _STOP_TOL_S:
            break
        schedule, k = nxt, k + 1
    return schedule


def sequential_seconds(schedule: Schedule) -> float:
    return sum(t.estimated_seconds for t in schedule.tasks())


def select_probes(node_counts: list[int], probe_fraction: float) -> list[int]:
    """Indices of probe faces: the smallest node counts plus evenly spaced
    medium ones, never the largest face."""
    n = len(node_counts)
    order = sorted(range(n), key=lambda i: (node_counts[i], i))
    count = max(3, math.ceil(probe_fraction * n))
    count = min(count, n - 1)  # keep the largest face out of the probe set
    n_small = (count + 1) // 2
    probes = order[:n_small]
    medium = order[n_small:-1]
    n_medium = count - n_small
    if n_medium > 0 and medium:
        picks = np.unique(np.linspace(0, len(medium) - 1, n_medium).round().astype(int))
        probes += [medium[i] for i in picks]
    return sorted(set(probes))


def measure_and_balance(
    faces,
    fields_by_face,
    m,
    ga_params: GAParams,
    probe_fraction: float = 0.25,
    cluster_runner=None,
) -> tuple[RuntimeModel | None, Schedule]:
    """Probe clustering runtimes on small/medium faces, fit the quadratic
    model, estimate every face, and balance.

    ``cluster_runner(face) -> seconds`` overrides the timed two-stage
    clustering run (tests inject synthetic costs through it). ``m`` may be an
    int or a face_id -> int mapping. Fewer than 3 faces fall back to a single
    bin with measured runtimes and no model.
    """
    faces = list(faces)
    if not faces:
        raise ValueError("faces must be non-empty")

    def m_of(face):
        return m[face.face_id] if isinstance(m, dict) else int(m)

    if cluster_runner is None:
        def cluster_runner(face):
            params = replace(ga_params, rng_seed=mix_seed(ga_params.rng_seed, 3, face.face_id))
            t0 = time.perf_counter()
            try:
                two_stage_cluster(face, fields_by_face[face.face_id], m_of(face), params)
            except Exception:
                # A probing failure must not abort balancing; the schedule run
                # records the real failure per face.
                pass
            return time.perf_counter() - t0

    if len(faces) < 3:
        tasks = []
        for face in faces:
            sec = max(cluster_runner(face), MIN_ESTIMATE_S)
            tasks.append(Task(face.face_id, face.n_nodes, estimated_seconds=sec,
                              measured_seconds=sec))
        return None, pack(tasks, 1)

    probe_idx = select_probes([f.n_nodes for f in faces], probe_fraction)
    measured: dict[int, float] = {}
    for i in probe_idx:
        measured[i] = max(cluster_runner(faces[i]), MIN_ESTIMATE_S)

    samples = [(faces[i].n_nodes, measured[i]) for i in probe_idx]
    try:
        model = fit_runtime_model(samples)
    except ValueError:
        # All probed faces share a node count: degrade to the mean runtime.
        mean = sum(s for _, s in samples) / len(samples)
        model = RuntimeModel(c0=mean, c1=0.0, c2=0.0, sample_points=tuple(samples))

    tasks = []
    for i, face in enumerate(faces):
        if i in measured:
            tasks.append(Task(face.face_id, face.n_nodes,
                              estimated_seconds=measured[i], measured_seconds=measured[i]))
        else:
            tasks.append(Task(face.face_id, face.n_nodes,
                              estimated_seconds=estimate(model, face.n_nodes)))
    return model, balance(tasks)


def write_schedule(schedule: Schedule, path, model: RuntimeModel | None = None) -> None:
    doc = {
        "n_bins": schedule.n_bins,
        "makespan": schedule.makespan,
        "bins": [[t.task_id for t in b] for b in schedule.bins],
        "estimated_loads": list(schedule.bin_loads),
        "tasks": [
            {
                "task_id": t.task_id,
                "n_nodes": t.n_nodes,
                "estimated_seconds": t.estimated_seconds,
                "measured_seconds": t.measured_seconds,
            }
            for b in schedule.bins
            for t in b
        ],
        "runtime_model": None
        if model is None
        else {"c0": model.c0, "c1": model.c1, "c2": model.c2,
              "sample_points": [[n, s] for n, s in model.sample_points]},
    }
    write_json(path, doc)


def read_schedule(path) -> tuple[Schedule, RuntimeModel | None]:
    doc = read_json(path)
    by_id = {t["task_id"]: Task(
        task_id=int(t["task_id"]),
        n_nodes=int(t["n_nodes"]),
        estimated_seconds=float(t["estimated_seconds"]),
        measured_seconds=None if t["measured_seconds"] is None else float(t["measured_seconds"]),
    ) for t in doc["tasks"]}
    bins = tuple(tuple(by_id[i] for i in b) for b in doc["bins"])
    model = None
    if doc.get("runtime_model") is not None:
        rm = doc["runtime_model"]
        model = RuntimeModel(
            c0=float(rm["c0"]), c1=float(rm["c1"]), c2=float(rm["c2"]),
            sample_points=tuple((int(n), float(s)) for n, s in rm["sample_points"]),
        )
    return Schedule(bins=bins), model
