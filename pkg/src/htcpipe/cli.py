"""Command-line pipeline: gen-cases, simulate, cluster, train-cd, query, report.

Exit codes: 0 success, 2 validation error, 3 partial failure. Commands on the
same output directory are serialized through a lock file; all outputs are
written atomically (write-then-rename with a ``.partial`` sibling).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from . import balancer, cdiag, cluster, executor
from .config import ConfigError, PipelineConfig, load_config
from .domain import (
    FormatError,
    enumerate_cases,
    field_filename,
    read_htc_csv,
    read_manifest,
    write_htc_csv,
    write_manifest,
)
from .seeding import mix_seed
from .surrogate import synth_htc

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARTIAL = 3

WORKERS_ENV = "HTCPIPE_WORKERS"
LOCK_NAME = ".htcpipe.lock"
CASE_MATCH_TOL = 1e-12


class PipelineLocked(RuntimeError):
    pass


@contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineLocked(
            f"{out_dir} is locked by another command (remove {lock} if stale)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock)
        except FileNotFoundError:
            pass


def _resolve_workers(config: PipelineConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _paths(config: PipelineConfig) -> dict[str, Path]:
    out = config.out_dir
    return {
        "manifest": out / "manifest.json",
        "fields": out / "fields",
        "subsets": out / "subsets",
        "schedule": out / "schedule.json",
        "cds": out / "cds.json",
        "queries": out / "queries",
        "logs": out / "logs",
    }


def _face_seed(config: PipelineConfig, face_id: int) -> int:
    return mix_seed(config.rng_seed, 3, face_id)


def _load_fields(config: PipelineConfig, faces, cases):
    """All per-(face, case) fields from disk; FormatError if any is missing."""
    p = _paths(config)
    fields = {}
    for face in faces:
        per_face = []
        for case in cases:
            path = p["fields"] / field_filename(face.face_id, case.case_id)
            if not path.exists():
                raise FormatError(f"missing HTC export {path}; run 'simulate' first")
            per_face.append((case, read_htc_csv(path, face)))
        fields[face.face_id] = per_face
    return fields


def cmd_gen_cases(config: PipelineConfig, args) -> int:
    cases = enumerate_cases(config.case_grid)
    p = _paths(config)
    write_manifest(cases, p["manifest"])
    print(f"wrote {len(cases)} load cases to {p['manifest']}")
    return EXIT_OK


def cmd_simulate(config: PipelineConfig, args) -> int:
    p = _paths(config)
    if not p["manifest"].exists():
        raise ConfigError(f"no load-case manifest at {p['manifest']}; run 'gen-cases' first")
    cases = read_manifest(p["manifest"])
    faces = config.build_faces()
    p["fields"].mkdir(parents=True, exist_ok=True)
    p["logs"].mkdir(parents=True, exist_ok=True)

    def case_body(case):
        def run():
            for face in faces:
                field = synth_htc(face, case, config.surrogate_for(face.face_id))
                write_htc_csv(field, face, p["fields"] / field_filename(face.face_id, case.case_id))
        return run

    tasks = [(case.case_id, case_body(case)) for case in cases]
    workers = _resolve_workers(config)
    log = executor.run_parallel(tasks, workers, setup_cost_s=config.simulate_setup_cost_s)
    executor.write_runlog(log, p["logs"] / "simulate_runlog.tsv")

    n_csv = len(faces) * len(cases)
    print(f"simulated {len(cases)} cases x {len(faces)} faces -> {n_csv} CSV files")
    print(f"workers={workers} wall_clock={log.wall_clock_s:.3f}s "
          f"sequential_equivalent={log.sequential_equivalent_s:.3f}s "
          f"speedup={executor.speedup(log):.2f}")
    if not log.complete:
        for e in log.entries:
            if not e.ok:
                print(f"case {e.task_id} failed: {e.error}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_cluster(config: PipelineConfig, args) -> int:
    p = _paths(config)
    if not p["manifest"].exists():
        raise ConfigError(f"no load-case manifest at {p['manifest']}; run 'gen-cases' first")
    cases = read_manifest(p["manifest"])
    faces = config.build_faces()
    fields = _load_fields(config, faces, cases)
    fields_only = {fid: [f for _, f in pairs] for fid, pairs in fields.items()}
    p["subsets"].mkdir(parents=True, exist_ok=True)
    p["logs"].mkdir(parents=True, exist_ok=True)

    model, schedule = balancer.measure_and_balance(
        faces, fields_only, config.m, config.ga, probe_fraction=config.probe_fraction
    )

    by_id = {face.face_id: face for face in faces}
    rbf_opts = config.rbf_opts()

    def face_body(face_id):
        def run():
            face = by_id[face_id]
            params = replace(config.ga, rng_seed=_face_seed(config, face_id))
            subset = cluster.two_stage_cluster(
                face, fields_only[face_id], config.m_for(face_id), params, **rbf_opts
            )
            cluster.write_subset(subset, params, p["subsets"] / f"face_{face_id}_subset.json")
        return run

    bodies = {face.face_id: face_body(face.face_id) for face in faces}
    log = executor.run_schedule(schedule, bodies)
    executor.write_runlog(log, p["logs"] / "cluster_runlog.tsv")

    # Fold the measured runtimes back into the schedule document (Fig. 9 data).
    measured = {e.task_id: e.compute_s for e in log.entries}
    schedule = balancer.Schedule(
        bins=tuple(
            tuple(replace(t, measured_seconds=measured.get(t.task_id)) for t in b)
            for b in schedule.bins
        )
    )
    balancer.write_schedule(schedule, p["schedule"], model)

    print(f"clustered {len(faces)} faces in {schedule.n_bins} bins "
          f"(makespan estimate {schedule.makespan:.3f}s)")
    print(f"wall_clock={log.wall_clock_s:.3f}s "
          f"sequential_equivalent={log.sequential_equivalent_s:.3f}s "
          f"speedup={executor.speedup(log):.2f}")
    if not log.complete:
        for e in log.entries:
            if not e.ok:
                print(f"face {e.task_id} clustering failed: {e.error}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _read_subsets(config: PipelineConfig, faces):
    p = _paths(config)
    subsets = {}
    for face in faces:
        path = p["subsets"] / f"face_{face.face_id}_subset.json"
        if not path.exists():
            raise FormatError(f"missing subset document {path}; run 'cluster' first")
        subset, _ = cluster.read_subset(path)
        subsets[face.face_id] = subset
    return subsets


def cmd_train_cd(config: PipelineConfig, args) -> int:
    p = _paths(config)
    if not p["manifest"].exists():
        raise ConfigError(f"no load-case manifest at {p['manifest']}; run 'gen-cases' first")
    cases = read_manifest(p["manifest"])
    faces = config.build_faces()
    fields = _load_fields(config, faces, cases)
    subsets = _read_subsets(config, faces)

    grids = cdiag.train_all(
        [subsets[f.face_id] for f in faces],
        fields,
        config.resolved_cd_axes(),
        config.cd_lambda,
    )
    cdiag.write_cds(grids, p["cds"])
    print(f"trained {len(grids)} characteristic diagrams "
          f"({len(cases)} samples each) -> {p['cds']}")
    return EXIT_OK


def cmd_query(config: PipelineConfig, args) -> int:
    from .domain import LoadCase

    p = _paths(config)
    faces = {f.face_id: f for f in config.build_faces()}
    if args.face_id not in faces:
        raise ConfigError(f"unknown face id {args.face_id}")
    face = faces[args.face_id]
    if not p["cds"].exists():
        raise ConfigError(f"no characteristic diagrams at {p['cds']}; run 'train-cd' first")
    cds = cdiag.read_cds(p["cds"])
    subsets = _read_subsets(config, [face])
    subset = subsets[face.face_id]
    cases = read_manifest(p["manifest"]) if p["manifest"].exists() else []

    matched = None
    for c in cases:
        if (
            abs(c.t_air - args.t) <= CASE_MATCH_TOL
            and abs(c.v - args.v) <= CASE_MATCH_TOL
            and abs(c.az - args.az) <= CASE_MATCH_TOL
            and abs(c.el - args.el) <= CASE_MATCH_TOL
        ):
            matched = c
            break
    case = LoadCase(
        case_id=matched.case_id if matched else -1,
        t_air=args.t, v=args.v, az=args.az, el=args.el,
    )

    by_owner = {g.owner: g for g in cds}
    extrapolated = False
    for node in subset.members:
        grid = by_owner.get((face.face_id, node))
        if grid is None:
            raise ConfigError(f"diagrams do not cover face {face.face_id} node {node}")
        _, clamped = cdiag.query_flagged(grid, case)
        extrapolated = extrapolated or clamped

    field = cdiag.reconstruct_face(face, subset, cds, case, **config.rbf_opts())
    p["queries"].mkdir(parents=True, exist_ok=True)
    out_name = (
        f"query_face_{face.face_id}_t{args.t:g}_v{args.v:g}_az{args.az:g}_el{args.el:g}.csv"
    )
    out_path = p["queries"] / out_name
    write_htc_csv(field, face, out_path)
    print(f"reconstructed face {face.face_id} at (t={args.t:g}, v={args.v:g}, "
          f"az={args.az:g}, el={args.el:g}) -> {out_path}")
    if extrapolated:
        print("warning: load case outside the trained range; coordinates were clamped")

    if matched is not None:
        stored = read_htc_csv(
            p["fields"] / field_filename(face.face_id, matched.case_id), face
        )
        max_err = float(max(abs(field.values - stored.values)))
        cd_residual = max(
            abs(cdiag.query(by_owner[(face.face_id, n)], case) - stored.values[n])
            for n in subset.members
        )
        bound = (subset.fitness or 0.0) + cd_residual + 1e-6
        print(f"training case {matched.case_id}: max reconstruction error {max_err:.3e} "
              f"(stage-2 fitness {subset.fitness:.3e} + CD residual {cd_residual:.3e} + 1e-6)")
        print("within bound" if max_err <= bound else "EXCEEDS BOUND")
    return EXIT_OK


def cmd_report(config: PipelineConfig, args) -> int:
    p = _paths(config)
    sim_log = p["logs"] / "simulate_runlog.tsv"
    clu_log = p["logs"] / "cluster_runlog.tsv"
    if not sim_log.exists() and not clu_log.exists():
        raise ConfigError(f"no run logs under {p['logs']}")

    for name, path in (("simulate", sim_log), ("cluster", clu_log)):
        if not path.exists():
            continue
        log = executor.read_runlog(path)
        print(f"== {name} ==")
        print("task_id\tworker\twait_s\tsetup_s\tcompute_s")
        for e in log.entries:
            print(f"{e.task_id}\t{e.worker_id}\t{e.wait_s:.6f}\t{e.setup_s:.6f}\t{e.compute_s:.6f}")
        totals = log.worker_compute_totals()
        print("bin\tcompute_total_s")
        for w in sorted(totals):
            print(f"{w}\t{totals[w]:.6f}")
        seq = log.sequential_equivalent_s
        print(f"sequential_equivalent_s\t{seq:.6f}")
        print(f"wall_clock_s\t{log.wall_clock_s:.6f}")
        print(f"speedup\t{executor.speedup(log):.2f}")
        if name == "cluster" and totals:
            busiest = max(totals.values())
            if busiest > 0:
                print(f"bin_balance_speedup\t{seq / busiest:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htcpipe",
        description="HTC surrogate pipeline: simulate fields, cluster nodes, "
                    "train characteristic diagrams, reconstruct faces.",
    )
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--workers", type=int, default=None, help="worker count override")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-cases").set_defaults(func=cmd_gen_cases)
    sub.add_parser("simulate").set_defaults(func=cmd_simulate)
    sub.add_parser("cluster").set_defaults(func=cmd_cluster)
    sub.add_parser("train-cd").set_defaults(func=cmd_train_cd)

    q = sub.add_parser("query")
    q.add_argument("--t", type=float, required=True, help="air temperature, degC")
    q.add_argument("--v", type=float, required=True, help="inlet speed, m/s")
    q.add_argument("--az", type=float, default=0.0, help="azimuth, deg")
    q.add_argument("--el", type=float, default=0.0, help="elevation, deg")
    q.add_argument("--face-id", type=int, required=True)
    q.set_defaults(func=cmd_query)

    sub.add_parser("report").set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config,
            out_override=args.out,
            seed_override=args.seed,
            workers_override=args.workers,
        )
        with output_lock(config.out_dir):
            return args.func(config, args)
    except (ConfigError, FormatError, PipelineLocked, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
