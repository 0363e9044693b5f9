"""Bounded worker pool with per-task phase accounting (wait / setup / compute).

Workers pull from a FIFO queue and report entries back over a result queue;
the collector assembles the RunLog. Task bodies must not share mutable state.
Failed tasks are recorded and do not abort the run.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

from .iotools import atomic_write_text

_RUNLOG_COLUMNS = ("task_id", "worker", "wait", "setup", "compute", "start", "end", "status")


@dataclass(frozen=True)
class RunEntry:
    task_id: int
    worker_id: int
    wait_s: float
    setup_s: float
    compute_s: float
    start_s: float  # relative to run start
    end_s: float
    ok: bool = True
    error: str = ""


@dataclass(frozen=True)
class RunLog:
    entries: tuple[RunEntry, ...]
    wall_clock_s: float
    n_workers: int

    @property
    def sequential_equivalent_s(self) -> float:
        return sum(e.compute_s for e in self.entries)

    @property
    def complete(self) -> bool:
        return all(e.ok for e in self.entries)

    def by_worker(self) -> dict[int, list[RunEntry]]:
        out: dict[int, list[RunEntry]] = {}
        for e in self.entries:
            out.setdefault(e.worker_id, []).append(e)
        return out

    def worker_compute_totals(self) -> dict[int, float]:
        return {w: sum(e.compute_s for e in es) for w, es in self.by_worker().items()}


def speedup(log: RunLog) -> float:
    """Sequential-equivalent compute time over parallel wall clock."""
    if log.wall_clock_s <= 0:
        raise ValueError("wall clock must be positive")
    return log.sequential_equivalent_s / log.wall_clock_s


def _run_entry(task_id, body, worker_id, t0, setup_cost_s) -> RunEntry:
    start = time.perf_counter() - t0
    wait = start
    if setup_cost_s > 0.0:
        time.sleep(setup_cost_s)
    setup = (time.perf_counter() - t0) - start
    c0 = time.perf_counter()
    ok, err = True, ""
    try:
        body()
    except Exception as exc:  # record, keep the run going
        ok, err = False, f"{type(exc).__name__}: {exc}"
    compute = time.perf_counter() - c0
    end = time.perf_counter() - t0
    return RunEntry(
        task_id=task_id, worker_id=worker_id,
        wait_s=wait, setup_s=setup, compute_s=compute,
        start_s=start, end_s=end, ok=ok, error=err,
    )


def run_parallel(tasks, n_workers: int, setup_cost_s: float = 0.0) -> RunLog:
    """Run (task_id, body) pairs on a FIFO pool of n_workers threads.

    Every task runs exactly once; wait is the delay between run start
    (submission) and task start; setup models the per-task project copy.
    """
    tasks = list(tasks)
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    if not tasks:
        return RunLog(entries=(), wall_clock_s=0.0, n_workers=n_workers)

    todo: queue.Queue = queue.Queue()
    done: queue.Queue = queue.Queue()
    for item in tasks:
        todo.put(item)
    for _ in range(n_workers):
        todo.put(None)

    t0 = time.perf_counter()

    def worker(worker_id: int):
        while True:
            item = todo.get()
            if item is None:
                return
            task_id, body = item
            done.put(_run_entry(task_id, body, worker_id, t0, setup_cost_s))

    threads = [threading.Thread(target=worker, args=(w,), daemon=True) for w in range(n_workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    wall = time.perf_counter() - t0

    entries = []
    while not done.empty():
        entries.append(done.get())
    order = {task_id: i for i, (task_id, _) in enumerate(tasks)}
    entries.sort(key=lambda e: order[e.task_id])
    return RunLog(entries=tuple(entries), wall_clock_s=wall, n_workers=n_workers)


def run_schedule(schedule, task_bodies, setup_cost_s: float = 0.0) -> RunLog:
    """Run a packed schedule: bin b's tasks sequentially on worker b, bins
    concurrently. ``task_bodies`` maps task_id to a callable."""
    for b in schedule.bins:
        for t in b:
            if t.task_id not in task_bodies:
                raise ValueError(f"no body supplied for task {t.task_id}")

    done: queue.Queue = queue.Queue()
    t0 = time.perf_counter()

    def run_bin(worker_id: int, bin_tasks):
        for t in bin_tasks:
            done.put(_run_entry(t.task_id, task_bodies[t.task_id], worker_id, t0, setup_cost_s))

    threads = [
        threading.Thread(target=run_bin, args=(w, b), daemon=True)
        for w, b in enumerate(schedule.bins)
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    wall = time.perf_counter() - t0

    entries = []
    while not done.empty():
        entries.append(done.get())
    entries.sort(key=lambda e: (e.worker_id, e.start_s))
    return RunLog(entries=tuple(entries), wall_clock_s=wall, n_workers=schedule.n_bins)


def write_runlog(log: RunLog, path) -> None:
    """Plot-ready tab-separated phase data, microsecond timestamps."""
    lines = [f"# wall_clock={log.wall_clock_s:.6f} n_workers={log.n_workers}"]
    lines.append("\t".join(_RUNLOG_COLUMNS))
    for e in log.entries:
        status = "ok" if e.ok else "error " + e.error.replace("\t", " ").replace("\n", " ")
        lines.append(
            f"{e.task_id}\t{e.worker_id}\t{e.wait_s:.6f}\t{e.setup_s:.6f}"
            f"\t{e.compute_s:.6f}\t{e.start_s:.6f}\t{e.end_s:.6f}\t{status}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_runlog(path) -> RunLog:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# wall_clock="):
        raise ValueError(f"{path}: not a run log")
    head = dict(part.split("=", 1) for part in lines[0][2:].split())
    if len(lines) < 2 or lines[1] != "\t".join(_RUNLOG_COLUMNS):
        raise ValueError(f"{path}: malformed run log header")
    entries = []
    for line in lines[2:]:
        parts = line.split("\t")
        if len(parts) != len(_RUNLOG_COLUMNS):
            raise ValueError(f"{path}: malformed run log row: {line!r}")
        status = parts[7]
        entries.append(
            RunEntry(
                task_id=int(parts[0]), worker_id=int(parts[1]),
                wait_s=float(parts[2]), setup_s=float(parts[3]), compute_s=float(parts[4]),
                start_s=float(parts[5]), end_s=float(parts[6]),
                ok=status == "ok",
                error="" if status == "ok" else status.removeprefix("error "),
            )
        )
    return RunLog(
        entries=tuple(entries),
        wall_clock_s=float(head["wall_clock"]),
        n_workers=int(head["n_workers"]),
    )
