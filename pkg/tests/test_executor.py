import time
from pathlib import Path

import pytest

from htcpipe.balancer import Task, pack
from htcpipe.executor import (
    RunEntry,
    RunLog,
    read_runlog,
    run_parallel,
    run_schedule,
    speedup,
    write_runlog,
)


def sleep_task(seconds):
    return lambda: time.sleep(seconds)


class TestRunParallel:
    def test_single_task_single_worker(self):
        log = run_parallel([(0, sleep_task(0.05))], 1, setup_cost_s=0.02)
        assert len(log.entries) == 1
        e = log.entries[0]
        assert e.ok
        assert e.compute_s >= 0.05
        assert e.setup_s >= 0.02
        assert log.wall_clock_s >= 0.07
        # speedup deviates from 1.0 by the setup share, nothing more
        setup_bound = 0.05 / (0.05 + 0.02)
        assert 0.9 * setup_bound <= speedup(log) <= 1.05

    def test_wall_clock_tracks_wave_count(self):
        # n equal tasks on P workers: wall clock ~ ceil(n/P) * t
        n, p, t = 6, 3, 0.2
        log = run_parallel([(i, sleep_task(t)) for i in range(n)], p)
        expected = (n + p - 1) // p * t
        assert log.wall_clock_s == pytest.approx(expected, rel=0.10)

    def test_every_task_runs_exactly_once(self):
        seen = []
        tasks = [(i, (lambda i=i: seen.append(i))) for i in range(20)]
        log = run_parallel(tasks, 4)
        assert sorted(seen) == list(range(20))
        assert sorted(e.task_id for e in log.entries) == list(range(20))

    def test_failure_recorded_and_run_continues(self):
        def boom():
            raise RuntimeError("synthetic failure")

        log = run_parallel([(0, boom), (1, sleep_task(0.01))], 2)
        by_id = {e.task_id: e for e in log.entries}
        assert not by_id[0].ok
        assert "synthetic failure" in by_id[0].error
        assert by_id[1].ok
        assert not log.complete

    def test_concurrency_bound(self):
        n_workers = 2
        log = run_parallel([(i, sleep_task(0.03)) for i in range(6)], n_workers)
        events = []
        for e in log.entries:
            events.append((e.start_s, 1))
            events.append((e.end_s, -1))
        events.sort()
        active = peak = 0
        for _, delta in events:
            active += delta
            peak = max(peak, active)
        assert peak <= n_workers

    def test_compute_conservation(self):
        log = run_parallel([(i, sleep_task(0.01)) for i in range(5)], 3)
        assert log.sequential_equivalent_s == pytest.approx(
            sum(e.compute_s for e in log.entries)
        )

    def test_output_determinism_across_worker_counts(self, tmp_path):
        def writer(directory):
            def make(i):
                def body():
                    (directory / f"task_{i}.txt").write_text(f"payload {i * i}\n")
                return body
            return make

        for workers, sub in ((1, "w1"), (4, "w4")):
            d = tmp_path / sub
            d.mkdir()
            run_parallel([(i, writer(d)(i)) for i in range(10)], workers)
        for i in range(10):
            a = (tmp_path / "w1" / f"task_{i}.txt").read_bytes()
            b = (tmp_path / "w4" / f"task_{i}.txt").read_bytes()
            assert a == b

    def test_speedup_bounded_by_workers(self):
        log = run_parallel([(i, sleep_task(0.02)) for i in range(8)], 4)
        assert speedup(log) <= 4 * 1.05


class TestRunSchedule:
    def test_single_bin_is_sequential(self):
        tasks = [Task(i, 10, 0.05) for i in range(3)]
        schedule = pack(tasks, 1)
        bodies = {i: sleep_task(0.05) for i in range(3)}
        log = run_schedule(schedule, bodies, setup_cost_s=0.01)
        assert log.wall_clock_s >= 3 * 0.06
        assert {e.worker_id for e in log.entries} == {0}

    def test_two_equal_bins_overlap(self):
        tasks = [Task(0, 10, 0.2), Task(1, 10, 0.2)]
        schedule = pack(tasks, 2)
        log = run_schedule(schedule, {0: sleep_task(0.2), 1: sleep_task(0.2)})
        assert log.wall_clock_s == pytest.approx(0.2, rel=0.15)

    def test_bin_order_preserved(self):
        tasks = [Task(i, 10, float(3 - i)) for i in range(3)]
        schedule = pack(tasks, 1)
        order = []
        bodies = {i: (lambda i=i: order.append(i)) for i in range(3)}
        run_schedule(schedule, bodies)
        assert order == [t.task_id for t in schedule.bins[0]]

    def test_missing_body_rejected(self):
        schedule = pack([Task(0, 10, 1.0)], 1)
        with pytest.raises(ValueError, match="no body"):
            run_schedule(schedule, {})

    def test_worker_totals(self):
        tasks = [Task(0, 10, 0.06), Task(1, 10, 0.03), Task(2, 10, 0.03)]
        schedule = pack(tasks, 2)
        bodies = {0: sleep_task(0.06), 1: sleep_task(0.03), 2: sleep_task(0.03)}
        log = run_schedule(schedule, bodies)
        totals = log.worker_compute_totals()
        assert len(totals) == 2
        assert sum(totals.values()) == pytest.approx(log.sequential_equivalent_s)


class TestSpeedupArithmetic:
    def test_reference_cluster_ratio(self):
        log = RunLog(
            entries=(RunEntry(0, 0, 0.0, 0.0, 5082.0, 0.0, 5082.0),),
            wall_clock_s=2043.0,
            n_workers=3,
        )
        assert speedup(log) == pytest.approx(2.49, abs=0.01)

    def test_reference_simulation_ratio(self):
        log = RunLog(
            entries=(RunEntry(0, 0, 0.0, 0.0, 177914.0, 0.0, 177914.0),),
            wall_clock_s=177914.0 / 31.0,
            n_workers=35,
        )
        assert speedup(log) == pytest.approx(31.0, rel=1e-12)

    def test_zero_wall_clock_rejected(self):
        log = RunLog(entries=(), wall_clock_s=0.0, n_workers=1)
        with pytest.raises(ValueError):
            speedup(log)


class TestRunlogDocument:
    def test_round_trip_bytes(self, tmp_path):
        log = run_parallel([(i, sleep_task(0.01)) for i in range(4)], 2, setup_cost_s=0.002)
        path = tmp_path / "runlog.tsv"
        write_runlog(log, path)
        first = path.read_bytes()
        back = read_runlog(path)
        assert back.n_workers == log.n_workers
        assert len(back.entries) == len(log.entries)
        write_runlog(back, path)
        assert path.read_bytes() == first

    def test_error_status_round_trips(self, tmp_path):
        def boom():
            raise ValueError("bad\tvalue")

        log = run_parallel([(0, boom)], 1)
        path = tmp_path / "runlog.tsv"
        write_runlog(log, path)
        back = read_runlog(path)
        assert not back.entries[0].ok
        assert "bad value" in back.entries[0].error

    def test_malformed_log_rejected(self, tmp_path):
        path = tmp_path / "runlog.tsv"
        path.write_text("not a log\n")
        with pytest.raises(ValueError, match="not a run log"):
            read_runlog(path)
