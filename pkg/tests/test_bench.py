import numpy as np

from drsplit.bench import BenchReport, bench_puzzle, read_bench_csv, resolve_workers
from drsplit.puzzles import QueensInstance, bundled_sudoku
from drsplit.splitting import StopPolicy


class TestWorkerResolution:
    def test_env_caps_pool(self, monkeypatch):
        monkeypatch.setenv("DR_THREADS", "2")
        assert resolve_workers(None, runs=64) <= 2
        assert resolve_workers(8, runs=64) == 2

    def test_never_more_workers_than_runs(self, monkeypatch):
        monkeypatch.delenv("DR_THREADS", raising=False)
        assert resolve_workers(16, runs=3) == 3

    def test_bad_env_value_ignored(self, monkeypatch):
        monkeypatch.setenv("DR_THREADS", "zebra")
        assert resolve_workers(4, runs=8) == 4


class TestBench:
    def test_seeded_batch_is_deterministic(self):
        inst = QueensInstance(5)
        a = bench_puzzle(inst, "sdr", None, StopPolicy(), runs=6, base_seed=3,
                         workers=1)
        b = bench_puzzle(inst, "sdr", None, StopPolicy(), runs=6, base_seed=3,
                         workers=1)
        assert [r.outcome for r in a.records] == [r.outcome for r in b.records]
        assert [r.iterations for r in a.records] == [r.iterations
                                                     for r in b.records]

    def test_parallel_equals_serial(self):
        inst = QueensInstance(5)
        a = bench_puzzle(inst, "sdr", None, StopPolicy(), runs=6, base_seed=0,
                         workers=1)
        b = bench_puzzle(inst, "sdr", None, StopPolicy(), runs=6, base_seed=0,
                         workers=2)
        assert [(r.run_id, r.seed, r.outcome, r.iterations)
                for r in a.records] == \
               [(r.run_id, r.seed, r.outcome, r.iterations)
                for r in b.records]

    def test_seeds_offset_from_base(self):
        inst = QueensInstance(4)
        rep = bench_puzzle(inst, "sdr", None, StopPolicy(), runs=4,
                           base_seed=10, workers=1)
        assert [r.seed for r in rep.records] == [10, 11, 12, 13]

    def test_damped_sudoku_never_succeeds(self):
        rep = bench_puzzle(bundled_sudoku("9x9-37"), "ddr", 0.2, StopPolicy(),
                           runs=5, base_seed=0, workers=1)
        assert rep.successes == 0
        assert rep.success_rate == 0.0

    def test_summary_and_stats(self):
        rep = bench_puzzle(QueensInstance(6), "sdr", None, StopPolicy(),
                           runs=5, base_seed=0, workers=1)
        text = rep.summary()
        assert "runs=5" in text
        assert "success_rate=" in text
        if rep.successes:
            iters = [r.iterations for r in rep.records
                     if r.outcome == "feasible-found"]
            assert rep.mean_iterations == float(np.mean(iters))
            assert rep.median_iterations == float(np.median(iters))

    def test_csv_round_trip(self, tmp_path):
        rep = bench_puzzle(QueensInstance(5), "sdr", None, StopPolicy(),
                           runs=4, base_seed=2, workers=1)
        path = tmp_path / "bench.csv"
        rep.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "run_id,seed,outcome,iterations,wall_ms"
        assert len(lines) == 5
        back = read_bench_csv(path)
        assert isinstance(back, BenchReport)
        assert [(r.run_id, r.seed, r.outcome, r.iterations)
                for r in back.records] == \
               [(r.run_id, r.seed, r.outcome, r.iterations)
                for r in rep.records]
