import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from dynmeans.cli import EXIT_INPUT, EXIT_OK, EXIT_UNCONVERGED, EXIT_USAGE, grid_values, main
from dynmeans.formats import read_batches, read_labels, read_result, read_timing, write_batches
from dynmeans.pipeline import RunConfig, reparameterize, ReparamConfig, run_sequence

PARAMS = ["--lambda", "0.04", "--nq", "6.8", "--ktau", "1.01"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_data(tmp_path, capsys):
    data, truth = tmp_path / "data.jsonl", tmp_path / "truth.jsonl"
    code, _, _ = run(capsys, "generate", "-o", data, "--truth", truth, "--steps", 12, "--seed", 3)
    assert code == EXIT_OK
    return data, truth


def parse_eval(out):
    head, table = out.split("\n\n")
    summary = dict(line.split(",") for line in head.splitlines())
    return {k: float(v) for k, v in summary.items()}, list(csv.DictReader(io.StringIO(table)))


class TestGenerate:
    def test_defaults(self, tmp_path, capsys):
        data, truth = tmp_path / "d.jsonl", tmp_path / "t.jsonl"
        code, out, _ = run(capsys, "generate", "-o", data, "--truth", truth, "--seed", 1)
        assert code == EXIT_OK and out.startswith("steps=100 ")
        ts, batches = read_batches(data)
        assert ts == list(range(100)) and all(b.shape == (75, 2) for b in batches)
        tt, labels = read_labels(truth)
        assert tt == ts and all(len(lab) == 75 for lab in labels)

    def test_one_step(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        run(capsys, "generate", "-o", data, "--truth", tmp_path / "t.jsonl", "--steps", 1)
        assert len(data.read_text().splitlines()) == 1

    def test_bad_flag_named(self, tmp_path, capsys):
        code, _, err = run(capsys, "generate", "-o", tmp_path / "d", "--truth", tmp_path / "t", "--death-prob", 2)
        assert code == EXIT_USAGE and "--death-prob" in err


class TestCluster:
    def test_end_to_end(self, small_data, tmp_path, capsys):
        data, truth = small_data
        res, timing = tmp_path / "r.jsonl", tmp_path / "time.csv"
        code, _, _ = run(capsys, "cluster", data, "-o", res, *PARAMS, "--timing", timing)
        assert code == EXIT_OK
        header, steps = read_result(res)
        assert header["q_penalty"] == reparameterize(ReparamConfig(0.04, 6.8, 1.01)).q_penalty
        assert header["restarts"] == 3 and len(steps) == 12
        _, batches = read_batches(data)
        for step, Y in zip(steps, batches):
            # labels partition the points and every cluster listed holds them
            assert len(step.labels) == len(Y)
            assert set(step.labels.tolist()) == {c["id"] for c in step.clusters}
            assert sum(c["members"] for c in step.clusters) == len(Y)
        tt, times = read_timing(timing)
        assert tt == list(range(12)) and np.all(times > 0)
        code, out, _ = run(capsys, "eval", res, truth, "--timing", timing)
        summary, rows = parse_eval(out)
        assert code == EXIT_OK and 0 < summary["tracked_accuracy"] <= summary["untracked_accuracy"] <= 1
        assert len(rows) == 12 and set(rows[0]) == {"t", "n_points", "tracked", "untracked", "wall_time"}

    def test_result_round_trip(self, small_data, tmp_path, capsys):
        data, _ = small_data
        res = tmp_path / "r.jsonl"
        run(capsys, "cluster", data, "-o", res, *PARAMS, "--seed", 4)
        _, batches = read_batches(data)
        params = reparameterize(ReparamConfig(0.04, 6.8, 1.01))
        mem = run_sequence(batches, RunConfig(params, restarts=3, seed=4))
        _, steps = read_result(res)
        for a, b in zip(mem.steps, steps):
            assert a.labels.tolist() == b.labels.tolist() and a.cost == b.cost
            for ca, cb in zip(a.clusters, b.clusters):
                assert ca.id == cb["id"] and ca.weight == cb["weight"] and ca.age == cb["age"]
                assert np.array_equal(ca.center, cb["center"])

    def test_empty_input(self, tmp_path, capsys):
        data, res = tmp_path / "empty.jsonl", tmp_path / "r.jsonl"
        data.write_text("")
        assert run(capsys, "cluster", data, "-o", res, *PARAMS)[0] == EXIT_OK
        lines = res.read_text().splitlines()
        assert len(lines) == 1 and "header" in json.loads(lines[0])

    def test_malformed_line(self, tmp_path, capsys):
        data = tmp_path / "bad.jsonl"
        data.write_text('{"t": 0, "points": [[0.0, 1.0]]}\n{"t": 1, "points": [[0.0]]}\n')
        code, _, err = run(capsys, "cluster", data, "-o", tmp_path / "r", *PARAMS)
        assert code == EXIT_INPUT and "bad.jsonl:2" in err

    def test_not_json(self, tmp_path, capsys):
        data = tmp_path / "bad.jsonl"
        data.write_text('{"t": 0, "points": []}\nnope\n')
        code, _, err = run(capsys, "cluster", data, "-o", tmp_path / "r", *PARAMS)
        assert code == EXIT_INPUT and ":2:" in err

    def test_mixed_parameterizations(self, small_data, tmp_path, capsys):
        code, _, err = run(capsys, "cluster", small_data[0], "-o", tmp_path / "r", *PARAMS, "--q", 0.1)
        assert code == EXIT_USAGE and "mutually exclusive" in err

    def test_direct_parameters(self, small_data, tmp_path, capsys):
        res = tmp_path / "r.jsonl"
        code, _, _ = run(capsys, "cluster", small_data[0], "-o", res, "--lambda", 0.04, "--q", 0.006, "--tau", 0.2)
        assert code == EXIT_OK and read_result(res)[0]["n_q"] is None

    def test_unconverged_exit(self, small_data, tmp_path, capsys):
        res = tmp_path / "r.jsonl"
        code, _, err = run(capsys, "cluster", small_data[0], "-o", res, *PARAMS, "--max-iters", 1)
        assert code == EXIT_UNCONVERGED and "warning" in err
        assert len(read_result(res)[1]) == 12

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "cluster", tmp_path / "nope", "-o", tmp_path / "r", *PARAMS)[0] == EXIT_INPUT


class TestEval:
    def test_truth_against_itself(self, small_data, capsys):
        code, out, _ = run(capsys, "eval", small_data[1], small_data[1])
        summary, rows = parse_eval(out)
        assert code == EXIT_OK and summary["tracked_accuracy"] == 1.0 == summary["untracked_accuracy"]
        assert [int(r["t"]) for r in rows] == list(range(12))

    def test_mismatched_files(self, tmp_path, small_data, capsys):
        other, truth = tmp_path / "o.jsonl", tmp_path / "ot.jsonl"
        run(capsys, "generate", "-o", other, "--truth", truth, "--steps", 5)
        assert run(capsys, "eval", truth, small_data[1])[0] == EXIT_INPUT


def test_grid_values():
    assert grid_values("0.1,0.2") == [0.1, 0.2]
    assert grid_values("1:2:3") == [1.0, 1.5, 2.0]


class TestSweep:
    def test_single_cell_equals_cluster_then_eval(self, small_data, tmp_path, capsys):
        data, truth = small_data
        code, out, _ = run(capsys, "sweep", data, "--truth", truth, *PARAMS, "--seed", 2)
        (row,) = list(csv.DictReader(io.StringIO(out)))
        res = tmp_path / "r.jsonl"
        run(capsys, "cluster", data, "-o", res, *PARAMS, "--seed", 2)
        summary, _ = parse_eval(run(capsys, "eval", res, truth)[1])
        assert code == EXIT_OK
        assert float(row["tracked_mean"]) == summary["tracked_accuracy"]
        assert float(row["untracked_mean"]) == summary["untracked_accuracy"]

    def test_grid_rows_in_order(self, small_data, tmp_path, capsys):
        data, truth = small_data
        out = tmp_path / "s.jsonl"
        code, _, _ = run(capsys, "sweep", data, "--truth", truth, "--lambda", "0.03,0.04,0.05",
                         "--nq", 6.8, "--ktau", "1.0,1.01,1.05", "--restarts", 1, "-o", out)
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert code == EXIT_OK and len(rows) == 9
        assert [(r["lam"], r["k_tau"]) for r in rows][:3] == [(0.03, 1.0), (0.03, 1.01), (0.03, 1.05)]

    def test_workers_match_serial(self, small_data, tmp_path, capsys):
        data, truth = small_data
        grid = ["--lambda", "0.03,0.05", "--nq", 6.8, "--ktau", 1.01, "--restarts", 1]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "sweep", data, "--truth", truth, *grid, "--csv", a)
        run(capsys, "sweep", data, "--truth", truth, *grid, "--csv", b, "--workers", 2)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_grid(self, small_data, capsys):
        code, _, err = run(capsys, "sweep", small_data[0], "--truth", small_data[1], "--lambda", "x", "--nq", 2, "--ktau", 1)
        assert code == EXIT_USAGE and "--lambda" in err

    def test_smooth_surface(self, tmp_path, capsys):
        data, truth = tmp_path / "d.jsonl", tmp_path / "t.jsonl"
        run(capsys, "generate", "-o", data, "--truth", truth, "--steps", 30, "--seed", 1)
        lams, ktaus = [0.03, 0.04, 0.05], [1.0, 1.01, 1.05]
        out = tmp_path / "s.jsonl"
        run(capsys, "sweep", data, "--truth", truth, "--lambda", ",".join(map(str, lams)), "--nq", 6.8,
            "--ktau", ",".join(map(str, ktaus)), "--trials", 2, "-o", out)
        acc = np.array([json.loads(line)["tracked_mean"] for line in out.read_text().splitlines()])
        acc = acc.reshape(len(lams), len(ktaus))
        pairs = [(acc[i, j], acc[i + 1, j]) for i in range(2) for j in range(3)]
        pairs += [(acc[i, j], acc[i, j + 1]) for i in range(3) for j in range(2)]
        cv = max(np.std(p) / np.mean(p) for p in pairs)
        assert cv < 0.2


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", *PARAMS, "--restarts-list", "1,3", "--trials", 1, "--steps", 5)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK and [r["restarts"] for r in rows] == ["1", "3"]


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dynmeans", "generate", "-o", str(tmp_path / "d"), "--truth", str(tmp_path / "t"),
         "--steps", "2"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "steps=2" in proc.stdout
    assert subprocess.run([sys.executable, "-m", "dynmeans", "cluster"], capture_output=True).returncode == EXIT_USAGE


def test_write_batches_round_trip(tmp_path):
    batches = [np.random.default_rng(0).normal(size=(3, 2)), np.empty((0, 2)), np.array([[0.1, 1 / 3]])]
    path = tmp_path / "b.jsonl"
    write_batches(path, batches)
    _, back = read_batches(path)
    assert all(np.array_equal(a, b) for a, b in zip(batches, back))
