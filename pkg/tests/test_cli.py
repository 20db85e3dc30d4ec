"""Tests for the command-line surface and experiment orchestration."""

import json

import numpy as np
import pytest

from qubolearn.cli import cli_dispatch, hash_config, load_experiment_config, results_report
from qubolearn.problems.datasets import load_dataset


def run(capsys, *argv):
    code = cli_dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


CONFIG_TEMPLATE = """\
schema_version = 1
seed = {seed}
output_dir = "{out}"

[problem]
type = "randgraph"
k = 3
train_count = 12
test_count = 6

[model]
layers = 2
hidden = 8

[train]
method = "{method}"
lr = 1e-3
batch_size = 4
epochs = 2
solver = "exhaustive"
"""


class TestGenData:
    def test_randgraph_file(self, tmp_path, capsys):
        out = tmp_path / "d.jsonl"
        code, stdout, _ = run(
            capsys,
            "gen-data", "--problem", "randgraph", "--k", "4",
            "--count", "141", "--seed", "7", "--out", str(out),
        )
        assert code == 0
        instances, header = load_dataset(out)
        assert len(instances) == 141
        assert instances[0].p.shape == (256,)
        assert header["seed"] == "7"

    def test_unknown_problem(self, tmp_path, capsys):
        code, _, err = run(
            capsys,
            "gen-data", "--problem", "nonsense", "--count", "1", "--seed", "1",
            "--out", str(tmp_path / "x.jsonl"),
        )
        assert code == 2


class TestSolve:
    def test_exhaustive_on_diagonal_file(self, tmp_path, capsys):
        qubo = tmp_path / "f.qubo"
        qubo.write_text("qubo n=2\n0 0 -1.0\n1 1 2.0\n")
        code, stdout, _ = run(capsys, "solve", "--qubo", str(qubo), "--solver", "exhaustive")
        assert code == 0
        lines = stdout.strip().splitlines()
        assert lines[0] == "bitstring,energy,count"
        assert lines[1].startswith("10,-1.0")

    def test_sa_runs(self, tmp_path, capsys):
        qubo = tmp_path / "f.qubo"
        qubo.write_text("qubo n=3\n0 0 -1.0\n0 1 0.5\n")
        code, stdout, _ = run(
            capsys, "solve", "--qubo", str(qubo), "--solver", "sa",
            "--reads", "10", "--sweeps", "20", "--seed", "3",
        )
        assert code == 0
        assert stdout.splitlines()[0] == "bitstring,energy,count"

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "solve", "--qubo", "/nonexistent.qubo")
        assert code == 1


class TestTrain:
    def test_deterministic_checkpoints(self, tmp_path, capsys):
        runs = []
        for name in ("a", "b"):
            cfg = tmp_path / f"{name}.toml"
            out = tmp_path / name
            cfg.write_text(CONFIG_TEMPLATE.format(seed=5, out=out, method="ours"))
            code, _, err = run(capsys, "train", "--config", str(cfg))
            assert code == 0, err
            runs.append((out / "model.ckpt").read_bytes())
        assert runs[0] == runs[1]

    def test_report_and_meta_written(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        out = tmp_path / "run"
        cfg.write_text(CONFIG_TEMPLATE.format(seed=6, out=out, method="ours"))
        code, _, _ = run(capsys, "train", "--config", str(cfg))
        assert code == 0
        report = (out / "report.csv").read_text()
        assert report.startswith("# seed=6 config=")
        assert "loss_gap" in report
        meta = json.loads((out / "model.ckpt.meta.json").read_text())
        assert meta["seed"] == 6 and meta["method"] == "ours"

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(
            CONFIG_TEMPLATE.format(seed=1, out=tmp_path / "x", method="ours")
            + "\n[problem.extra]\nfoo = 1\n"
        )
        code, _, err = run(capsys, "train", "--config", str(cfg))
        assert code == 2
        assert "unknown keys" in err

    def test_wrong_schema_version(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(
            CONFIG_TEMPLATE.format(seed=1, out=tmp_path / "x", method="ours").replace(
                "schema_version = 1", "schema_version = 99"
            )
        )
        code, _, err = run(capsys, "train", "--config", str(cfg))
        assert code == 2


class TestEval:
    def test_eval_after_train(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        out = tmp_path / "run"
        cfg.write_text(CONFIG_TEMPLATE.format(seed=7, out=out, method="ours"))
        assert run(capsys, "train", "--config", str(cfg))[0] == 0
        data = tmp_path / "test.jsonl"
        assert run(
            capsys,
            "gen-data", "--problem", "randgraph", "--k", "3",
            "--count", "8", "--seed", "9", "--out", str(data),
        )[0] == 0
        code, stdout, err = run(
            capsys,
            "eval", "--checkpoint", str(out / "model.ckpt"), "--dataset", str(data),
            "--baseline", "ours", "--out", str(tmp_path / "eval"),
        )
        assert code == 0, err
        assert "accuracy%=" in stdout
        eval_csv = (tmp_path / "eval" / "eval.csv").read_text()
        assert eval_csv.count("\n") >= 9  # header comment + fieldnames + 8 rows
        hamming = (tmp_path / "eval" / "hamming.csv").read_text()
        assert "distance,count" in hamming


class TestProject:
    def test_projects_file(self, tmp_path, capsys):
        bits = tmp_path / "bits.txt"
        bits.write_text("00000000\n00011011\n")
        code, stdout, _ = run(capsys, "project", "--bits", str(bits), "--k", "4")
        assert code == 0
        lines = stdout.strip().splitlines()
        assert len(lines) == 2
        assert lines[1] == "00011011"  # valid input is a fixed point


class TestReport:
    def _write_grid(self, path, value, config="cafe"):
        path.write_text(
            f"# seed=1 config={config}\nL,H,ours,diag,pure\n3,32,{value},1.0,2.0\n"
        )

    def test_single_run_zero_std(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        self._write_grid(a, 4.0)
        out = tmp_path / "summary.csv"
        code, _, _ = run(capsys, "report", str(a), "--out", str(out))
        assert code == 0
        rows = out.read_text().strip().splitlines()
        assert rows[-1].split(",")[2] == "4"
        assert rows[-1].split(",")[5] == "0"

    def test_hand_made_mean_and_population_std(self, tmp_path, capsys):
        paths = []
        for i, v in enumerate((2.0, 4.0, 6.0)):
            p = tmp_path / f"r{i}.csv"
            self._write_grid(p, v)
            paths.append(str(p))
        out = tmp_path / "summary.csv"
        code, _, _ = run(capsys, "report", *paths, "--out", str(out))
        assert code == 0
        last = out.read_text().strip().splitlines()[-1].split(",")
        assert float(last[2]) == 4.0  # mean
        assert float(last[5]) == 2.0  # population std

    def test_mixed_hashes_refused_without_force(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self._write_grid(a, 2.0, config="cafe")
        self._write_grid(b, 4.0, config="beef")
        out = tmp_path / "s.csv"
        code, _, err = run(capsys, "report", str(a), str(b), "--out", str(out))
        assert code == 2
        assert "mixed" in err
        code, _, _ = run(capsys, "report", str(a), str(b), "--out", str(out), "--force")
        assert code == 0


class TestGrid:
    def test_single_cell_grid(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        out = tmp_path / "run"
        cfg.write_text(CONFIG_TEMPLATE.format(seed=8, out=out, method="ours"))
        code, _, err = run(capsys, "grid", "--config", str(cfg), "--cells", "2,8")
        assert code == 0, err
        grid = (out / "grid.csv").read_text().strip().splitlines()
        assert grid[1] == "L,H,ours,diag,pure"
        assert len(grid) == 3
        assert grid[2].split(",")[:2] == ["2", "8"]

    def test_rerun_identical(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        out = tmp_path / "run"
        cfg.write_text(CONFIG_TEMPLATE.format(seed=9, out=out, method="ours"))
        assert run(capsys, "grid", "--config", str(cfg), "--cells", "2,8")[0] == 0
        first = (out / "grid.csv").read_text()
        assert run(capsys, "grid", "--config", str(cfg), "--cells", "2,8")[0] == 0
        assert (out / "grid.csv").read_text() == first


class TestHelpAndErrors:
    def test_help_exits_zero(self, capsys):
        code, *_ = run(capsys, "--help")
        assert code == 0

    def test_unknown_flag_usage_error(self, capsys):
        code, *_ = run(capsys, "solve", "--nonsense")
        assert code == 2

    def test_hash_is_stable(self):
        assert hash_config({"a": 1, "b": 2}) == hash_config({"b": 2, "a": 1})
