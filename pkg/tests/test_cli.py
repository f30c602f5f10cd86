"""Command-line harness: determinism, report rows, rejection of unsafe grids."""

import csv
import io
import json

import numpy as np

from lpattn.cli import main
from lpattn.tensorio import generate, read_tensor, write_tensor


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def rows_without_wall_time(csv_text):
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    for row in rows:
        row.pop("wall_time")
    return rows


class TestGen:
    def test_deterministic_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.tensor", tmp_path / "b.tensor"
        for out in (a, b):
            code, _, _ = run_cli(
                capsys, "gen", "--shape", "4,8", "--distribution", "gaussian",
                "--seed", "42", "--out", str(out),
            )
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_adversarial_max(self, tmp_path, capsys):
        out = tmp_path / "m.tensor"
        code, _, _ = run_cli(
            capsys, "gen", "--shape", "32,32", "--distribution", "adversarial-max",
            "--magnitude", "1.5", "--out", str(out),
        )
        assert code == 0
        assert np.all(read_tensor(out) == np.float32(1.5))

    def test_uniform_range(self, tmp_path, capsys):
        out = tmp_path / "u.tensor"
        code, _, _ = run_cli(
            capsys, "gen", "--shape", "64,64", "--distribution", "uniform",
            "--low", "0", "--high", "1", "--seed", "1", "--out", str(out),
        )
        assert code == 0
        arr = read_tensor(out)
        assert arr.min() >= 0.0 and arr.max() < 1.0


class TestRun:
    def test_default_config_json_row(self, capsys):
        code, out, _ = run_cli(
            capsys, "run", "--seed", "3",
            "--seq-len", "64", "--head-dim", "32",
        )
        assert code == 0
        row = json.loads(out)
        assert row["p_r"] == 224.0 and row["v_r"] == 4.5 and row["depth"] == 2
        assert row["overflow_events"] == 0
        assert 0.99 <= row["cossim"] <= 1.0
        assert row["mma_invocations"] > 0

    def test_loads_tensor_files(self, tmp_path, capsys):
        for name, seed in (("q", 1), ("k", 2), ("v", 3)):
            arr, meta = generate((2, 64, 32), "gaussian", seed)
            write_tensor(tmp_path / f"{name}.tensor", arr, meta)
        code, out, _ = run_cli(
            capsys, "run",
            "--q", str(tmp_path / "q.tensor"),
            "--k", str(tmp_path / "k.tensor"),
            "--v", str(tmp_path / "v.tensor"),
        )
        assert code == 0
        row = json.loads(out)
        assert row["seq_len"] == 64 and row["head_dim"] == 32 and row["heads"] == 2

    def test_unexpected_overflow_fails(self, tmp_path, capsys):
        arr, _ = generate((1, 64, 32), "adversarial-max", 0, magnitude=1.0)
        for name in ("q", "k", "v"):
            write_tensor(tmp_path / f"{name}.tensor", arr)
        argv = [
            "run",
            "--q", str(tmp_path / "q.tensor"),
            "--k", str(tmp_path / "k.tensor"),
            "--v", str(tmp_path / "v.tensor"),
            "--p-r", "448", "--v-r", "448",
        ]
        code, out, err = run_cli(capsys, *argv, "--expect-overflow")
        assert code == 0
        assert json.loads(out)["overflow_events"] > 0
        # without the waiver the range config itself is rejected
        code, _, err = run_cli(capsys, *argv)
        assert code != 0 and "p_r*v_r" in err

    def test_partial_file_args_rejected(self, capsys):
        code, _, err = run_cli(capsys, "run", "--q", "only_q.tensor")
        assert code != 0 and "together" in err

    def test_seq_len_one(self, capsys):
        code, out, _ = run_cli(
            capsys, "run", "--seed", "5", "--seq-len", "1", "--head-dim", "32",
        )
        assert code == 0
        row = json.loads(out)
        assert row["cossim"] >= 0.99


class TestSweep:
    def test_preset_table2_deterministic(self, tmp_path, capsys):
        csvs = []
        for name in ("s1.csv", "s2.csv"):
            out = tmp_path / name
            code, _, _ = run_cli(
                capsys, "sweep", "--preset", "table2", "--seed", "7",
                "--seq-len", "64", "--head-dim", "32", "--out", str(out),
            )
            assert code == 0
            csvs.append(out.read_text())
        assert rows_without_wall_time(csvs[0]) == rows_without_wall_time(csvs[1])
        rows = rows_without_wall_time(csvs[0])
        assert [(r["p_r"], r["v_r"]) for r in rows] == [
            ("448.0", "2.25"), ("224.0", "4.5"), ("112.0", "9.0"),
        ]
        assert all(r["overflow_events"] == "0" for r in rows)
        cossims = [float(r["cossim"]) for r in rows]
        assert max(cossims) - min(cossims) <= 1e-3

    def test_grid_rejects_unsafe_pair_with_reason(self, tmp_path, capsys):
        spec = {
            "grid": {"p_r": [112, 224], "v_r": [4.5, 9], "depth": 2},
            "input": {"seed": 1, "shape": [1, 64, 32]},
        }
        spec_path = tmp_path / "sweep.json"
        spec_path.write_text(json.dumps(spec))
        code, out, err = run_cli(capsys, "sweep", "--spec", str(spec_path))
        assert code == 0
        rows = rows_without_wall_time(out)
        assert [(r["p_r"], r["v_r"]) for r in rows] == [
            ("112.0", "4.5"), ("112.0", "9.0"), ("224.0", "4.5"),
        ]
        assert "rejected" in err and "p_r*v_r = 2016 > 1023.5" in err

    def test_expect_overflow_pairs_run(self, tmp_path, capsys):
        spec = {
            "pairs": [{"p_r": 448, "v_r": 448, "depth": 1, "expect_overflow": True}],
            "input": {"seed": 2, "shape": [1, 64, 32], "distribution": "adversarial-max",
                      "parameters": {"magnitude": 1.0}},
        }
        spec_path = tmp_path / "sweep.json"
        spec_path.write_text(json.dumps(spec))
        code, out, _ = run_cli(capsys, "sweep", "--spec", str(spec_path))
        assert code == 0
        rows = rows_without_wall_time(out)
        assert len(rows) == 1
        assert int(rows[0]["overflow_events"]) > 0

    def test_empty_grid_outputs_header_only(self, tmp_path, capsys):
        spec = {"grid": {"p_r": [448], "v_r": [448], "depth": 2}}
        spec_path = tmp_path / "sweep.json"
        spec_path.write_text(json.dumps(spec))
        code, out, err = run_cli(capsys, "sweep", "--spec", str(spec_path))
        assert code == 0
        assert rows_without_wall_time(out) == []
        assert "rejected" in err

    def test_requires_preset_or_spec(self, capsys):
        code, _, err = run_cli(capsys, "sweep")
        assert code != 0

    def test_repetitions(self, tmp_path, capsys):
        out = tmp_path / "rep.csv"
        code, _, _ = run_cli(
            capsys, "sweep", "--preset", "table2", "--seed", "1",
            "--repetitions", "2", "--seq-len", "64", "--head-dim", "32",
            "--out", str(out),
        )
        assert code == 0
        rows = rows_without_wall_time(out.read_text())
        assert len(rows) == 6
        assert {r["repetition"] for r in rows} == {"0", "1"}


class TestCodecTable:
    def test_256_rows(self, capsys):
        code, out, _ = run_cli(capsys, "codec-table")
        assert code == 0
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["code", "value"]
        assert len(rows) == 257

    def test_key_rows(self, capsys):
        _, out, _ = run_cli(capsys, "codec-table")
        table = {r[0]: r[1] for r in list(csv.reader(io.StringIO(out)))[1:]}
        assert table["0x00"] == "0.0"
        assert table["0x7E"] == "448.0"
        assert table["0x7F"] == "NaN"
        assert table["0xFE"] == "-448.0"

    def test_writes_file(self, tmp_path, capsys):
        out = tmp_path / "codec.csv"
        code, _, _ = run_cli(capsys, "codec-table", "--out", str(out))
        assert code == 0
        assert out.read_text().count("\n") == 257
