import json

import pytest

from hiersense.cli import main

CONFIG = """
topology: {kind: grid, n_cells: 16, area: [400, 400], n_blockages: 1}
occupancy: {nu1: 0.005, nu0: 0.095}
population: {mode: dense}
schemes:
  - {name: ibt, kind: ibt}
  - {name: unc, kind: uncoordinated}
experiment:
  frames: 15
  trials: 1
  master_seed: 3
  lambda_grid: [0.01, 0.1]
  ptx_grid: [0.02]
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(CONFIG)
    return str(path)


class TestBuildTree:
    def test_writes_tree_and_stats(self, tmp_path, config_path, capsys):
        out = tmp_path / "tree.json"
        assert main(["build-tree", "--config", config_path, "-o", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["n_cells"] == 16
        assert data["depth"] == 4
        stdout = capsys.readouterr().out
        assert "depth: 4" in stdout
        assert "cost per cell" in stdout

    def test_identical_bytes_across_runs(self, tmp_path, config_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert main(["build-tree", "--config", config_path,
                         "-o", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_budget_override_gives_flat_forest(self, tmp_path, config_path,
                                               capsys):
        out = tmp_path / "tree.json"
        code = main(["build-tree", "--config", config_path, "-o", str(out),
                     "-D", "schemes=[{name: ibt, kind: ibt, c_max: 1.0e-9}]"])
        assert code == 0
        assert json.loads(out.read_text())["depth"] == 0
        assert "depth: 0" in capsys.readouterr().out


class TestSimulate:
    def test_per_frame_csv(self, tmp_path, config_path):
        out = tmp_path / "frames.csv"
        assert main(["simulate", "--config", config_path, "-o", str(out),
                     "--scheme", "ibt", "--grid-value", "0.05"]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "frame,su_throughput,inr_db,utility,mean_traffic"
        assert len(lines) == 16

    def test_unknown_scheme_fails(self, tmp_path, config_path):
        out = tmp_path / "frames.csv"
        assert main(["simulate", "--config", config_path, "-o", str(out),
                     "--scheme", "nope"]) == 2

    def test_trace_dump(self, tmp_path, config_path):
        out = tmp_path / "frames.csv"
        trace = tmp_path / "trace.csv"
        assert main(["simulate", "--config", config_path, "-o", str(out),
                     "--scheme", "ibt", "--trace", str(trace)]) == 0
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "frame,level,head,aggregate"
        # 16 cells + 8 + 4 + 2 + 1 nodes per frame, 15 frames
        assert len(lines) == 1 + 15 * 31


class TestSweep:
    def test_sweep_outputs(self, tmp_path, config_path):
        out = tmp_path / "rows.csv"
        assert main(["sweep", "--config", config_path, "-o", str(out)]) == 0
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 1 + 2 + 1  # header + 2 ibt points + 1 unc point
        summary = tmp_path / "rows_summary.csv"
        assert summary.exists()

    def test_byte_identical_reruns(self, tmp_path, config_path):
        blobs = []
        for name in ("r1.csv", "r2.csv"):
            out = tmp_path / name
            assert main(["sweep", "--config", config_path, "-o", str(out)]) == 0
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_invalid_config_exit_code(self, tmp_path, config_path):
        out = tmp_path / "rows.csv"
        code = main(["sweep", "--config", config_path, "-o", str(out),
                     "-D", "experiment.frames=0"])
        assert code == 2

    def test_shipped_example_config_loads(self, tmp_path):
        out = tmp_path / "rows.csv"
        code = main(["sweep", "--config", "configs/sweep_small.yaml",
                     "-o", str(out),
                     "-D", "experiment.trials=1",
                     "-D", "experiment.frames=5",
                     "-D", "experiment.lambda_grid=[0.05]",
                     "-D", "experiment.ptx_grid=[0.01]"])
        assert code == 0


class TestValidate:
    def test_default_suite_passes(self, capsys):
        assert main(["validate"]) == 0
        out = capsys.readouterr().out
        assert "belief-oracle" in out and "FAIL" not in out

    def test_corrupted_memory_reported(self, config_path, capsys):
        code = main(["validate", "--config", config_path,
                     "-D", "occupancy.mu=0.5"])
        assert code == 1
        out = capsys.readouterr().out
        assert "FAIL" in out and "config" in out

    def test_with_valid_config(self, config_path):
        assert main(["validate", "--config", config_path]) == 0
