import json

import numpy as np
import pytest

from sdjls import make_model, save_model
from sdjls.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out)


@pytest.fixture()
def unstable_scalar_file(tmp_path):
    model = make_model([np.array([[1.0]])], [np.zeros((1, 1))], [], np.array([1.0]))
    path = tmp_path / "unstable.json"
    save_model(model, path)
    return str(path)


@pytest.fixture()
def constant_state_file(tmp_path):
    model = make_model([np.zeros((2, 2))], [np.zeros((1, 1))], [], np.array([1.0, 0.0]))
    path = tmp_path / "constant.json"
    save_model(model, path)
    return str(path)


class TestValidate:
    def test_valid_model_exits_zero(self, capsys, models_dir):
        code, report = run_cli(capsys, "validate", str(models_dir / "two_mode_autonomous.json"))
        assert code == 0
        assert report["outcome"]["valid"] is True
        assert report["command"] == "validate"

    def test_bad_generator_names_row(self, capsys, tmp_path):
        doc = {
            "state_dim": 2,
            "input_dim": 0,
            "modes": [{"A": [[0.0, 0.0], [0.0, 0.0]]}, {"A": [[0.0, 0.0], [0.0, 0.0]]}],
            "partition": {"thresholds": []},
            "rates": [[[-1.0, 2.0], [1.0, -1.0]]],
            "x0": [0.0, 0.0],
            "mode0": 1,
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        code, report = run_cli(capsys, "validate", str(path))
        assert code == 2
        kinds = [v["kind"] for v in report["outcome"]["violations"]]
        assert "GeneratorRowSum" in kinds
        rows = [v["details"]["row"] for v in report["outcome"]["violations"]
                if v["kind"] == "GeneratorRowSum"]
        assert rows == [1]

    def test_missing_file_is_io_error(self, capsys, tmp_path):
        code, report = run_cli(capsys, "validate", str(tmp_path / "nope.json"))
        assert code == 1
        assert "error" in report["outcome"]


class TestAnalyze:
    def test_benchmark_feasible(self, capsys, models_dir, tmp_path):
        report_path = tmp_path / "report.json"
        code, report = run_cli(
            capsys, "analyze", str(models_dir / "two_mode_autonomous.json"),
            "--seed", "0", "--report", str(report_path),
        )
        assert code == 0
        assert report["outcome"]["verdict"] == "feasible"
        assert report["outcome"]["min_P_eig"] > 0
        on_disk = json.loads(report_path.read_text())
        assert on_disk == report

    def test_undetermined_exit_code(self, capsys, unstable_scalar_file):
        code, report = run_cli(
            capsys, "analyze", unstable_scalar_file, "--seed", "0", "--max-iters", "2000"
        )
        assert code == 3
        assert report["outcome"]["verdict"] == "undetermined"

    def test_zero_eps_is_usage_error(self, capsys, models_dir):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", str(models_dir / "two_mode_autonomous.json"), "--eps", "0"])
        assert exc.value.code == 2

    def test_options_echoed(self, capsys, models_dir):
        code, report = run_cli(
            capsys, "analyze", str(models_dir / "two_mode_autonomous.json"),
            "--seed", "42", "--eps", "1e-5", "--max-iters", "50000",
        )
        assert code == 0
        assert report["seed"] == 42
        assert report["options"]["eps"] == 1e-5
        assert report["options"]["max_iters"] == 50000


class TestSynthesize:
    def test_benchmark_writes_verified_gains(self, capsys, models_dir, tmp_path):
        gains_path = tmp_path / "gains.json"
        code, report = run_cli(
            capsys, "synthesize", str(models_dir / "two_mode_controlled.json"),
            "--seed", "0", "--out", str(gains_path),
        )
        assert code == 0
        assert report["outcome"]["verdict"] == "feasible"
        assert report["outcome"]["verified"] is True
        doc = json.loads(gains_path.read_text())
        assert set(doc) == {"K", "X", "Y", "closed_loop", "verified"}
        assert doc["verified"] is True
        assert doc["closed_loop"]["verdict"] == "feasible"
        assert len(doc["K"]) == 2

    def test_autonomous_model_is_usage_error(self, capsys, models_dir):
        code, report = run_cli(
            capsys, "synthesize", str(models_dir / "two_mode_autonomous.json"), "--seed", "0"
        )
        assert code == 2
        assert "error" in report["outcome"]

    def test_tiny_budget_undetermined(self, capsys, models_dir):
        code, report = run_cli(
            capsys, "synthesize", str(models_dir / "two_mode_controlled.json"),
            "--seed", "0", "--max-iters", "10",
        )
        assert code == 3
        assert report["outcome"]["verdict"] == "undetermined"


class TestSimulate:
    def test_writes_csv_pair(self, capsys, models_dir, tmp_path):
        code, report = run_cli(
            capsys, "simulate", str(models_dir / "two_mode_autonomous.json"),
            "--t-final", "5", "--paths", "1", "--seed", "7",
            "--out-dir", str(tmp_path / "run"),
        )
        assert code == 0
        files = report["outcome"]["paths_written"]
        assert len(files) == 1
        traj = (tmp_path / "run" / "traj_0000.csv")
        events = (tmp_path / "run" / "events_0000.csv")
        assert traj.exists() and events.exists()
        assert traj.read_text().splitlines()[0] == "t,x1,x2,mode,region"

    def test_zero_paths_is_usage_error(self, models_dir):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", str(models_dir / "two_mode_autonomous.json"),
                  "--t-final", "5", "--paths", "0"])
        assert exc.value.code == 2

    def test_same_seed_byte_identical(self, capsys, models_dir, tmp_path):
        for d in ("a", "b"):
            run_cli(
                capsys, "simulate", str(models_dir / "two_mode_autonomous.json"),
                "--t-final", "5", "--paths", "2", "--seed", "99",
                "--out-dir", str(tmp_path / d),
            )
        for name in ("traj_0000.csv", "events_0000.csv", "traj_0001.csv", "events_0001.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_generated_seed_is_reported(self, capsys, models_dir, tmp_path):
        code, report = run_cli(
            capsys, "simulate", str(models_dir / "two_mode_autonomous.json"),
            "--t-final", "1", "--paths", "1", "--out-dir", str(tmp_path / "x"),
        )
        assert code == 0
        assert isinstance(report["seed"], int)


class TestEnergy:
    def test_constant_state_exact(self, capsys, constant_state_file):
        code, report = run_cli(
            capsys, "energy", constant_state_file,
            "--t-final", "10", "--paths", "4", "--seed", "1",
        )
        assert code == 0
        assert report["outcome"]["mean"] == 10.0
        assert report["outcome"]["std_error"] == 0.0
        assert report["outcome"]["divergent_paths"] == 0

    def test_report_round_trips_options(self, capsys, models_dir):
        code, report = run_cli(
            capsys, "energy", str(models_dir / "two_mode_autonomous.json"),
            "--t-final", "2", "--paths", "8", "--seed", "5", "--threads", "2",
        )
        assert code == 0
        assert report["options"] == {"t_final": 2.0, "paths": 8, "gains": None, "threads": 2}
        assert report["outcome"]["mean"] > 0

    def test_open_loop_divergence_reported(self, capsys, models_dir):
        code, report = run_cli(
            capsys, "energy", str(models_dir / "two_mode_controlled.json"),
            "--t-final", "400", "--paths", "6", "--seed", "3",
        )
        assert code == 0
        assert report["outcome"]["divergent_paths"] > 0


class TestGainsFlow:
    def test_simulate_with_gains_file(self, capsys, models_dir, tmp_path):
        gains_path = tmp_path / "gains.json"
        run_cli(
            capsys, "synthesize", str(models_dir / "two_mode_controlled.json"),
            "--seed", "0", "--out", str(gains_path),
        )
        code, report = run_cli(
            capsys, "energy", str(models_dir / "two_mode_controlled.json"),
            "--t-final", "20", "--paths", "16", "--seed", "2",
            "--gains", str(gains_path),
        )
        assert code == 0
        assert report["outcome"]["divergent_paths"] == 0
        assert report["outcome"]["mean"] > 0
