import json

import pytest
import yaml

from cirsense.cli import main
from cirsense.config import DEFAULT_PROTOCOL, RunConfig, config_from_dict, load_config
from cirsense.dataset import load_dataset
from cirsense.sim import ConfigError

TINY = {
    "seed": 3,
    "sweep": {"num_points": 128, "noise_std": 0.05},
    "grid": {"n_cols": 4, "n_rows": 4, "pinned_points": None},
    "split": {"n_test": 4, "val_fraction": 0.3},
    "features": {"k_taps": 32},
    "models": {
        "train": {"epochs": 2, "batch_size": 8},
        "cnn_blocks": 1,
        "cnn_kernels": 4,
        "cnn_hidden_units": 8,
        "boost_grid": {"n_estimators": [2, 3], "max_depth": [2], "learning_rate": [0.3]},
    },
    "protocol": [
        {"task": "detect", "models": ["typea"], "combos": ["N2", "N234"]},
        {"task": "position", "models": ["typea", "typeb", "typec", "baseline"], "combos": ["N234"]},
    ],
}


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg == RunConfig()
        assert cfg.grid.size == 462 and cfg.protocol == DEFAULT_PROTOCOL
        assert len(cfg.build_split().test_bins) == 125

    def test_all_problems_listed(self):
        with pytest.raises(ConfigError) as err:
            config_from_dict(
                {
                    "grid": {"n_cols": 20},
                    "sweep": {"num_points": 1},
                    "split": {"val_fraction": 1.5},
                    "models": {"train": {"epochs": 0}, "boost": {"max_depth": 0}},
                    "protocol": [{"task": "dance", "models": ["typez"], "combos": ["N9"]}],
                    "colour": "red",
                }
            )
        text = "\n".join(err.value.problems)
        for needle in ("462", "num_points", "val_fraction", "epochs", "max_depth", "dance", "typez", "N9", "colour"):
            assert needle in text

    def test_overrides_win(self, tiny):
        cfg = load_config(tiny, {"seed": 11, "split.n_test": 5})
        assert cfg.seed == 11 and cfg.split.n_test == 5 and cfg.sweep.num_points == 128

    def test_snapshot_round_trip(self, tiny):
        cfg = load_config(tiny)
        assert config_from_dict(json.loads(cfg.snapshot())) == cfg

    def test_seeds_follow_global(self):
        a, b = load_config(None, {"seed": 1}), load_config(None, {"seed": 2})
        assert a.build_scene() != b.build_scene()
        assert a.build_split().test_bins != b.build_split().test_bins


class TestCommands:
    def test_simulate_default_924(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path)]) == 0
        samples, header = load_dataset(tmp_path / "dataset.cirs", with_header=True)
        assert len(samples) == 924
        assert sum(s.is_target for s in samples) == 462
        assert header["run_config"] == json.loads((tmp_path / "config.json").read_text())

    def test_invalid_grid(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("grid: {n_cols: 20, n_rows: 22}\nsplit: {n_test: 0}\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        err = error_line(capsys)
        assert err["error"] == "config" and err["exit_code"] == 2
        assert "462" in err["message"] and "n_test" in err["message"]

    def test_usage_errors(self, tiny, capsys):
        assert main(["reproduce", "--config", str(tiny), "--models", "typez"]) == 1
        assert error_line(capsys)["error"] == "usage"
        assert main(["frobnicate"]) == 1
        error_line(capsys)
        assert main(["eval", "--data", "x", "--links", "2", "--combos", "N2"]) == 1
        error_line(capsys)

    def test_missing_dataset(self, tiny, tmp_path, capsys):
        assert main(["eval", "--config", str(tiny), "--data", str(tmp_path / "none.cirs"), "--out", str(tmp_path)]) == 2
        assert error_line(capsys)["error"] == "config"

    def test_corrupt_dataset(self, tiny, tmp_path, capsys):
        bad = tmp_path / "bad.cirs"
        bad.write_bytes(b"not a dataset")
        assert main(["eval", "--config", str(tiny), "--data", str(bad), "--out", str(tmp_path)]) == 3
        assert error_line(capsys)["error"] == "runtime"

    def test_env_out_dir(self, tiny, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("CIRSENSE_OUT", str(tmp_path / "env"))
        assert main(["simulate", "--config", str(tiny)]) == 0
        assert (tmp_path / "env" / "dataset.cirs").exists()
        assert main(["simulate", "--config", str(tiny), "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "dataset.cirs").exists()

    def test_reproduce_twice_identical(self, tiny, tmp_path, capsys):
        for name in ("a", "b"):
            assert main(["reproduce", "--config", str(tiny), "--seed", "7", "--out", str(tmp_path / name)]) == 0
        for f in ("reports.csv", "reports.json", "position_cdf.svg", "summary.txt", "config.json", "dataset.cirs"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        reports = json.loads((tmp_path / "a" / "reports.json").read_text())
        assert len(reports) == 6
        assert all(r["seeds"]["global"] == 7 and r["config"]["seed"] == 7 for r in reports)

    def test_reproduce_filters(self, tiny, tmp_path, capsys):
        assert main(["reproduce", "--config", str(tiny), "--models", "baseline", "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "reports.csv").read_text().splitlines()
        assert rows[1:] == [rows[1]] and rows[1].startswith("baseline,N234,position")
        assert main(["reproduce", "--config", str(tiny), "--models", "typeb", "--links", "2", "--out", str(tmp_path)]) == 2
        error_line(capsys)

    def test_train_then_eval_checkpoints(self, tiny, tmp_path, capsys):
        assert main(["simulate", "--config", str(tiny), "--out", str(tmp_path)]) == 0
        data = capsys.readouterr().out.strip()
        ckpts = []
        for model in ("typea", "typeb", "typec", "baseline"):
            assert main(["train", "--config", str(tiny), "--data", data, "--model", model, "--links", "2,4", "--out", str(tmp_path)]) == 0
            ckpts += ["--checkpoint", capsys.readouterr().out.strip()]
        assert main(["eval", "--config", str(tiny), "--data", data, "--out", str(tmp_path / "ev"), *ckpts]) == 0
        rows = (tmp_path / "ev" / "reports.csv").read_text().splitlines()[1:]
        assert [r.split(",")[:3] for r in rows] == [[m, "N24", "position"] for m in ("typea", "typeb", "typec", "baseline")]

    def test_eval_trains_cells(self, tiny, tmp_path, capsys):
        assert main(["simulate", "--config", str(tiny), "--out", str(tmp_path)]) == 0
        args = ["eval", "--config", str(tiny), "--data", str(tmp_path / "dataset.cirs"), "--out", str(tmp_path / "ev")]
        assert main(args + ["--models", "typea,baseline", "--combos", "N2,N34", "--task", "detect"]) == 0
        rows = (tmp_path / "ev" / "reports.csv").read_text().splitlines()[1:]
        assert [tuple(r.split(",")[:3]) for r in rows] == [
            ("typea", "N2", "detect"),
            ("typea", "N34", "detect"),
            ("baseline", "N2", "detect"),
            ("baseline", "N34", "detect"),
        ]
