import json

import numpy as np
import pytest

from cirsense.dataset import FeatureOptions, GridSpec, SplitSpec, generate_campaign
from cirsense.evaluation import (
    EvalReport,
    FingerprintBaseline,
    LinkCombo,
    ModelSettings,
    accuracy,
    all_combos,
    baseline_predict,
    cdf_svg,
    check_split_hygiene,
    detection_accuracy,
    emit_report,
    error_cdf,
    load_baseline,
    load_reports_json,
    position_error_stats,
    reports_csv,
    run_experiment_suite,
    save_baseline,
)
from cirsense.gbt import BoostConfig
from cirsense.nn import TrainConfig
from cirsense.sim import SweepConfig, default_scene


class Constant:
    def __init__(self, value):
        self.value = value

    def predict(self, x):
        return np.broadcast_to(np.asarray(self.value, dtype=float), (len(x),) + np.shape(self.value)).copy()


FAST = ModelSettings(
    train=TrainConfig(epochs=3, batch_size=8),
    cnn_blocks=1,
    cnn_kernels=4,
    cnn_hidden_units=8,
    boost=BoostConfig(n_estimators=5, max_depth=2),
    boost_grid={"n_estimators": (2, 4), "max_depth": (2,), "learning_rate": (0.3,)},
)


@pytest.fixture(scope="module")
def campaign():
    grid = GridSpec(4, 4, 0.2, pinned_points=None)
    samples = generate_campaign(grid, default_scene(0), SweepConfig(num_points=128, noise_std=0.05), 1, FeatureOptions(k_taps=32))
    return grid, samples, SplitSpec.random(grid.size, 4, 0.25, seed=2)


class TestCombos:
    def test_names(self):
        assert [c.name for c in all_combos()] == ["N2", "N3", "N4", "N23", "N24", "N34", "N234"]

    def test_parse_and_sort(self):
        assert LinkCombo((4, 2)).name == "N24"
        assert LinkCombo.parse("N24") == LinkCombo((2, 4))

    def test_invalid(self):
        for bad in ("24", "N", "Nx"):
            with pytest.raises(ValueError):
                LinkCombo.parse(bad)
        with pytest.raises(ValueError):
            LinkCombo((2, 2))


class TestMetrics:
    def test_accuracy_nine_of_ten(self):
        assert accuracy([1] * 9 + [0], [1] * 10) == 0.9

    def test_constant_target_on_balanced(self):
        labels = np.array([0, 1] * 5)
        assert detection_accuracy(Constant(1.0), np.zeros((10, 1)), labels) == 0.5

    def test_error_stats_example(self):
        truth = np.zeros((5, 2))
        pred = np.column_stack([np.arange(5.0), np.zeros(5)])
        mean, cdf = position_error_stats(_Fixed(pred), np.zeros((5, 1)), truth)
        assert mean == 2.0
        assert dict(cdf)[2.0] == 0.6

    def test_perfect_predictor(self):
        truth = np.random.default_rng(0).random((6, 2))
        mean, cdf = position_error_stats(_Fixed(truth), np.zeros((6, 1)), truth)
        assert mean == 0.0
        assert all(e == 0.0 for e, _ in cdf) and cdf[-1][1] == 1.0

    def test_cdf_monotone_ends_at_one(self):
        cdf = error_cdf(np.random.default_rng(1).random(50))
        e, c = zip(*cdf)
        assert list(e) == sorted(e) and list(c) == sorted(c) and c[-1] == 1.0


class _Fixed:
    def __init__(self, out):
        self.out = out

    def predict(self, x):
        return self.out


class TestBaseline:
    def test_exact_match(self):
        x = np.random.default_rng(0).random((10, 3, 8))
        pos = np.random.default_rng(1).random((10, 2))
        assert baseline_predict(x, pos, np.arange(10), x[4]) == tuple(pos[4])

    def test_tie_lowest_grid_index(self):
        x = np.array([[1.0, 0.0], [-1.0, 0.0]])
        pos = np.array([[5.0, 5.0], [1.0, 1.0]])
        assert baseline_predict(x, pos, np.array([9, 3]), np.zeros(2)) == (1.0, 1.0)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        x, pos = rng.normal(size=(50, 2, 16)), rng.random((50, 2))
        grid = rng.permutation(50)
        queries = rng.normal(size=(20, 2, 16))
        model = FingerprintBaseline.fit(x, pos, grid)
        pred = model.predict(queries)
        flat = x.reshape(50, -1)
        for q, p in zip(queries.reshape(20, -1), pred):
            best, best_d = None, None
            for i in range(50):
                d = sum((a - b) ** 2 for a, b in zip(flat[i], q))
                if best_d is None or d < best_d or (d == best_d and grid[i] < grid[best]):
                    best, best_d = i, d
            np.testing.assert_array_equal(p, pos[best])

    def test_memorized_data_zero_error(self):
        rng = np.random.default_rng(4)
        x, pos = rng.normal(size=(30, 3, 8)), rng.random((30, 2))
        mean, _ = position_error_stats(FingerprintBaseline.fit(x, pos, np.arange(30)), x, pos)
        assert mean == 0.0

    def test_layout_mismatch(self):
        model = FingerprintBaseline.fit(np.zeros((2, 4)), np.zeros((2, 2)), np.arange(2))
        with pytest.raises(ValueError):
            model.predict(np.zeros((1, 5)))

    def test_checkpoint(self, tmp_path):
        rng = np.random.default_rng(5)
        model = FingerprintBaseline.fit(rng.normal(size=(7, 6)), rng.random((7, 2)), rng.permutation(7))
        save_baseline(model, tmp_path / "b.base", {"combo": "N2"})
        back, meta = load_baseline(tmp_path / "b.base", with_metadata=True)
        assert meta == {"combo": "N2"}
        q = rng.normal(size=(5, 6))
        np.testing.assert_array_equal(back.predict(q), model.predict(q))


class TestSuite:
    def test_one_report_per_cell(self, campaign):
        _, samples, split = campaign
        reports = run_experiment_suite(samples, ["baseline"], all_combos(), split, "detect", FAST)
        assert [r.combo.name for r in reports] == [c.name for c in all_combos()]
        assert all(r.error is None and 0 <= r.accuracy <= 1 for r in reports)

    def test_every_model_positions(self, campaign):
        _, samples, split = campaign
        reports = run_experiment_suite(samples, ["typea", "typeb", "typec", "baseline"], [LinkCombo((2, 3, 4))], split, "position", FAST)
        for r in reports:
            assert r.error is None
            assert len(r.error_cdf) == len(split.test_bins)
            assert r.error_cdf[-1][1] == 1.0
            check_split_hygiene(r)
        assert "grid_search" in reports[2].details

    def test_failure_is_annotated(self, campaign):
        _, samples, split = campaign
        bad = ModelSettings(train=TrainConfig(epochs=1, batch_size=8), cnn_blocks=9, cnn_kernels=2, cnn_hidden_units=2)
        reports = run_experiment_suite(samples, ["typea", "baseline"], [LinkCombo((2,))], split, "position", bad)
        assert reports[0].error and "too short" in reports[0].error
        assert reports[1].error is None

    def test_link_restriction(self, campaign):
        _, samples, split = campaign
        perturbed = []
        for s in samples:
            v = s.features.values.copy()
            v[1] += 10.0  # link 3
            perturbed.append(type(s)(type(s.features)(v, s.features.link_ids, 1), s.hypothesis, s.bin_index, s.grid_index, s.position_m, s.seed))
        for model in ("baseline", "typec", "typea"):
            a = run_experiment_suite(samples, [model], [LinkCombo((2,))], split, "position", FAST)[0]
            b = run_experiment_suite(perturbed, [model], [LinkCombo((2,))], split, "position", FAST)[0]
            assert a.mean_error_m == b.mean_error_m

    def test_split_hygiene_detects_leak(self):
        r = EvalReport("position", "typea", LinkCombo((2,)), train_bins=(1, 2), val_bins=(3,), test_bins=(3, 4))
        with pytest.raises(AssertionError):
            check_split_hygiene(r)

    def test_deterministic(self, campaign):
        _, samples, split = campaign
        a = run_experiment_suite(samples, ["typea", "typec"], [LinkCombo((2, 4))], split, "position", FAST)
        b = run_experiment_suite(samples, ["typea", "typec"], [LinkCombo((2, 4))], split, "position", FAST)
        assert reports_csv(a) == reports_csv(b)


def sample_reports():
    return [
        EvalReport("detect", "typea", LinkCombo((2,)), accuracy=0.95),
        EvalReport("position", "typeb", LinkCombo((2, 3, 4)), mean_error_m=0.5, error_cdf=[(0.25, 0.5), (0.75, 1.0)], test_bins=(1, 2)),
    ]


class TestReports:
    def test_header_only_csv(self, tmp_path):
        emit_report([], "csv", tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == "model,combo,task,accuracy,mean_error_m\n"

    def test_csv_rows(self):
        assert reports_csv(sample_reports()).splitlines()[1:] == ["typea,N2,detect,0.95,", "typeb,N234,position,,0.5"]

    def test_json_round_trip(self, tmp_path):
        emit_report(sample_reports(), "structured-text", tmp_path / "r.json")
        back = load_reports_json((tmp_path / "r.json").read_text())
        assert [r.to_dict() for r in back] == [r.to_dict() for r in sample_reports()]
        assert json.loads((tmp_path / "r.json").read_text())[1]["combo"] == "N234"

    def test_svg_polyline_points(self):
        svg = cdf_svg(sample_reports())
        assert svg.count("<polyline") == 1
        points = svg.split('points="')[1].split('"')[0].split()
        assert len(points) == 2

    def test_byte_identical(self, tmp_path):
        for fmt in ("csv", "json", "svg-plot"):
            emit_report(sample_reports(), fmt, tmp_path / "a")
            emit_report(sample_reports(), fmt, tmp_path / "b")
            assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], "pdf", tmp_path / "x")
