import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cirsense._container import FormatError
from cirsense.dataset import (
    GridSpec,
    FeatureOptions,
    SensingSample,
    SplitSpec,
    export_sweep_trace,
    generate_campaign,
    grid_to_position,
    import_sweep_traces,
    load_dataset,
    make_sample,
    position_to_grid,
    save_dataset,
    split_campaign,
    stack_features,
)
from cirsense.dsp import FeatureVector
from cirsense.sim import ConfigError, FrequencySweep, SweepConfig, default_scene, synthesize_scene_sweeps, Target

SMALL_CFG = SweepConfig(num_points=64, noise_std=0.05)
SMALL_FEATURES = FeatureOptions(k_taps=32)


@pytest.fixture(scope="module")
def small_campaign():
    grid = GridSpec(4, 3, 0.2, pinned_points=None)
    return grid, generate_campaign(grid, default_scene(0), SMALL_CFG, 9, SMALL_FEATURES)


class TestGrid:
    def test_first_cell(self):
        assert grid_to_position(GridSpec(), 0) == pytest.approx((0.1, 0.1))

    def test_second_row(self):
        assert grid_to_position(GridSpec(), 21) == pytest.approx((0.1, 0.3))

    def test_round_trip(self):
        grid = GridSpec()
        assert all(position_to_grid(grid, grid_to_position(grid, i)) == i for i in range(grid.size))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            grid_to_position(GridSpec(), 462)
        with pytest.raises(IndexError):
            position_to_grid(GridSpec(), (-0.1, 0.1))

    def test_pinned_count(self):
        with pytest.raises(ConfigError, match="462"):
            GridSpec(20, 22)
        assert GridSpec(20, 22, pinned_points=None).size == 440

    def test_origin(self):
        assert grid_to_position(GridSpec(2, 2, 1.0, (5.0, -1.0), None), 3) == pytest.approx((6.5, 0.5))


class TestCampaign:
    def test_balance_and_order(self, small_campaign):
        grid, samples = small_campaign
        assert len(samples) == 2 * grid.size
        assert sum(s.is_target for s in samples) == grid.size
        assert [(s.bin_index, s.hypothesis) for s in samples[:4]] == [(0, "null"), (0, "target"), (1, "null"), (1, "target")]

    def test_labels(self, small_campaign):
        grid, samples = small_campaign
        for s in samples:
            if s.is_target:
                assert s.grid_index == s.bin_index
                assert s.position_m == grid_to_position(grid, s.grid_index)
            else:
                assert s.grid_index is None and s.position_m is None
            assert s.link_ids == (2, 3, 4)
            assert s.features.values.shape == (3, 32)

    def test_independent_noise(self, small_campaign):
        _, samples = small_campaign
        assert len({s.seed for s in samples}) == len(samples)

    def test_deterministic(self, small_campaign):
        grid, samples = small_campaign
        again = generate_campaign(grid, default_scene(0), SMALL_CFG, 9, SMALL_FEATURES)
        assert all(a.features.values.tobytes() == b.features.values.tobytes() for a, b in zip(samples, again))

    def test_null_samples_share_geometry(self):
        grid = GridSpec()
        a = make_sample(grid, default_scene(0), SMALL_CFG, 3, "null", 1234, SMALL_FEATURES)
        b = make_sample(grid, default_scene(0), SMALL_CFG, 300, "null", 1234, SMALL_FEATURES)
        np.testing.assert_array_equal(a.features.values, b.features.values)
        t = make_sample(grid, default_scene(0), SMALL_CFG, 3, "target", 1234, SMALL_FEATURES)
        assert not np.array_equal(a.features.values, t.features.values)

    def test_augment(self):
        grid = GridSpec(2, 1, 0.2, pinned_points=None)
        samples = generate_campaign(grid, default_scene(0), SMALL_CFG, 0, FeatureOptions(k_taps=16, augment=3))
        assert len(samples) == 12
        assert len({s.seed for s in samples}) == 12

    def test_template_with_target_rejected(self):
        with pytest.raises(ValueError):
            generate_campaign(GridSpec(), default_scene(0).with_target(Target((1, 1))), SMALL_CFG, 0)

    def test_sample_invariants(self):
        fv = FeatureVector(np.zeros((1, 2)), (2,), 1)
        with pytest.raises(ValueError):
            SensingSample(fv, "target", 0)
        with pytest.raises(ValueError):
            SensingSample(fv, "null", 0, 0, (0.1, 0.1))
        with pytest.raises(ValueError):
            SensingSample(fv, "maybe", 0)


class TestSplit:
    def test_deployment_sizes(self):
        spec = SplitSpec.random(462, 125, 0.3, seed=0)
        assert len(spec.train_bins) == 337
        assert len(spec.test_bins) == 125
        assert len(spec.val_bins()) == math.floor(0.3 * 337) == 101

    def test_no_leakage(self, small_campaign):
        grid, samples = small_campaign
        splits = split_campaign(samples, SplitSpec.random(grid.size, 4, 0.25, seed=1))
        train = {s.bin_index for s in splits.train + splits.val}
        test = {s.bin_index for s in splits.test}
        assert not train & test
        assert {s.bin_index for s in splits.val} == set(splits.val_bins)
        # both hypotheses of a bin travel together
        for part in (splits.train, splits.val, splits.test):
            bins = [s.bin_index for s in part]
            assert all(bins.count(b) == 2 for b in set(bins))

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(frozenset({1, 2}), frozenset({2, 3}))

    def test_uncovered_bin_rejected(self, small_campaign):
        _, samples = small_campaign
        with pytest.raises(ValueError):
            split_campaign(samples, SplitSpec(frozenset({0, 1}), frozenset({2})))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 500), st.integers(0, 2**31), st.floats(0, 0.9))
    def test_disjoint_property(self, n_bins, seed, val_fraction):
        n_test = max(1, n_bins // 4)
        spec = SplitSpec.random(n_bins, n_test, val_fraction, seed)
        assert not spec.train_bins & spec.test_bins
        assert len(spec.train_bins) + len(spec.test_bins) == n_bins
        assert spec.val_bins() <= spec.train_bins

    def test_stack_features(self, small_campaign):
        _, samples = small_campaign
        x = stack_features(samples[:5], [4])
        assert x.shape == (5, 1, 32)
        np.testing.assert_array_equal(x[:, 0], [s.features.values[2] for s in samples[:5]])


class TestPersistence:
    def test_round_trip(self, small_campaign, tmp_path):
        _, samples = small_campaign
        path = tmp_path / "data.cirs"
        save_dataset(samples, path, {"seed": 9})
        loaded, header = load_dataset(path, with_header=True)
        assert header["seed"] == 9 and header["n_samples"] == len(samples)
        for a, b in zip(samples, loaded):
            assert a.features.values.tobytes() == b.features.values.tobytes()
            assert (a.hypothesis, a.bin_index, a.grid_index, a.position_m, a.seed, a.link_ids) == (
                b.hypothesis, b.bin_index, b.grid_index, b.position_m, b.seed, b.link_ids
            )

    def test_empty(self, tmp_path):
        save_dataset([], tmp_path / "empty.cirs")
        assert load_dataset(tmp_path / "empty.cirs") == []

    def test_corrupted_header(self, small_campaign, tmp_path):
        _, samples = small_campaign
        path = tmp_path / "data.cirs"
        save_dataset(samples[:2], path)
        blob = bytearray(path.read_bytes())
        blob[20] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="checksum"):
            load_dataset(path)

    def test_bad_magic_version_truncation(self, small_campaign, tmp_path):
        _, samples = small_campaign
        path = tmp_path / "data.cirs"
        save_dataset(samples[:2], path)
        blob = path.read_bytes()
        (tmp_path / "a").write_bytes(b"XXXXXXXX" + blob[8:])
        (tmp_path / "b").write_bytes(blob[:8] + b"\x09\x00" + blob[10:])
        (tmp_path / "c").write_bytes(blob[:-10])
        with pytest.raises(FormatError, match="magic"):
            load_dataset(tmp_path / "a")
        with pytest.raises(FormatError, match="version"):
            load_dataset(tmp_path / "b")
        with pytest.raises(FormatError, match="truncated"):
            load_dataset(tmp_path / "c")


class TestTraces:
    def test_round_trip(self, tmp_path):
        sweeps = synthesize_scene_sweeps(default_scene(0), SMALL_CFG)
        paths = []
        for s in sweeps:
            paths.append(tmp_path / f"link{s.link_id}.csv")
            export_sweep_trace(s, paths[-1])
        back = import_sweep_traces(tmp_path, SMALL_CFG)
        assert [b.link_id for b in back] == [2, 3, 4]
        for a, b in zip(sweeps, back):
            assert a.samples.tobytes() == b.samples.tobytes()

    def test_three_lines(self, tmp_path):
        cfg = SweepConfig(center_frequency_hz=10.0, bandwidth_hz=2.0, num_points=3, noise_std=0.0)
        path = tmp_path / "t.csv"
        path.write_text("9.0,1.0,0.0\n10.0,0.5,-0.5\n11.0,0.0,1.0\n")
        (sweep,) = import_sweep_traces(path, cfg)
        np.testing.assert_array_equal(sweep.samples, [1, 0.5 - 0.5j, 1j])
        assert isinstance(sweep, FrequencySweep)

    def test_non_monotone(self, tmp_path):
        cfg = SweepConfig(center_frequency_hz=10.0, bandwidth_hz=2.0, num_points=3)
        path = tmp_path / "t.csv"
        path.write_text("9.0,1.0,0.0\n11.0,0.5,-0.5\n10.0,0.0,1.0\n")
        with pytest.raises(FormatError, match="increasing"):
            import_sweep_traces(path, cfg)

    def test_grid_mismatch(self, tmp_path):
        cfg = SweepConfig(center_frequency_hz=10.0, bandwidth_hz=2.0, num_points=3)
        path = tmp_path / "t.csv"
        path.write_text("9.0,1.0,0.0\n10.5,0.5,-0.5\n11.0,0.0,1.0\n")
        with pytest.raises(FormatError, match="deviates"):
            import_sweep_traces(path, cfg)

    def test_malformed_row_reported(self, tmp_path):
        cfg = SweepConfig(center_frequency_hz=10.0, bandwidth_hz=2.0, num_points=3)
        path = tmp_path / "t.csv"
        path.write_text("# link_id=3\nfrequency_hz,real,imag\n9.0,1.0,0.0\n10.0,abc,0\n")
        with pytest.raises(FormatError, match="line 4"):
            import_sweep_traces(path, cfg)
