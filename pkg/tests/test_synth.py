import io

import numpy as np
import pytest
from scipy import stats

from wardseq.exceptions import ConfigError
from wardseq.ingest import read_granular_csv, windowize, write_granular_csv
from wardseq.metrics import auroc
from wardseq.synth import (
    DEFAULT_FEATURES,
    FeatureTarget,
    SynthConfig,
    encounter_event_rate,
    generate,
    observation_event_rate,
    quantile_check,
)


@pytest.fixture(scope="module")
def default_table():
    return generate(SynthConfig(n_patients=2000, seed=7))


class TestDeterminism:
    def test_identical_config_identical_table(self):
        cfg = SynthConfig(n_patients=50, seed=3)
        a = generate(cfg)
        b = generate(SynthConfig(n_patients=50, seed=3))
        assert a.equals(b)

    def test_different_seed_differs(self):
        a = generate(SynthConfig(n_patients=50, seed=3))
        b = generate(SynthConfig(n_patients=50, seed=4))
        assert not a.equals(b)

    def test_config_json_round_trip(self):
        cfg = SynthConfig(n_patients=10, seed=1, event_rate=0.1)
        clone = SynthConfig.from_json(cfg.to_json())
        assert generate(cfg).equals(generate(clone))


class TestCalibration:
    def test_age_quantiles_near_targets(self, default_table):
        ages = default_table.drop_duplicates("patient_id")["age"].dropna()
        assert 59.0 <= ages.median() <= 63.0
        assert abs(np.quantile(ages, 0.25) - 47.0) <= 3.0
        assert abs(np.quantile(ages, 0.75) - 71.0) <= 3.0

    def test_encounter_event_rate_near_target(self, default_table):
        assert encounter_event_rate(default_table) == pytest.approx(0.047, abs=0.01)

    def test_quantile_check_self_consistency(self, default_table):
        rows = quantile_check(default_table, DEFAULT_FEATURES, tolerance=0.10)
        failed = [r.feature for r in rows if not r.passed]
        assert failed == []

    def test_quantile_check_catches_shift(self, default_table):
        shifted = default_table.copy()
        shifted["age"] = shifted["age"] + 100.0
        rows = quantile_check(shifted, DEFAULT_FEATURES)
        by_name = {r.feature: r for r in rows}
        assert not by_name["age"].passed
        assert by_name["systolic_pressure"].passed

    def test_quantile_check_empty_target_list(self, default_table):
        assert quantile_check(default_table, ()) == []


class TestStructure:
    def test_lengths_right_skewed(self, default_table):
        lengths = default_table.groupby("encounter_id").size()
        assert lengths.median() < lengths.mean()

    def test_observation_rate_below_encounter_rate(self, default_table):
        assert observation_event_rate(default_table) < encounter_event_rate(default_table)

    def test_positive_rows_form_trailing_run(self, default_table):
        # events close an encounter, so targets look like 0...0 1...1
        for _, group in default_table.groupby("encounter_id"):
            targets = group.sort_values("time_hours")["target"].to_numpy()
            assert (np.diff(targets) >= 0).all()

    def test_times_start_at_zero_and_increase(self, default_table):
        for _, group in default_table.groupby("encounter_id"):
            times = group["time_hours"].to_numpy()
            assert times[0] == 0.0
            assert (np.diff(times) > 0).all()

    def test_csv_round_trip_through_ingest(self):
        cfg = SynthConfig(n_patients=30, seed=5)
        frame = generate(cfg)
        buffer = io.StringIO()
        write_granular_csv(frame, buffer)
        buffer.seek(0)
        parsed = read_granular_csv(buffer, cfg.schema())
        assert len(parsed) == len(frame)
        windowed = windowize(parsed, cfg.schema())
        assert windowed["encounter_id"].nunique() == frame["encounter_id"].nunique()


class TestSignal:
    def test_zero_strength_is_label_independent(self):
        # deterministic seeds; a KS test per drifted feature must not reject
        for seed in range(10):
            cfg = SynthConfig(n_patients=400, seed=seed, signal_strength=0.0, missing_rate=0.0)
            frame = generate(cfg)
            pos = frame[frame["target"] == 1]
            neg = frame[frame["target"] == 0]
            if len(pos) < 20:
                continue
            for target in cfg.features:
                if target.signal == 0.0:
                    continue
                p = stats.ks_2samp(pos[target.name], neg[target.name]).pvalue
                assert p > 0.01, (seed, target.name, p)

    def test_single_feature_threshold_beats_chance(self, default_table):
        values = default_table["max_o2"].to_numpy()
        present = ~np.isnan(values)
        score = auroc(values[present], default_table["target"].to_numpy()[present])
        assert score > 0.6

    def test_depressed_pressure_signal_direction(self, default_table):
        pos = default_table.loc[default_table["target"] == 1, "mean_arterial_pressure"].mean()
        neg = default_table.loc[default_table["target"] == 0, "mean_arterial_pressure"].mean()
        assert pos < neg


class TestConfigValidation:
    def test_bad_event_rate(self):
        with pytest.raises(ConfigError):
            SynthConfig(event_rate=0.0)

    def test_bad_patient_count(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_patients=0)

    def test_quartiles_must_bracket_median(self):
        with pytest.raises(ConfigError):
            FeatureTarget("bad", 10.0, 12.0, 20.0).sigmas()
