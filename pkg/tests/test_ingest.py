import io
import math

import numpy as np
import pandas as pd
import pytest

from wardseq.exceptions import ConfigError, RowParseError, SchemaError
from wardseq.ingest import (
    CATEGORICAL,
    FeatureSchema,
    FeatureSpec,
    add_time_diff,
    partition_by_split,
    read_granular_csv,
    split_patientwise,
    windowize,
)

SCHEMA = FeatureSchema(
    (
        FeatureSpec("pulse"),
        FeatureSpec("gender", CATEGORICAL),
    )
)


def csv(text: str) -> io.StringIO:
    return io.StringIO(text.strip() + "\n")


BASIC = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,0
p1,e1,3,90,F,0
p1,e1,9,100,F,1
"""


class TestParse:
    def test_basic(self):
        frame = read_granular_csv(csv(BASIC), SCHEMA)
        assert len(frame) == 3
        assert frame["encounter_id"].nunique() == 1
        assert list(frame["target"]) == [0, 0, 1]

    def test_out_of_order_rows_are_time_sorted(self):
        shuffled = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,9,100,F,1
p1,e1,0,80,F,0
p1,e1,3,90,F,0
"""
        frame = read_granular_csv(csv(shuffled), SCHEMA)
        assert list(frame["time_hours"]) == [0.0, 3.0, 9.0]
        assert list(frame["pulse"]) == [80.0, 90.0, 100.0]

    def test_duplicate_timestamps_kept_stable(self):
        dup = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,3,90,F,0
p1,e1,3,95,F,0
"""
        frame = read_granular_csv(csv(dup), SCHEMA)
        assert list(frame["pulse"]) == [90.0, 95.0]

    def test_missing_target_column(self):
        bad = "patient_id,encounter_id,time_hours,pulse,gender\np1,e1,0,80,F\n"
        with pytest.raises(SchemaError, match="target"):
            read_granular_csv(io.StringIO(bad), SCHEMA)

    def test_unparseable_numeric_reports_line(self):
        bad = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,0
p1,e1,3,oops,F,0
"""
        with pytest.raises(RowParseError, match="line 3"):
            read_granular_csv(csv(bad), SCHEMA)

    def test_missing_cells_become_nan(self):
        sparse = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,,F,0
p1,e1,3,90,,0
"""
        frame = read_granular_csv(csv(sparse), SCHEMA)
        assert math.isnan(frame["pulse"].iloc[0])
        assert pd.isna(frame["gender"].iloc[1])

    def test_encounter_spanning_two_patients_rejected(self):
        bad = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,0
p2,e1,3,90,F,0
"""
        with pytest.raises(SchemaError, match="more than one patient"):
            read_granular_csv(csv(bad), SCHEMA)


class TestWindowize:
    def test_hours_0_3_9_make_two_windows(self):
        frame = read_granular_csv(csv(BASIC), SCHEMA)
        out = windowize(frame, SCHEMA, 8.0)
        assert len(out) == 2
        # window 0 averages the two member pulses, window 1 takes the third
        assert out["pulse"].iloc[0] == pytest.approx(85.0)
        assert out["pulse"].iloc[1] == pytest.approx(100.0)
        assert list(out["target"]) == [0, 1]
        assert list(out["time_hours"]) == [0.0, 8.0]

    def test_single_record_single_window(self):
        one = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,1
"""
        out = windowize(read_granular_csv(csv(one), SCHEMA), SCHEMA)
        assert len(out) == 1
        assert out["target"].iloc[0] == 1

    def test_gap_emits_empty_middle_window(self):
        gap = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,0
p1,e1,20,90,F,0
"""
        out = windowize(read_granular_csv(csv(gap), SCHEMA), SCHEMA)
        assert len(out) == 3
        assert math.isnan(out["pulse"].iloc[1])
        assert pd.isna(out["gender"].iloc[1])
        assert out["target"].iloc[1] == 0
        assert out["patient_id"].iloc[1] == "p1"

    def test_categorical_takes_last_present(self):
        cat = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,0
p1,e1,3,90,M,0
p1,e1,5,95,,0
"""
        out = windowize(read_granular_csv(csv(cat), SCHEMA), SCHEMA)
        assert out["gender"].iloc[0] == "M"

    def test_row_count_matches_floor_formula(self):
        rng = np.random.default_rng(7)
        rows = []
        for e in range(20):
            times = np.sort(rng.uniform(0, 100, size=rng.integers(1, 15)))
            for t in times:
                rows.append(("p1", f"e{e}", t, 1.0, "F", 0))
        frame = pd.DataFrame(rows, columns=["patient_id", "encounter_id", "time_hours", "pulse", "gender", "target"])
        out = windowize(frame, SCHEMA, 8.0)
        for eid, group in frame.groupby("encounter_id"):
            expected = int(group["time_hours"].max() // 8) + 1
            assert (out["encounter_id"] == eid).sum() == expected

    def test_event_never_lost(self):
        rng = np.random.default_rng(8)
        rows = []
        for e in range(30):
            n = int(rng.integers(1, 12))
            times = np.sort(rng.uniform(0, 60, size=n))
            targets = rng.integers(0, 2, size=n)
            for t, y in zip(times, targets):
                rows.append(("p1", f"e{e}", t, 1.0, "F", int(y)))
        frame = pd.DataFrame(rows, columns=["patient_id", "encounter_id", "time_hours", "pulse", "gender", "target"])
        out = windowize(frame, SCHEMA, 8.0)
        for eid, group in frame.groupby("encounter_id"):
            assert out.loc[out["encounter_id"] == eid, "target"].max() == group["target"].max()

    def test_bad_window_size(self):
        frame = read_granular_csv(csv(BASIC), SCHEMA)
        with pytest.raises(ConfigError):
            windowize(frame, SCHEMA, 0.0)


class TestTimeDiff:
    def test_diffs(self):
        frame = read_granular_csv(csv(BASIC), SCHEMA)
        out = add_time_diff(frame)
        assert list(out["time_diff"]) == [0.0, 3.0, 6.0]

    def test_resets_per_encounter(self):
        two = """
patient_id,encounter_id,time_hours,pulse,gender,target
p1,e1,0,80,F,0
p1,e1,5,85,F,0
p2,e2,0,70,M,0
p2,e2,2,75,M,0
"""
        out = add_time_diff(read_granular_csv(csv(two), SCHEMA))
        assert list(out["time_diff"]) == [0.0, 5.0, 0.0, 2.0]

    def test_single_row_encounter(self):
        one = "patient_id,encounter_id,time_hours,pulse,gender,target\np1,e1,4,80,F,0\n"
        out = add_time_diff(read_granular_csv(io.StringIO(one), SCHEMA))
        assert list(out["time_diff"]) == [0.0]


class TestSplit:
    def _frame(self, n_patients: int) -> pd.DataFrame:
        rows = [(f"p{i}", f"p{i}e0", 0.0, 1.0, "F", 0) for i in range(n_patients)]
        return pd.DataFrame(rows, columns=["patient_id", "encounter_id", "time_hours", "pulse", "gender", "target"])

    def test_ten_patients_exact(self):
        assignment = split_patientwise(self._frame(10), (0.6, 0.2, 0.2), seed=3)
        counts = pd.Series(assignment).value_counts()
        assert counts["train"] == 6 and counts["validation"] == 2 and counts["test"] == 2

    def test_deterministic(self):
        frame = self._frame(50)
        assert split_patientwise(frame, seed=9) == split_patientwise(frame, seed=9)
        assert split_patientwise(frame, seed=9) != split_patientwise(frame, seed=10)

    def test_partition_covers_everyone_once(self):
        frame = self._frame(101)
        assignment = split_patientwise(frame, seed=1)
        assert set(assignment) == set(frame["patient_id"])
        splits = partition_by_split(frame, assignment)
        total = sum(len(s) for s in splits.values())
        assert total == len(frame)

    def test_fractions_within_two_percent_at_scale(self):
        frame = self._frame(1500)
        assignment = split_patientwise(frame, (0.6, 0.2, 0.2), seed=4)
        counts = pd.Series(assignment).value_counts(normalize=True)
        assert abs(counts["train"] - 0.6) <= 0.02
        assert abs(counts["validation"] - 0.2) <= 0.02
        assert abs(counts["test"] - 0.2) <= 0.02

    def test_patient_encounters_stay_together(self):
        rows = []
        for i in range(12):
            for e in range(3):
                rows.append((f"p{i}", f"p{i}e{e}", 0.0, 1.0, "F", 0))
        frame = pd.DataFrame(rows, columns=["patient_id", "encounter_id", "time_hours", "pulse", "gender", "target"])
        splits = partition_by_split(frame, split_patientwise(frame, seed=2))
        seen: dict[str, str] = {}
        for name, table in splits.items():
            for pid in table["patient_id"].unique():
                assert seen.setdefault(pid, name) == name

    def test_too_few_patients(self):
        with pytest.raises(ConfigError):
            split_patientwise(self._frame(2))

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            split_patientwise(self._frame(10), (0.5, 0.2, 0.2))
