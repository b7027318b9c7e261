"""Long-format record ingestion: parsing, 8-hour windowing, patient splits.

The on-disk format is a CSV with header
``patient_id,encounter_id,time_hours,<feature...>,target`` where an empty
cell means missing and target is 0/1. ``time_hours`` is hours since the
start of the encounter. Inside the package the same table travels as a
pandas DataFrame with exactly those columns, rows stable-sorted by
(encounter_id, time_hours).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import ConfigError, RowParseError, SchemaError

ID_COLUMNS = ("patient_id", "encounter_id", "time_hours")
TARGET_COLUMN = "target"

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    """One independent variable: continuous, or categorical with its levels."""

    name: str
    kind: str = CONTINUOUS
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ConfigError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CONTINUOUS and self.categories is not None:
            raise ConfigError(f"feature {self.name!r}: continuous features take no categories")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature inventory plus the fixed id/target column names."""

    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names must be unique")
        reserved = set(ID_COLUMNS) | {TARGET_COLUMN}
        clash = reserved.intersection(names)
        if clash:
            raise ConfigError(f"feature names clash with reserved columns: {sorted(clash)}")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def continuous_names(self) -> list[str]:
        return [f.name for f in self.features if f.kind == CONTINUOUS]

    @property
    def categorical_names(self) -> list[str]:
        return [f.name for f in self.features if f.kind == CATEGORICAL]

    def encoded_width(self) -> int:
        """Width of the encoded feature vector; needs category lists pinned."""
        width = 0
        for f in self.features:
            if f.kind == CONTINUOUS:
                width += 1
            else:
                if f.categories is None:
                    raise ConfigError(f"feature {f.name!r}: categories not pinned yet")
                width += len(f.categories)
        return width

    def with_time_diff(self) -> "FeatureSchema":
        """Schema with the time-since-previous-record feature appended."""
        if "time_diff" in self.feature_names:
            return self
        return FeatureSchema(self.features + (FeatureSpec("time_diff", CONTINUOUS),))

    def with_categories(self, categories: dict[str, tuple[str, ...]]) -> "FeatureSchema":
        feats = []
        for f in self.features:
            if f.kind == CATEGORICAL and f.name in categories:
                feats.append(FeatureSpec(f.name, CATEGORICAL, tuple(categories[f.name])))
            else:
                feats.append(f)
        return FeatureSchema(tuple(feats))

    def to_dict(self) -> dict:
        return {
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    **({"categories": list(f.categories)} if f.categories is not None else {}),
                }
                for f in self.features
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureSchema":
        feats = tuple(
            FeatureSpec(
                item["name"],
                item.get("kind", CONTINUOUS),
                tuple(item["categories"]) if item.get("categories") is not None else None,
            )
            for item in payload["features"]
        )
        return cls(feats)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        return cls.from_dict(json.loads(text))


def table_columns(schema: FeatureSchema) -> list[str]:
    return list(ID_COLUMNS) + schema.feature_names + [TARGET_COLUMN]


def read_granular_csv(source, schema: FeatureSchema) -> pd.DataFrame:
    """Parse a long-format CSV into the canonical granular table.

    Rows come back grouped by encounter and stable-sorted by time within
    each encounter; duplicate timestamps keep their file order. Raises
    SchemaError for missing columns and RowParseError (with the 1-based
    file line) for unparseable numerics.
    """
    raw = pd.read_csv(source, dtype=str, keep_default_na=False)
    missing = [c for c in table_columns(schema) if c not in raw.columns]
    if missing:
        raise SchemaError(f"input is missing required columns: {missing}")

    frame = pd.DataFrame(index=raw.index)
    frame["patient_id"] = raw["patient_id"]
    frame["encounter_id"] = raw["encounter_id"]
    frame["time_hours"] = _numeric_column(raw, "time_hours", required=True)

    for spec in schema.features:
        if spec.kind == CONTINUOUS:
            frame[spec.name] = _numeric_column(raw, spec.name, required=False)
        else:
            col = raw[spec.name].copy()
            col[col == ""] = np.nan
            frame[spec.name] = col

    target = _numeric_column(raw, TARGET_COLUMN, required=True)
    bad = ~target.isin([0.0, 1.0])
    if bad.any():
        raise RowParseError(int(bad.idxmax()) + 2, "target must be 0 or 1")
    frame[TARGET_COLUMN] = target.astype(np.int64)

    per_encounter = frame.groupby("encounter_id", sort=False)["patient_id"].nunique()
    conflicted = per_encounter[per_encounter > 1]
    if not conflicted.empty:
        raise SchemaError(
            f"encounter {conflicted.index[0]!r} maps to more than one patient_id"
        )

    frame = frame.sort_values(["encounter_id", "time_hours"], kind="stable")
    return frame.reset_index(drop=True)


def _numeric_column(raw: pd.DataFrame, name: str, required: bool) -> pd.Series:
    col = raw[name]
    converted = pd.to_numeric(col, errors="coerce")
    nonempty = col != ""
    bad = nonempty & converted.isna()
    if bad.any():
        line = int(bad.idxmax()) + 2  # +1 header, +1 one-based
        raise RowParseError(line, f"column {name!r}: cannot parse {col[bad.idxmax()]!r}")
    if required and (~nonempty).any():
        line = int((~nonempty).idxmax()) + 2
        raise RowParseError(line, f"column {name!r} must not be empty")
    return converted.astype(np.float64)


def windowize(frame: pd.DataFrame, schema: FeatureSchema, window_hours: float = 8.0) -> pd.DataFrame:
    """Aggregate granular rows into fixed windows anchored at hour 0.

    Window k of an encounter covers times in [k*w, (k+1)*w). Continuous
    features aggregate by mean of present values, categoricals by last
    present value, the target by max. Windows with no member rows are
    emitted with all features missing and target 0, so the number of rows
    per encounter is always floor(last_time / w) + 1 and the row index
    doubles as elapsed time / w.
    """
    if window_hours <= 0:
        raise ConfigError(f"window_hours must be positive, got {window_hours}")
    if frame.empty:
        return frame.copy()
    if (frame["time_hours"] < 0).any():
        raise SchemaError("time_hours must be non-negative")

    work = frame.copy()
    work["_win"] = np.floor(work["time_hours"].to_numpy() / window_hours).astype(np.int64)

    agg: dict[str, object] = {"patient_id": "first", TARGET_COLUMN: "max"}
    for spec in schema.features:
        agg[spec.name] = "mean" if spec.kind == CONTINUOUS else "last"
    grouped = work.groupby(["encounter_id", "_win"], sort=True).agg(agg)

    last_win = grouped.reset_index().groupby("encounter_id", sort=True)["_win"].max()
    full_index = pd.MultiIndex.from_arrays(
        [
            np.repeat(last_win.index.to_numpy(), last_win.to_numpy() + 1),
            np.concatenate([np.arange(m + 1) for m in last_win.to_numpy()]),
        ],
        names=["encounter_id", "_win"],
    )
    out = grouped.reindex(full_index)
    out[TARGET_COLUMN] = out[TARGET_COLUMN].fillna(0).astype(np.int64)
    enc_to_pat = work.drop_duplicates("encounter_id").set_index("encounter_id")["patient_id"]
    out["patient_id"] = out.index.get_level_values("encounter_id").map(enc_to_pat)

    out = out.reset_index()
    out["time_hours"] = out["_win"].to_numpy(np.float64) * window_hours
    return out[table_columns(schema)]


def add_time_diff(frame: pd.DataFrame) -> pd.DataFrame:
    """Append the hours-since-previous-record feature (0 at encounter start)."""
    out = frame.copy()
    diff = out.groupby("encounter_id", sort=False)["time_hours"].diff()
    out["time_diff"] = diff.fillna(0.0)
    # keep target as the last column
    cols = [c for c in out.columns if c != TARGET_COLUMN] + [TARGET_COLUMN]
    return out[cols]


def split_patientwise(
    frame: pd.DataFrame,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> dict[str, str]:
    """Assign every patient to train/validation/test, deterministically.

    Patients are shuffled by seed and carved by rounded fractions; each
    split is guaranteed at least one patient. All encounters of a patient
    land in the same split by construction.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {fractions}")

    patients = np.sort(frame["patient_id"].unique())
    n = len(patients)
    if n < 3:
        raise ConfigError(f"need at least 3 patients to split, got {n}")

    order = np.random.default_rng(seed).permutation(n)
    shuffled = patients[order]

    n_train = max(1, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n)))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)

    assignment: dict[str, str] = {}
    for i, pid in enumerate(shuffled):
        if i < n_train:
            assignment[str(pid)] = "train"
        elif i < n_train + n_val:
            assignment[str(pid)] = "validation"
        else:
            assignment[str(pid)] = "test"
    return assignment


def partition_by_split(frame: pd.DataFrame, assignment: dict[str, str]) -> dict[str, pd.DataFrame]:
    """Materialize the three split tables from a patient assignment."""
    splits = frame["patient_id"].map(assignment)
    if splits.isna().any():
        missing = frame.loc[splits.isna(), "patient_id"].iloc[0]
        raise SchemaError(f"patient {missing!r} has no split assignment")
    return {
        name: frame[splits == name].reset_index(drop=True)
        for name in ("train", "validation", "test")
    }


def write_granular_csv(frame: pd.DataFrame, path) -> None:
    """Write the canonical CSV format (empty cell = missing)."""
    frame.to_csv(path, index=False, na_rep="")
