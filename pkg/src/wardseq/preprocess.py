"""Feature encoding: standardization and one-hot, fitted on the train split.

Both transformers follow the scikit-learn estimator conventions (fit
returns self, fitted state lives in trailing-underscore attributes,
``get_params`` works), so they compose with sklearn pipelines even though
they operate on the package's table DataFrames rather than bare arrays.
"""

from __future__ import annotations

import json
import warnings

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import SchemaError
from .ingest import CATEGORICAL, CONTINUOUS, FeatureSchema


class Standardizer(BaseEstimator, TransformerMixin):
    """Center continuous features and scale them to unit standard deviation.

    Means and (population, 1/N) standard deviations are computed over the
    non-missing training values of each continuous feature. Features that
    are constant or entirely missing in the training split are flagged and
    excluded from scaling: they transform to 0 everywhere. Missing values
    map to 0 after scaling, i.e. to the training mean.
    """

    def __init__(self, schema: FeatureSchema):
        self.schema = schema

    def fit(self, frame: pd.DataFrame, y=None):
        if frame.empty:
            raise SchemaError("cannot fit standardizer on an empty table")
        means: dict[str, float] = {}
        stds: dict[str, float] = {}
        dropped: list[str] = []
        for name in self.schema.continuous_names:
            values = frame[name].to_numpy(np.float64)
            present = values[~np.isnan(values)]
            if present.size == 0 or float(np.std(present)) == 0.0:
                dropped.append(name)
                means[name] = float(present.mean()) if present.size else 0.0
                stds[name] = 1.0
                continue
            means[name] = float(present.mean())
            stds[name] = float(np.std(present))
        if dropped:
            warnings.warn(
                f"features excluded from scaling (constant or all-missing): {dropped}",
                stacklevel=2,
            )
        self.means_ = means
        self.stds_ = stds
        self.dropped_ = tuple(dropped)
        return self

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        self._check_fitted()
        out = frame.copy()
        for name in self.schema.continuous_names:
            values = out[name].to_numpy(np.float64)
            scaled = (values - self.means_[name]) / self.stds_[name]
            out[name] = np.where(np.isnan(scaled), 0.0, scaled)
        return out

    def inverse_transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        """Undo scaling; only meaningful at originally non-missing positions."""
        self._check_fitted()
        out = frame.copy()
        for name in self.schema.continuous_names:
            values = out[name].to_numpy(np.float64)
            out[name] = values * self.stds_[name] + self.means_[name]
        return out

    def _check_fitted(self):
        if not hasattr(self, "means_"):
            raise NotFittedError("Standardizer is not fitted yet")

    def to_dict(self) -> dict:
        self._check_fitted()
        return {"means": self.means_, "stds": self.stds_, "dropped": list(self.dropped_)}

    @classmethod
    def from_dict(cls, schema: FeatureSchema, payload: dict) -> "Standardizer":
        out = cls(schema)
        out.means_ = {k: float(v) for k, v in payload["means"].items()}
        out.stds_ = {k: float(v) for k, v in payload["stds"].items()}
        out.dropped_ = tuple(payload["dropped"])
        return out


class CategoryEncoder(BaseEstimator, TransformerMixin):
    """Replace categorical columns by indicator columns.

    Category lists come from the schema when pinned there, otherwise they
    are frozen from the training split at fit time (sorted unique values).
    Unseen or missing categories encode as an all-zero block.
    """

    def __init__(self, schema: FeatureSchema):
        self.schema = schema

    def fit(self, frame: pd.DataFrame, y=None):
        categories: dict[str, tuple[str, ...]] = {}
        for spec in self.schema.features:
            if spec.kind != CATEGORICAL:
                continue
            if spec.categories is not None:
                categories[spec.name] = tuple(spec.categories)
            else:
                seen = frame[spec.name].dropna().unique()
                categories[spec.name] = tuple(sorted(str(v) for v in seen))
        self.categories_ = categories
        return self

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        if not hasattr(self, "categories_"):
            raise NotFittedError("CategoryEncoder is not fitted yet")
        out = frame.copy()
        for name, cats in self.categories_.items():
            col = out[name]
            block = {}
            for cat in cats:
                block[f"{name}={cat}"] = (col == cat).astype(np.float64)
            idx = out.columns.get_loc(name)
            out = out.drop(columns=[name])
            for offset, (enc_name, enc_col) in enumerate(block.items()):
                out.insert(idx + offset, enc_name, enc_col)
        return out

    def encoded_names(self, name: str) -> list[str]:
        return [f"{name}={cat}" for cat in self.categories_[name]]


class FeaturePipeline(BaseEstimator, TransformerMixin):
    """Fit-once encode-anywhere wrapper: one-hot then standardization.

    After fitting, ``feature_columns_`` lists the encoded column names in
    schema order (categoricals expanded in place), which is the feature
    axis every downstream tensor uses. The fitted state round-trips
    through a JSON sidecar so evaluation runs can reuse training-split
    parameters.
    """

    def __init__(self, schema: FeatureSchema):
        self.schema = schema

    def fit(self, frame: pd.DataFrame, y=None):
        self.encoder_ = CategoryEncoder(self.schema).fit(frame)
        self.standardizer_ = Standardizer(self.schema).fit(frame)
        columns: list[str] = []
        for spec in self.schema.features:
            if spec.kind == CONTINUOUS:
                columns.append(spec.name)
            else:
                columns.extend(self.encoder_.encoded_names(spec.name))
        self.feature_columns_ = columns
        return self

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        if not hasattr(self, "feature_columns_"):
            raise NotFittedError("FeaturePipeline is not fitted yet")
        return self.encoder_.transform(self.standardizer_.transform(frame))

    @property
    def encoded_width(self) -> int:
        return len(self.feature_columns_)

    def to_json(self) -> str:
        payload = {
            "schema": self.schema.to_dict(),
            "standardizer": self.standardizer_.to_dict(),
            "categories": {k: list(v) for k, v in self.encoder_.categories_.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeaturePipeline":
        payload = json.loads(text)
        schema = FeatureSchema.from_dict(payload["schema"])
        out = cls(schema)
        out.standardizer_ = Standardizer.from_dict(schema, payload["standardizer"])
        encoder = CategoryEncoder(schema)
        encoder.categories_ = {k: tuple(v) for k, v in payload["categories"].items()}
        out.encoder_ = encoder
        columns: list[str] = []
        for spec in schema.features:
            if spec.kind == CONTINUOUS:
                columns.append(spec.name)
            else:
                columns.extend(encoder.encoded_names(spec.name))
        out.feature_columns_ = columns
        return out
