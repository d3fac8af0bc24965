"""Label encoding of contextual values and one-hot expansion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .schema import ContextSchema, Dataset, UsageRecord
from ._validation import check_codes


class LabelEncoder:
    """Bijective value <-> code maps derived from a schema.

    Codes follow the schema's declared domain order, so the mapping never
    depends on which records happen to be in a training fold.
    """

    def __init__(self, schema: ContextSchema):
        self.schema = schema
        self._value_to_code = [
            {v: i for i, v in enumerate(f.domain)} for f in schema.features
        ]
        self._label_to_code = {a: i for i, a in enumerate(schema.label_domain)}

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(f.cardinality for f in self.schema.features)

    @property
    def n_classes(self) -> int:
        return len(self.schema.label_domain)

    def encode_value(self, feature_index: int, value: str) -> int:
        return self._value_to_code[feature_index][value]

    def decode_value(self, feature_index: int, code: int) -> str:
        return self.schema.features[feature_index].domain[code]

    def encode_label(self, app: str) -> int:
        return self._label_to_code[app]

    def decode_label(self, code: int) -> str:
        return self.schema.label_domain[int(code)]

    def encode_row(self, values) -> np.ndarray:
        return np.array(
            [m[v] for m, v in zip(self._value_to_code, values)], dtype=np.int64
        )

    def decode_row(self, codes) -> tuple[str, ...]:
        return tuple(self.decode_value(j, c) for j, c in enumerate(codes))

    def __eq__(self, other):
        return isinstance(other, LabelEncoder) and other.schema == self.schema

    def __hash__(self):
        return hash(self.schema)


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    X: np.ndarray
    y: np.ndarray
    encoder: LabelEncoder

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("feature matrix and label vector disagree in length")
        check_codes(self.X, self.encoder.cardinalities)
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("label code out of range")

    @property
    def n_records(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return self.encoder.n_classes

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return self.encoder.cardinalities

    def subset(self, rows) -> "EncodedDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return EncodedDataset(self.X[rows], self.y[rows], self.encoder)

    def decode(self) -> Dataset:
        records = tuple(
            UsageRecord(self.encoder.decode_row(x), self.encoder.decode_label(c))
            for x, c in zip(self.X, self.y)
        )
        return Dataset(self.encoder.schema, records)


def encode_dataset(dataset: Dataset) -> EncodedDataset:
    """Label-encode a cleaned dataset (no missing cells allowed)."""
    enc = LabelEncoder(dataset.schema)
    n, d = len(dataset.records), dataset.schema.n_features
    X = np.empty((n, d), dtype=np.int64)
    y = np.empty(n, dtype=np.int64)
    for i, rec in enumerate(dataset.records):
        if not rec.is_complete:
            raise ValueError(f"record {i} has missing cells; run clean_missing first")
        X[i] = enc.encode_row(rec.values)
        y[i] = enc.encode_label(rec.label)
    return EncodedDataset(X, y, enc)


def one_hot(X, cardinalities) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(cardinalities)[:-1]]).astype(np.int64)
    out = np.zeros((X.shape[0], int(sum(cardinalities))), dtype=np.float64)
    rows = np.repeat(np.arange(X.shape[0]), X.shape[1])
    out[rows, (X + offsets).ravel()] = 1.0
    return out


def one_hot_expand(encoded: EncodedDataset) -> np.ndarray:
    """Indicator matrix of width ``sum(cardinalities)``; each row sums to D."""
    return one_hot(encoded.X, encoded.cardinalities)


class OneHotExpander(TransformerMixin, BaseEstimator):
    """Transformer turning label codes into indicator blocks.

    Parameters
    ----------
    cardinalities : sequence of int, optional
        Domain size per feature. Inferred as ``max code + 1`` when omitted,
        which is only safe if every value occurs in the fitting data.
    """

    def __init__(self, cardinalities=None):
        self.cardinalities = cardinalities

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.int64)
        if self.cardinalities is not None:
            self.cardinalities_ = tuple(int(c) for c in self.cardinalities)
        else:
            self.cardinalities_ = tuple(int(c) for c in X.max(axis=0) + 1)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "cardinalities_")
        X = check_codes(X, self.cardinalities_)
        return one_hot(X, self.cardinalities_)
