"""Contextual dataset model: features, domains, usage records, CSV/JSON I/O."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

from .exceptions import DomainViolationError, EmptyDatasetError, SchemaMismatchError

MISSING = "?"
LABEL_COLUMN = "app"

FEATURE_KINDS = ("categorical", "binary", "temporal_hour", "temporal_day")

HOURS = tuple(f"h{h:02d}" for h in range(24))
DAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


@dataclass(frozen=True)
class ContextFeature:
    """One contextual feature and its ordered domain of admissible values."""

    name: str
    kind: str
    domain: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if not self.domain:
            raise ValueError(f"feature {self.name!r}: empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"feature {self.name!r}: duplicate domain values")
        if MISSING in self.domain:
            raise ValueError(f"feature {self.name!r}: {MISSING!r} is reserved")
        if self.kind == "binary" and len(self.domain) != 2:
            raise ValueError(f"binary feature {self.name!r} needs exactly 2 values")

    @property
    def cardinality(self) -> int:
        return len(self.domain)


@dataclass(frozen=True)
class ContextSchema:
    features: tuple[ContextFeature, ...]
    label_domain: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "label_domain", tuple(self.label_domain))
        if not self.features:
            raise ValueError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if LABEL_COLUMN in names:
            raise ValueError(f"{LABEL_COLUMN!r} is reserved for the label column")
        if len(self.label_domain) < 2:
            raise ValueError("label domain needs at least 2 apps")
        if len(set(self.label_domain)) != len(self.label_domain):
            raise ValueError("label domain values must be unique")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def feature(self, name: str) -> ContextFeature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.feature_names.index(name)

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "domain": list(f.domain)}
                for f in self.features
            ],
            "labels": list(self.label_domain),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ContextSchema":
        try:
            features = [
                ContextFeature(f["name"], f["kind"], tuple(f["domain"]))
                for f in obj["features"]
            ]
            return cls(tuple(features), tuple(obj["labels"]))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatchError(f"malformed schema document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ContextSchema":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class UsageRecord:
    """A labeled usage event.

    Missing cells are stored as ``None`` in ``values`` (or ``label``) and
    flagged in ``missing_mask``; the mask has one entry per feature followed
    by one entry for the label.
    """

    values: tuple[str | None, ...]
    label: str | None
    missing_mask: tuple[bool, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.missing_mask:
            mask = tuple(v is None for v in self.values) + (self.label is None,)
            object.__setattr__(self, "missing_mask", mask)

    @property
    def is_complete(self) -> bool:
        return not any(self.missing_mask)


@dataclass(frozen=True)
class Dataset:
    schema: ContextSchema
    records: tuple[UsageRecord, ...] = ()
    user_id: str = "anonymous"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for i, rec in enumerate(self.records):
            _check_record(self.schema, rec, i)

    def __len__(self):
        return len(self.records)

    @property
    def labels(self) -> list[str | None]:
        return [r.label for r in self.records]


def _check_record(schema: ContextSchema, rec: UsageRecord, row: int) -> None:
    if len(rec.values) != schema.n_features:
        raise SchemaMismatchError(
            f"row {row}: expected {schema.n_features} values, got {len(rec.values)}"
        )
    for feat, value in zip(schema.features, rec.values):
        if value is not None and value not in feat.domain:
            raise DomainViolationError(row, feat.name, value)
    if rec.label is not None and rec.label not in schema.label_domain:
        raise DomainViolationError(row, LABEL_COLUMN, rec.label)


def load_dataset(csv_text: str, schema: ContextSchema, user_id: str = "anonymous",
                 require_label: bool = True) -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    Columns are matched by header name, so their order in the file is free.
    Extra columns are ignored. ``"?"`` marks a missing cell. With
    ``require_label=False`` the ``app`` column may be absent, in which case
    every label is missing (useful for prediction inputs).

    Raises
    ------
    SchemaMismatchError
        If the header lacks a schema feature or the ``app`` column.
    DomainViolationError
        If a non-missing cell is outside its feature's domain. ``row`` is the
        zero-based data row index.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaMismatchError("CSV is empty (no header row)") from None
    header = [h.strip() for h in header]
    required = list(schema.feature_names) + [LABEL_COLUMN]
    absent = [name for name in required if name not in header]
    if absent == [LABEL_COLUMN] and not require_label:
        absent = []
    if absent:
        raise SchemaMismatchError(f"CSV header is missing column(s): {', '.join(absent)}")
    positions = [header.index(name) if name in header else -1 for name in required]

    records = []
    for row_no, row in enumerate(reader):
        if not row:
            continue
        if len(row) < len(header):
            raise SchemaMismatchError(
                f"row {row_no}: expected {len(header)} cells, got {len(row)}"
            )
        cells = [row[p] if p >= 0 else MISSING for p in positions]
        cells = [None if c == MISSING else c for c in cells]
        rec = UsageRecord(tuple(cells[:-1]), cells[-1])
        _check_record(schema, rec, row_no)
        records.append(rec)
    return Dataset(schema, tuple(records), user_id)


def dump_csv(dataset: Dataset, header: Sequence[str] | None = None) -> str:
    """Serialize a dataset to CSV text (``\\n`` line endings)."""
    schema = dataset.schema
    columns = list(header) if header is not None else list(schema.feature_names) + [LABEL_COLUMN]
    lookup = {name: i for i, name in enumerate(schema.feature_names)}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in dataset.records:
        row = []
        for col in columns:
            value = rec.label if col == LABEL_COLUMN else rec.values[lookup[col]]
            row.append(MISSING if value is None else value)
        writer.writerow(row)
    return buf.getvalue()


def clean_missing(dataset: Dataset) -> Dataset:
    """Drop every record with a missing cell or label, keeping order.

    Raises :class:`EmptyDatasetError` when nothing survives.
    """
    kept = tuple(r for r in dataset.records if r.is_complete)
    if not kept:
        raise EmptyDatasetError(
            f"no complete records left after removing missing data "
            f"({len(dataset.records)} records in input)"
        )
    if len(kept) == len(dataset.records):
        return dataset
    return replace(dataset, records=kept)


def class_distribution(dataset: Dataset) -> dict[str, int]:
    counts = Counter(r.label for r in dataset.records if r.label is not None)
    return {app: counts.get(app, 0) for app in dataset.schema.label_domain}
