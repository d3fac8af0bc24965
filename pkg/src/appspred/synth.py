"""Synthetic contextual app-usage data with planted context -> app rules."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .schema import DAYS, HOURS, ContextFeature, ContextSchema, Dataset, UsageRecord

LOCATIONS = ("home", "workplace", "canteen", "playground", "on_the_way", "other")

DS01_APPS = ("Gmail", "Whatsapp", "Readnews", "LinkedIn", "Music", "Youtube", "Facebook", "Skype")
DS02_APPS = (
    "Facebook", "Youtube", "Browser", "Gmail", "Whatsapp", "Movie", "Games",
    "Live sports", "Skype", "Instagram", "Read News", "LinkedIn", "Music",
)


def default_features() -> tuple[ContextFeature, ...]:
    return (
        ContextFeature("hour", "temporal_hour", HOURS),
        ContextFeature("day", "temporal_day", DAYS),
        ContextFeature("holiday", "binary", ("yes", "no")),
        ContextFeature("location", "categorical", LOCATIONS),
        ContextFeature("mood", "categorical", ("happy", "sad", "normal")),
        ContextFeature("battery", "categorical", ("full", "medium", "low")),
        ContextFeature("profile", "categorical", ("general", "silent", "vibration")),
        ContextFeature("wifi", "binary", ("on", "off")),
    )


def default_schema(labels: Sequence[str] = DS02_APPS) -> ContextSchema:
    """Time, day, holiday, location, mood, battery, profile and wifi contexts."""
    return ContextSchema(default_features(), tuple(labels))


def hours(start: int, stop: int) -> tuple[str, ...]:
    """Hour segments ``start..stop`` inclusive, e.g. ``hours(9, 16)``."""
    return HOURS[start:stop + 1]


@dataclass(frozen=True)
class PlantedRule:
    """``app`` is used whenever every ``feature`` takes one of its listed values.

    Among matching rules the one with the highest ``priority`` wins.
    """

    conditions: tuple[tuple[str, tuple[str, ...]], ...]
    app: str
    priority: int

    def __post_init__(self):
        conds = tuple((f, (v,) if isinstance(v, str) else tuple(v)) for f, v in self.conditions)
        object.__setattr__(self, "conditions", conds)

    def to_dict(self) -> dict:
        return {"conditions": {f: list(v) for f, v in self.conditions}, "app": self.app,
                "priority": self.priority}

    @classmethod
    def from_dict(cls, obj: dict) -> "PlantedRule":
        return cls(tuple((f, tuple(v)) for f, v in obj["conditions"].items()), obj["app"], obj["priority"])


@dataclass(frozen=True)
class GeneratorSpec:
    schema: ContextSchema
    rules: tuple[PlantedRule, ...]
    default_app: str
    noise_rate: float = 0.0
    n_records: int = 1000
    seed: int = 0
    missing_rate: float = 0.0
    user_id: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ValueError("generator needs at least one rule")
        for name, rate in (("noise_rate", self.noise_rate), ("missing_rate", self.missing_rate)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_records < 0:
            raise ValueError("n_records must be >= 0")
        priorities = [r.priority for r in self.rules]
        if len(set(priorities)) != len(priorities):
            raise ValueError("rule priorities must be unique")
        labels = self.schema.label_domain
        if self.default_app not in labels:
            raise ValueError(f"default app {self.default_app!r} not in label domain")
        for r in self.rules:
            if r.app not in labels:
                raise ValueError(f"rule app {r.app!r} not in label domain")
            for feat, values in r.conditions:
                domain = self.schema.feature(feat).domain
                bad = [v for v in values if v not in domain]
                if bad or not values:
                    raise ValueError(f"rule on {feat!r} uses values outside its domain: {bad}")

    def with_(self, **changes) -> "GeneratorSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "rules": [r.to_dict() for r in self.rules],
            "default_app": self.default_app,
            "noise_rate": self.noise_rate,
            "n_records": self.n_records,
            "seed": self.seed,
            "missing_rate": self.missing_rate,
            "user_id": self.user_id,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorSpec":
        obj = dict(obj)
        obj["schema"] = ContextSchema.from_dict(obj["schema"])
        obj["rules"] = tuple(PlantedRule.from_dict(r) for r in obj["rules"])
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True, eq=False)
class GenerationLog:
    """Ground truth behind a generated dataset, one entry per record."""

    rule_index: np.ndarray  # index into spec.rules, -1 for the default app
    clean_labels: np.ndarray  # label codes before noise
    noised: np.ndarray  # bool
    missing: np.ndarray  # bool, (n_records, D)


def _rule_codes(spec: GeneratorSpec):
    schema = spec.schema
    out = []
    for r in spec.rules:
        conds = []
        for feat, values in r.conditions:
            j = schema.index(feat)
            domain = schema.features[j].domain
            conds.append((j, np.array([domain.index(v) for v in values])))
        out.append(conds)
    return out


def generate_with_log(spec: GeneratorSpec) -> tuple[Dataset, GenerationLog]:
    schema = spec.schema
    n, D = spec.n_records, schema.n_features
    labels = schema.label_domain
    n_apps = len(labels)
    rng = np.random.default_rng(spec.seed)

    X = np.column_stack(
        [rng.integers(0, f.cardinality, size=n) for f in schema.features]
    ) if n else np.zeros((0, D), dtype=np.int64)

    rule_index = np.full(n, -1, dtype=np.int64)
    order = sorted(range(len(spec.rules)), key=lambda i: -spec.rules[i].priority)
    coded = _rule_codes(spec)
    for i in order:
        hit = rule_index < 0
        for j, allowed in coded[i]:
            hit &= np.isin(X[:, j], allowed)
        rule_index[hit] = i

    app_code = np.array([labels.index(r.app) for r in spec.rules] + [labels.index(spec.default_app)])
    clean = app_code[rule_index]  # -1 picks the trailing default entry

    # Every stream is drawn unconditionally so changing one rate leaves the others intact.
    noised = rng.random(n) < spec.noise_rate
    shift = rng.integers(1, n_apps, size=n)
    y = np.where(noised, (clean + shift) % n_apps, clean)
    missing = rng.random((n, D)) < spec.missing_rate

    records = []
    domains = [f.domain for f in schema.features]
    for i in range(n):
        values = tuple(
            None if missing[i, j] else domains[j][X[i, j]] for j in range(D)
        )
        records.append(UsageRecord(values, labels[y[i]]))
    log = GenerationLog(rule_index, clean, noised, missing)
    return Dataset(schema, tuple(records), spec.user_id), log


def generate(spec: GeneratorSpec) -> Dataset:
    """Draw each context uniformly, label by the winning rule, then corrupt.

    With probability ``noise_rate`` a label is swapped for a uniformly chosen
    different app; each feature cell is blanked with probability
    ``missing_rate``. Output depends only on ``spec``.
    """
    return generate_with_log(spec)[0]


def bayes_ceiling(spec: GeneratorSpec) -> float:
    """Best achievable accuracy on fresh records drawn from ``spec``.

    The rule app keeps probability ``1 - q``; every other app gets ``q / (A - 1)``.
    """
    q = spec.noise_rate
    n_apps = len(spec.schema.label_domain)
    return max(1.0 - q, q / (n_apps - 1))


def _ranked(rules):
    return tuple(PlantedRule(c, app, len(rules) - i) for i, (c, app) in enumerate(rules))


# Conditions use contiguous runs of the declared value order, so each one is
# a single threshold over label codes. Gmail's hour x wifi parity and the
# cross-cutting Instagram rule are interactions a naive-Bayes model cannot
# represent exactly.
_HW = ("home", "workplace")
_CP = ("canteen", "playground")
_OO = ("on_the_way", "other")


def _ds01_rules() -> tuple[PlantedRule, ...]:
    return _ranked([
        ((("location", _HW), ("hour", hours(0, 11)), ("wifi", "on")), "Gmail"),
        ((("location", _HW), ("hour", hours(0, 11))), "LinkedIn"),
        ((("location", _HW), ("wifi", "off")), "Gmail"),
        ((("location", _HW),), "Youtube"),
        ((("location", _CP), ("mood", "happy")), "Music"),
        ((("location", _CP),), "Facebook"),
        ((("location", _OO), ("wifi", "off")), "Readnews"),
        ((("location", _OO), ("hour", hours(0, 11))), "Skype"),
    ])


def _ds02_rules() -> tuple[PlantedRule, ...]:
    return _ranked([
        ((("location", "home"), ("hour", hours(0, 11)), ("battery", "full")), "Games"),
        ((("location", "home"), ("hour", hours(0, 11))), "Read News"),
        ((("location", "home"), ("holiday", "yes")), "Movie"),
        ((("location", "home"),), "Youtube"),
        ((("location", "workplace"), ("wifi", "on")), "Gmail"),
        ((("location", "workplace"),), "LinkedIn"),
        ((("mood", "happy"), ("wifi", "on")), "Instagram"),
        ((("location", "canteen"),), "Facebook"),
        ((("location", "playground"),), "Live sports"),
        ((("location", "on_the_way"), ("wifi", "off")), "Music"),
        ((("location", "on_the_way"),), "Whatsapp"),
        ((("location", "other"), ("profile", "general")), "Skype"),
    ])


def preset(name: str, seed: int = 0, **overrides) -> GeneratorSpec:
    """Named generator configurations: ``ds01-like`` and ``ds02-like``."""
    if name == "ds01-like":
        spec = GeneratorSpec(default_schema(DS01_APPS), _ds01_rules(), "Whatsapp",
                             noise_rate=0.10, n_records=2500, seed=seed, user_id="ds01-like")
    elif name == "ds02-like":
        spec = GeneratorSpec(default_schema(DS02_APPS), _ds02_rules(), "Browser",
                             noise_rate=0.10, n_records=4000, seed=seed, user_id="ds02-like")
    else:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return spec.with_(**overrides) if overrides else spec


PRESETS = ("ds01-like", "ds02-like")
