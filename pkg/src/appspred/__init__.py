"""Context-aware smartphone app prediction with random forests."""

from .encode import EncodedDataset, LabelEncoder, OneHotExpander, encode_dataset, one_hot_expand
from .evaluation import CvConfig, compare_models, cross_validate
from .forest import (
    ForestConfig,
    RandomForest,
    RandomForestClassifier,
    sweep_optimal_trees,
    train_forest,
)
from .schema import ContextFeature, ContextSchema, Dataset, UsageRecord, clean_missing, load_dataset
from .synth import GeneratorSpec, PlantedRule, default_schema, generate, preset
from .tree import DecisionTreeClassifier, TreeConfig, grow_tree

__version__ = "0.1.0"

__all__ = [
    "ContextFeature", "ContextSchema", "CvConfig", "Dataset", "DecisionTreeClassifier",
    "EncodedDataset", "ForestConfig", "GeneratorSpec", "LabelEncoder", "OneHotExpander",
    "PlantedRule", "RandomForest", "RandomForestClassifier", "TreeConfig", "UsageRecord",
    "clean_missing", "compare_models", "cross_validate", "default_schema", "encode_dataset",
    "generate", "grow_tree", "load_dataset", "one_hot_expand", "preset", "sweep_optimal_trees",
    "train_forest",
]
