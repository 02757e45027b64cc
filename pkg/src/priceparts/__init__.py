"""Price modeling toolkit: boosted oblivious trees, target-statistics encoding,
interventional Shapley attributions, market segmentation, and component pricing."""

from . import cluster, dataset, encode, evaluate, explain, gbdt, persist, pricing
from .errors import (
    ConfigError,
    ParseError,
    PricePartsError,
    SchemaError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "cluster",
    "dataset",
    "encode",
    "evaluate",
    "explain",
    "gbdt",
    "persist",
    "pricing",
    "PricePartsError",
    "SchemaError",
    "ParseError",
    "ValidationError",
    "ConfigError",
    "__version__",
]
