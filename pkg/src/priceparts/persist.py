"""Model serialization: a JSON file that round-trips models bit-exactly.

Floats are written with Python's shortest round-trip repr, so a loaded model
predicts byte-identically to the one saved. Keys are sorted and the layout is
stable, which makes equal models produce equal files; the optional created_at
stamp is the only field expected to differ between reruns.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

from . import encode
from .dataset import FeatureSpec
from .errors import SchemaError
from .gbdt import Ensemble, ObliviousTree
from ._util import atomic_write_text

MODEL_FORMAT = "priceparts-model"
MODEL_FORMAT_VERSION = 1


def model_mapping(ensemble: Ensemble, *, created_at: str | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "base_score": ensemble.base_score,
        "learning_rate": ensemble.learning_rate,
        "schema": [{"name": s.name, "kind": s.kind, "unit": s.unit} for s in ensemble.schema],
        "encoder": ensemble.encoder.to_mapping(),
        "trees": [
            {
                "depth": t.depth,
                "features": list(t.features),
                "thresholds": list(t.thresholds),
                "leaf_values": list(t.leaf_values),
            }
            for t in ensemble.trees
        ],
        "metadata": {
            "seed": ensemble.seed,
            "config_hash": ensemble.config_hash,
            "created_at": created_at,
        },
    }


def ensemble_from_mapping(raw: Mapping) -> Ensemble:
    if raw.get("format") != MODEL_FORMAT:
        raise SchemaError(f"not a model file (format={raw.get('format')!r})")
    if raw.get("format_version") != MODEL_FORMAT_VERSION:
        raise SchemaError(f"unsupported model format version {raw.get('format_version')!r}")
    schema = tuple(FeatureSpec(s["name"], s["kind"], s.get("unit")) for s in raw["schema"])
    trees = tuple(
        ObliviousTree(
            depth=int(t["depth"]),
            features=tuple(int(f) for f in t["features"]),
            thresholds=tuple(float(v) for v in t["thresholds"]),
            leaf_values=tuple(float(v) for v in t["leaf_values"]),
        )
        for t in raw["trees"]
    )
    meta = raw.get("metadata", {})
    return Ensemble(
        base_score=float(raw["base_score"]),
        learning_rate=float(raw["learning_rate"]),
        trees=trees,
        schema=schema,
        encoder=encode.EncoderState.from_mapping(raw["encoder"]),
        seed=int(meta.get("seed", 0)),
        config_hash=str(meta.get("config_hash", "")),
    )


def save_model(ensemble: Ensemble, path: str | os.PathLike, *, created_at: str | None = None) -> None:
    payload = model_mapping(ensemble, created_at=created_at)
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_model(path: str | os.PathLike) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return ensemble_from_mapping(raw)
