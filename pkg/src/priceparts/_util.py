"""Small shared helpers: atomic file writes, canonical JSON, seeding."""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import numpy as np


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write text to path via a temp file + rename so readers never see partial output."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, no incidental whitespace differences."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def config_digest(obj: Any) -> str:
    """Stable hex digest of a JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a sub-task, reproducible from (seed, key)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))
