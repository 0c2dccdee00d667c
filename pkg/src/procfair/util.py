"""Shared plumbing: seed derivation, config hashing, atomic file writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

VERSION = "0.1.0"


def seed_for(master: int, *tags: int) -> int:
    """Stable per-stage seed derived from a master seed and integer tags."""
    return int(np.random.SeedSequence([int(master), *map(int, tags)]).generate_state(1)[0])


def config_hash(obj) -> str:
    """sha256 over the canonical JSON form of a config object."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write-temp-rename so concurrent readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
