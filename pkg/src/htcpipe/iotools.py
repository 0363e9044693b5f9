"""Shared filesystem helpers: atomic writes and deterministic JSON dumps."""

from __future__ import annotations

import json
import os
from pathlib import Path


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a ``.partial`` sibling and rename, so readers never see torn files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_json(obj) -> str:
    """Deterministic JSON rendering (sorted keys, fixed layout, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: str | os.PathLike, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path: str | os.PathLike):
    with open(path) as fh:
        return json.load(fh)
