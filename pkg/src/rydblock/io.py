"""CSV output with unit headers, and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__

MANIFEST_SCHEMA = 1


def file_sha256(path) -> str | None:
    path = Path(path)
    if not path.exists():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path, columns, rows, comments=()) -> None:
    """Write ``rows`` (dicts) under a ``# name: unit`` comment block.

    ``columns`` is a sequence of ``(name, unit)`` pairs fixing the order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        for name, unit in columns:
            fh.write(f"# {name}: {unit}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([name for name, _ in columns])
        for row in rows:
            writer.writerow([_cell(row[name]) for name, _ in columns])
    os.replace(tmp, path)


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by ``write_csv`` (comment lines skipped), as strings."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "__fspath__"):
        return os.fspath(value)
    return str(value)


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    data_hashes: dict
    seed: int | None = None
    tool_version: str = __version__
    wall_time_s: float = 0.0
    outputs: dict = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)
    schema: int = MANIFEST_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"{path}: unsupported manifest schema {data.get('schema')!r}")
        return cls(**data)


def manifest_path(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")
