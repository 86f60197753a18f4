"""Flat-file plumbing: locale-independent CSV tables and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["CSVFormatError", "format_cell", "write_csv", "read_csv", "file_digest",
           "RunManifest"]


class CSVFormatError(ValueError):
    pass


def format_cell(value) -> str:
    """Render a cell with ``.`` decimals and round-trippable floats."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row; errors name the offending line."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CSVFormatError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise CSVFormatError(
                f"{path}:{lineno}: expected {len(header)} cells, found {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CSVFormatError(f"{path}:{lineno}: non-numeric cell in {line!r}") from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """What a command ran with and what it wrote.

    Holds the fully resolved configuration so that re-running from the
    manifest reproduces the same CSV files.
    """

    command: str
    config: dict
    seeds: dict = field(default_factory=dict)
    version: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_plain) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)!r}")
