"""Report writing: atomic files, CSV/JSON emitters and the run manifest."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(rows: Iterable[dict], columns: Sequence[str]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k)) for k in columns})
    return buf.getvalue().encode("utf-8")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def pct(x: float | None) -> str:
    """Two-decimal percentage for human-readable output."""
    return "n/a" if x is None else f"{100 * x:.2f}%"


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def digest(self) -> str:
        """Hash of everything that determines the outputs (no timestamp, no output hashes)."""
        core = {"command": self.command, "config": self.config, "seed": self.seed,
                "inputs": self.inputs, "version": self.version}
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()

    def add_input(self, name: str, path) -> None:
        self.inputs[name] = sha256_file(path)

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "seed": self.seed,
                "inputs": self.inputs, "outputs": self.outputs, "version": self.version,
                "timestamp": self.timestamp, "digest": self.digest}


class ReportWriter:
    """Writes report files into one directory and records their hashes in the manifest."""

    def __init__(self, out_dir, manifest: RunManifest):
        self.out = Path(out_dir)
        self.manifest = manifest

    def _put(self, name: str, data: bytes) -> Path:
        path = self.out / name
        atomic_write(path, data)
        self.manifest.outputs[name] = hashlib.sha256(data).hexdigest()
        return path

    def csv(self, name: str, rows, columns) -> Path:
        return self._put(name, csv_bytes(rows, columns))

    def json(self, name: str, obj: dict) -> Path:
        return self._put(name, json_bytes({**obj, "manifest_digest": self.manifest.digest}))

    def finish(self) -> Path:
        path = self.out / "manifest.json"
        atomic_write(path, json_bytes(self.manifest.to_dict()))
        return path
