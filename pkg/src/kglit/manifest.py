"""Run manifests: what produced an artifact, from which inputs, with which seeds."""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"
TIMESTAMP_FIELDS = ("started_at", "finished_at")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def checksums(paths) -> dict[str, str]:
    """SHA-256 per file keyed by file name (directories are expanded one level)."""
    out = {}
    for p in paths:
        p = Path(p)
        files = sorted(x for x in p.iterdir() if x.is_file() and not x.name.startswith("manifest")) if p.is_dir() else [p]
        for f in files:
            key = f"{p.name}/{f.name}" if p.is_dir() else f.name
            out[key] = file_sha256(f)
    return out


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    toolkit_version: str = __version__
    python: str = field(default_factory=platform.python_version)
    started_at: str = field(default_factory=now)
    finished_at: str = ""

    def finish(self, output_paths=()) -> "RunManifest":
        self.outputs = checksums(output_paths)
        self.finished_at = now()
        return self

    def write(self, directory) -> Path:
        """Write ``manifest.json``; a directory already holding another command's
        manifest gets ``manifest.<command>.json`` instead."""
        path = Path(directory) / MANIFEST_NAME
        if read_manifest(directory).get("command", self.command) != self.command:
            path = path.with_name(f"manifest.{self.command}.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def read_manifest(directory, command=None) -> dict:
    name = f"manifest.{command}.json" if command else MANIFEST_NAME
    path = Path(directory) / name
    if not path.exists():
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
