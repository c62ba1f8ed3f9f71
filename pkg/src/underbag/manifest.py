"""Run manifests: every CLI command records what it ran and what it wrote.

A manifest carries the command, argv, the fully resolved configuration,
the tool version, the master seed, timestamps, and a sha256 digest per
output file.  Re-running the stored argv reproduces the outputs
byte-for-byte (theory paths are deterministic; simulation paths are
deterministic given the seed).
"""

from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path

__all__ = ["sha256_file", "write_manifest", "load_manifest"]


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path, command: str, argv: list[str], resolved: dict,
                   seed, outputs: list, started: str) -> dict:
    manifest = {
        "command": command,
        "argv": list(argv),
        "resolved": resolved,
        "version": _version(),
        "seed": seed,
        "started_at": started,
        "finished_at": _now(),
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in outputs],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                     default=str) + "\n")
    return manifest


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def _version() -> str:
    from . import __version__

    return __version__


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()
