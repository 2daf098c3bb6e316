"""Run manifests: config snapshot, seed, versions and output checksums."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict

from . import __version__
from .errors import DataError


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_id_for(config_snapshot: str, seed: int) -> str:
    return hashlib.sha256(f"{seed}\n{config_snapshot}".encode()).hexdigest()[:16]


def write_manifest(
    out_dir,
    config_snapshot: str,
    seed: int,
    files: Dict[str, str],
    wall_clock_s: float,
    extra: dict | None = None,
) -> dict:
    manifest = {
        "run_id": run_id_for(config_snapshot, seed),
        "seed": seed,
        "tool_version": __version__,
        "config": config_snapshot,
        "files": files,
        "wall_clock_s": round(wall_clock_s, 3),
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest.json in {run_dir}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid manifest: {exc}") from None


def check_same_run(a: dict, b: dict) -> None:
    if a.get("run_id") != b.get("run_id"):
        raise DataError(
            f"manifest mismatch: run {a.get('run_id')} vs {b.get('run_id')}"
        )
