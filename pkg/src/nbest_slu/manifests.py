"""Run manifests: enough resolved configuration, seeds, and data hashes to
reproduce a run exactly. Written atomically at run start and finalized with
an end timestamp and outcome."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _atomic_write(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def start_manifest(run_dir: str | Path, subcommand: str, config: dict,
                   data_files: dict[str, str | Path], seeds: dict) -> Path:
    from . import __version__

    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "subcommand": subcommand,
        "config": config,
        "data": {role: {"path": str(p), "sha256": file_sha256(p)} for role, p in data_files.items()},
        "seeds": seeds,
        "version": __version__,
        "started": _now(),
        "finished": None,
        "status": "running",
    }
    path = run_dir / MANIFEST_NAME
    _atomic_write(path, payload)
    return path


def finalize_manifest(path: str | Path, status: str = "complete", results: dict | None = None) -> None:
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["finished"] = _now()
    payload["status"] = status
    if results is not None:
        payload["results"] = results
    _atomic_write(path, payload)


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def verify_data_hashes(manifest: dict) -> None:
    """Raise when any data file changed since the manifest was written."""
    for role, entry in manifest.get("data", {}).items():
        actual = file_sha256(entry["path"])
        if actual != entry["sha256"]:
            raise ValueError(f"data file {entry['path']} ({role}) changed since the run was recorded")
