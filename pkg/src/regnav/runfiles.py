"""Scene-set directories with a content-hashed manifest."""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

from .world.scene import SPLIT_NAMES, Scene, difficulty_groups, load_scene, scene_difficulty

MANIFEST = "manifest.json"


class SceneSetError(RuntimeError):
    """Scene files are missing or differ from the manifest."""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def manifest_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k != "hash"}
    return _sha256(json.dumps(body, sort_keys=True).encode())


def write_scene_sets(sets: dict[str, list[Scene]], out_dir, settings: dict | None = None) -> dict:
    """Write ``out_dir/<split>/scene_<id>.json`` plus ``manifest.json``; returns the manifest."""
    out_dir = Path(out_dir)
    ids = [s.id for split in sets.values() for s in split]
    if len(ids) != len(set(ids)):
        raise ValueError("scene ids must be unique across splits")
    groups = difficulty_groups(sets.get("train", []))
    manifest = {"schema_version": 1, "settings": settings or {}, "splits": {},
                "counts": {k: len(v) for k, v in sets.items()},
                "difficulty_groups": {str(k): v for k, v in sorted(groups.items())}}
    for split, scenes in sets.items():
        (out_dir / split).mkdir(parents=True, exist_ok=True)
        rows = []
        for s in scenes:
            rel = f"{split}/scene_{s.id:04d}.json"
            data = s.to_json().encode()
            (out_dir / rel).write_bytes(data)
            rows.append({"id": s.id, "file": rel, "sha256": _sha256(data), "width": s.width, "height": s.height,
                         "difficulty": round(scene_difficulty(s), 6), "group": groups.get(s.id)})
        manifest["splits"][split] = rows
    manifest["hash"] = manifest_hash(manifest)
    (out_dir / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def read_manifest(scene_dir) -> dict:
    path = Path(scene_dir) / MANIFEST
    if not path.exists():
        raise SceneSetError(f"no {MANIFEST} in {scene_dir}; run gen-scenes first")
    manifest = json.loads(path.read_text())
    if manifest.get("hash") != manifest_hash(manifest):
        raise SceneSetError(f"{path} was modified after generation (hash mismatch)")
    return manifest


def load_scene_sets(scene_dir, splits=SPLIT_NAMES) -> dict[str, list[Scene]]:
    """Load and hash-verify the scenes of ``splits``."""
    scene_dir = Path(scene_dir)
    manifest = read_manifest(scene_dir)
    out = {}
    for split in splits:
        rows = manifest["splits"].get(split)
        if rows is None:
            raise SceneSetError(f"manifest in {scene_dir} has no {split!r} split")
        out[split] = []
        for row in rows:
            path = scene_dir / row["file"]
            if not path.exists():
                raise SceneSetError(f"missing scene file {path}")
            if _sha256(path.read_bytes()) != row["sha256"]:
                raise SceneSetError(f"{path} does not match its manifest hash")
            out[split].append(load_scene(path))
    return out


def copy_scene_dir(src, dst) -> None:
    """Copy a verified scene directory (manifest plus files) into a run directory."""
    src, dst = Path(src), Path(dst)
    manifest = read_manifest(src)
    for rows in manifest["splits"].values():
        for row in rows:
            (dst / row["file"]).parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src / row["file"], dst / row["file"])
    shutil.copyfile(src / MANIFEST, dst / MANIFEST)
