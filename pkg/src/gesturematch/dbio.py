"""Serialization of codebook artifacts and clip databases.

A database directory holds one canonical JSON manifest plus raw
little-endian arrays; writes are deterministic, so rebuilding from the
same inputs (or re-saving a loaded database) is byte-identical.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .codebook import Codebook, CodeSequence
from .config import EngineConfig
from .errors import DataError
from .formats import DB_FORMAT, read_array, read_json, sha256_bytes, write_json
from .matcher import ClipRecord, GestureDatabase
from .motion_io import STD_EPSILON, FeatureNorm, Skeleton
from .phase import PhaseBasis

CODEBOOK_FORMAT = "gesturematch.codebook/1"


def _write(path: Path, array: np.ndarray, dtype: str, table: dict, root: Path) -> None:
    data = np.ascontiguousarray(array).astype(np.dtype(dtype).newbyteorder("<")).tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    rel = path.relative_to(root).as_posix()
    table[rel] = {"bytes": len(data), "sha256": sha256_bytes(data)}


def _skeleton_payload(skeleton: Skeleton) -> dict:
    return {
        "joint_names": list(skeleton.joint_names),
        "parents": [int(p) for p in skeleton.parents],
        "offsets": [[float(v) for v in row] for row in skeleton.offsets],
        "channel_layout": [list(ch) for ch in skeleton.channel_layout],
        "end_offsets": {
            str(k): [float(v) for v in off] for k, off in sorted(skeleton.end_offsets.items())
        },
    }


def _skeleton_from_payload(payload: dict) -> Skeleton:
    skeleton = Skeleton(
        list(payload["joint_names"]),
        np.asarray(payload["parents"], dtype=np.int64),
        np.asarray(payload["offsets"], dtype=np.float64),
        [list(ch) for ch in payload["channel_layout"]],
        {int(k): np.asarray(v, dtype=np.float64) for k, v in payload.get("end_offsets", {}).items()},
    )
    skeleton.validate()
    return skeleton


def _config_payload(config: EngineConfig) -> dict:
    payload = dataclasses.asdict(config)
    payload["joint_subset"] = list(payload["joint_subset"])
    return payload


def _config_from_payload(payload: dict) -> EngineConfig:
    payload = dict(payload)
    payload["joint_subset"] = tuple(payload.get("joint_subset", ()))
    config = EngineConfig(**payload)
    config.validate()
    return config


def _save_norm(stats: FeatureNorm, root: Path, table: dict) -> None:
    _write(root / "norm_mean.bin", stats.mean, "float32", table, root)
    _write(root / "norm_std.bin", stats.std, "float32", table, root)
    _write(root / "norm_clamped.bin", stats.clamped.astype(np.uint8), "uint8", table, root)


def _load_norm(root: Path, dim: int) -> FeatureNorm:
    mean = read_array(root / "norm_mean.bin", "float32", (dim,)).astype(np.float64)
    std = read_array(root / "norm_std.bin", "float32", (dim,)).astype(np.float64)
    clamped = read_array(root / "norm_clamped.bin", "uint8", (dim,)).astype(bool)
    std = np.where(clamped, STD_EPSILON, std)
    return FeatureNorm(mean, std, clamped)


def _save_basis(basis: PhaseBasis, root: Path, table: dict) -> None:
    _write(root / "basis_mean.bin", basis.mean, "float32", table, root)
    _write(root / "basis_scale.bin", basis.scale, "float32", table, root)
    _write(root / "basis_components.bin", basis.components, "float32", table, root)


def _load_basis(root: Path, channels: int, dim: int) -> PhaseBasis:
    return PhaseBasis(
        read_array(root / "basis_mean.bin", "float32", (dim,)).astype(np.float64),
        read_array(root / "basis_scale.bin", "float32", (dim,)).astype(np.float64),
        read_array(root / "basis_components.bin", "float32", (channels, dim)).astype(np.float64),
    )


# ---------------------------------------------------------------------------
# codebook artifacts (output of `fit`)


def save_codebook_artifacts(
    out_dir: Path,
    codebook: Codebook,
    phase_basis: PhaseBasis,
    meta: dict | None = None,
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table: dict = {}
    _write(out_dir / "codebook.bin", codebook.centers, "float32", table, out_dir)
    _save_norm(codebook.feature_norm, out_dir, table)
    _save_basis(phase_basis, out_dir, table)
    manifest = {
        "format": CODEBOOK_FORMAT,
        "size": codebook.size,
        "code_dim": codebook.code_dim,
        "frames_per_code": codebook.frames_per_code,
        "joint_names": list(codebook.joint_names),
        "phase_channels": phase_basis.channels,
        "basis_dim": int(phase_basis.mean.shape[0]),
        "files": table,
    }
    manifest.update(meta or {})
    write_json(out_dir / "manifest.json", manifest)


def load_codebook_artifacts(path: Path) -> tuple[Codebook, PhaseBasis, dict]:
    path = Path(path)
    manifest = read_json(path / "manifest.json")
    if manifest.get("format") != CODEBOOK_FORMAT:
        raise DataError(f"{path}: not a {CODEBOOK_FORMAT} directory")
    size, dim = int(manifest["size"]), int(manifest["code_dim"])
    frames_per_code = int(manifest["frames_per_code"])
    centers = read_array(path / "codebook.bin", "float32", (size, dim)).astype(np.float64)
    codebook = Codebook(
        centers,
        frames_per_code,
        _load_norm(path, dim // frames_per_code),
        list(manifest.get("joint_names", [])),
    )
    codebook.validate()
    basis = _load_basis(path, int(manifest["phase_channels"]), int(manifest["basis_dim"]))
    return codebook, basis, manifest


# ---------------------------------------------------------------------------
# databases


def save_database(db: GestureDatabase, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table: dict = {}
    _write(out_dir / "codebook.bin", db.codebook.centers, "float32", table, out_dir)
    _save_norm(db.codebook.feature_norm, out_dir, table)
    _save_basis(db.phase_basis, out_dir, table)

    clip_entries = []
    for i, clip in enumerate(db.clips):
        stem = out_dir / "clips" / f"{i:04d}"
        _write(stem.with_suffix(".codes.bin"), clip.codes.codes, "uint32", table, out_dir)
        lengths = np.array([w.size for w in clip.audio_windows], dtype=np.uint64)
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.uint64)
        flat = (
            np.concatenate(clip.audio_windows)
            if clip.audio_windows and offsets[-1] > 0
            else np.empty(0, dtype=np.uint32)
        )
        _write(stem.with_suffix(".awin.bin"), flat, "uint32", table, out_dir)
        _write(stem.with_suffix(".awidx.bin"), offsets, "uint64", table, out_dir)
        _write(stem.with_suffix(".text.bin"), clip.text_windows, "float32", table, out_dir)
        _write(stem.with_suffix(".phase.bin"), clip.phase_windows, "float32", table, out_dir)
        clip_entries.append(
            {
                "id": clip.clip_id,
                "steps": clip.steps,
                "window_items": int(offsets[-1]),
                "word_timings": [
                    [w, float(a), float(b)] for w, a, b in clip.word_timings
                ],
            }
        )

    manifest = {
        "format": DB_FORMAT,
        "config": _config_payload(db.config),
        "skeleton": _skeleton_payload(db.skeleton),
        "codebook": {
            "size": db.codebook.size,
            "code_dim": db.codebook.code_dim,
            "frames_per_code": db.codebook.frames_per_code,
            "joint_names": list(db.codebook.joint_names),
        },
        "phase_basis": {
            "channels": db.phase_basis.channels,
            "dim": int(db.phase_basis.mean.shape[0]),
        },
        "text_dim": db.text_dim,
        "token_rate": float(db.token_rate),
        "code_frequency": [int(c) for c in db.code_frequency],
        "clips": clip_entries,
        "files": table,
    }
    write_json(out_dir / "manifest.json", manifest)


def load_database(path: Path) -> GestureDatabase:
    path = Path(path)
    manifest = read_json(path / "manifest.json")
    if manifest.get("format") != DB_FORMAT:
        raise DataError(f"{path}: not a {DB_FORMAT} directory")
    config = _config_from_payload(manifest["config"])
    skeleton = _skeleton_from_payload(manifest["skeleton"])

    cb_meta = manifest["codebook"]
    size, dim = int(cb_meta["size"]), int(cb_meta["code_dim"])
    frames_per_code = int(cb_meta["frames_per_code"])
    codebook = Codebook(
        read_array(path / "codebook.bin", "float32", (size, dim)).astype(np.float64),
        frames_per_code,
        _load_norm(path, dim // frames_per_code),
        list(cb_meta.get("joint_names", [])),
    )
    basis_meta = manifest["phase_basis"]
    basis = _load_basis(path, int(basis_meta["channels"]), int(basis_meta["dim"]))

    text_dim = int(manifest["text_dim"])
    clips = []
    for i, entry in enumerate(manifest["clips"]):
        stem = path / "clips" / f"{i:04d}"
        steps = int(entry["steps"])
        codes = read_array(stem.with_suffix(".codes.bin"), "uint32", (steps,)).astype(np.int64)
        offsets = read_array(stem.with_suffix(".awidx.bin"), "uint64", (steps + 1,)).astype(np.int64)
        flat = read_array(stem.with_suffix(".awin.bin"), "uint32", (int(entry["window_items"]),))
        windows = [flat[offsets[s] : offsets[s + 1]].copy() for s in range(steps)]
        text = read_array(stem.with_suffix(".text.bin"), "float32", (steps, text_dim)).astype(np.float64)
        phase = read_array(
            stem.with_suffix(".phase.bin"),
            "float32",
            (steps, config.n_phase, 2 * basis.channels),
        ).astype(np.float64)
        clips.append(
            ClipRecord(
                str(entry["id"]),
                CodeSequence(codes, frames_per_code, config.fps),
                windows,
                text,
                phase,
                [(str(w), float(a), float(b)) for w, a, b in entry.get("word_timings", [])],
            )
        )

    db = GestureDatabase(
        clips,
        codebook,
        basis,
        skeleton,
        config,
        np.asarray(manifest["code_frequency"], dtype=np.int64),
        float(manifest["token_rate"]),
    )
    db.validate()
    return db
