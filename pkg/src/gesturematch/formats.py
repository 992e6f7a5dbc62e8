"""On-disk interchange formats.

Binary arrays are raw little-endian, row-major, with a JSON sidecar
manifest (same path, ``.bin`` replaced by ``.json``) declaring shape and
provenance.  Beats and word timings are plain text for easy interop.

Readers return ``(value, warnings)``: structural problems raise
``DataError``; soft anomalies (empty streams, zero embedding rows) come
back as warning strings.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .config import TOKEN_VOCAB_BOUND
from .errors import DataError
from .seqsim import EmbeddingSequence, TokenSequence

TOKENS_FORMAT = "gesturematch.tokens/1"
EMBEDDINGS_FORMAT = "gesturematch.embeddings/1"
DB_FORMAT = "gesturematch.db/1"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _sidecar(path: Path) -> Path:
    path = Path(path)
    if path.suffix != ".bin":
        raise DataError(f"{path}: binary payloads use the .bin suffix")
    return path.with_suffix(".json")


def write_array(path: Path, array: np.ndarray, dtype: str) -> bytes:
    data = np.ascontiguousarray(array).astype(np.dtype(dtype).newbyteorder("<")).tobytes()
    Path(path).write_bytes(data)
    return data


def read_array(path: Path, dtype: str, shape) -> np.ndarray:
    data = Path(path).read_bytes()
    dt = np.dtype(dtype).newbyteorder("<")
    expected = int(np.prod(shape)) * dt.itemsize
    if len(data) != expected:
        raise DataError(f"{path}: {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def _check_declared_hash(path: Path, manifest: dict, data: bytes) -> None:
    declared = manifest.get("sha256")
    if declared and declared != sha256_bytes(data):
        raise DataError(f"{path}: sha256 mismatch against its manifest")


# ---------------------------------------------------------------------------
# token streams


def write_tokens(path: Path, tokens: TokenSequence, extra: dict | None = None) -> None:
    path = Path(path)
    data = write_array(path, tokens.tokens, "uint32")
    manifest = {
        "format": TOKENS_FORMAT,
        "count": int(tokens.tokens.size),
        "rate_hz": float(tokens.rate),
        "vocab_bound": int(tokens.vocab_bound),
        "sha256": sha256_bytes(data),
    }
    manifest.update(extra or {})
    write_json(_sidecar(path), manifest)


def read_tokens(path: Path) -> tuple[TokenSequence, list[str]]:
    path = Path(path)
    manifest = read_json(_sidecar(path))
    if manifest.get("format") != TOKENS_FORMAT:
        raise DataError(f"{path}: not a {TOKENS_FORMAT} file")
    data = path.read_bytes()
    _check_declared_hash(path, manifest, data)
    count = int(manifest.get("count", -1))
    rate = float(manifest.get("rate_hz", 0.0))
    bound = int(manifest.get("vocab_bound", TOKEN_VOCAB_BOUND))
    tokens = read_array(path, "uint32", (count,)) if count >= 0 else None
    if tokens is None:
        raise DataError(f"{path}: manifest lacks a count")
    warnings = []
    if count == 0:
        warnings.append(f"{path}: empty token stream")
    seq = TokenSequence(tokens, rate, bound)
    return seq, warnings


# ---------------------------------------------------------------------------
# embedding sequences


def write_embeddings(path: Path, emb: EmbeddingSequence, extra: dict | None = None) -> None:
    path = Path(path)
    data = write_array(path, emb.vectors, "float32")
    manifest = {
        "format": EMBEDDINGS_FORMAT,
        "steps": int(emb.steps),
        "dim": int(emb.dim),
        "sha256": sha256_bytes(data),
    }
    manifest.update(extra or {})
    write_json(_sidecar(path), manifest)


def read_embeddings(path: Path) -> tuple[EmbeddingSequence, list[str]]:
    path = Path(path)
    manifest = read_json(_sidecar(path))
    if manifest.get("format") != EMBEDDINGS_FORMAT:
        raise DataError(f"{path}: not a {EMBEDDINGS_FORMAT} file")
    data = path.read_bytes()
    _check_declared_hash(path, manifest, data)
    steps = int(manifest.get("steps", -1))
    dim = int(manifest.get("dim", -1))
    if steps < 0 or dim < 1:
        raise DataError(f"{path}: manifest lacks steps/dim")
    vectors = read_array(path, "float32", (steps, dim))
    warnings = []
    zero_rows = np.flatnonzero(~vectors.any(axis=1))
    if zero_rows.size:
        warnings.append(f"{path}: {zero_rows.size} all-zero embedding rows")
    return EmbeddingSequence(vectors), warnings


# ---------------------------------------------------------------------------
# beats and word timings (plain text)


def write_beats(path: Path, times) -> None:
    lines = [repr(float(t)) for t in np.asarray(times, dtype=np.float64).ravel()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_beats(path: Path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    values = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric beat time") from None
    times = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(times)):
        raise DataError(f"{path}: beat times must be finite")
    if times.size and times.min() < 0:
        raise DataError(f"{path}: beat times must be non-negative")
    if np.any(np.diff(times) <= 0):
        raise DataError(f"{path}: beat times must be strictly ascending")
    warnings = [f"{path}: no beats"] if times.size == 0 else []
    return times, warnings


def write_timings(path: Path, timings) -> None:
    lines = [f"{word}\t{float(start)!r}\t{float(end)!r}" for word, start, end in timings]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_timings(path: Path) -> tuple[list[tuple[str, float, float]], list[str]]:
    path = Path(path)
    out: list[tuple[str, float, float]] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'word<TAB>start<TAB>end'")
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric time") from None
        if end < start:
            raise DataError(f"{path}:{lineno}: word ends before it starts")
        if out and start < out[-1][1]:
            raise DataError(f"{path}:{lineno}: word starts out of order")
        out.append((parts[0], start, end))
    return out, []
