"""Similarity primitives over token and embedding streams.

The edit-distance kernel is compiled (Cython) when available; otherwise a
vectorized numpy fallback is selected at import.  ``KERNEL_BACKEND`` reports
which one is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

try:
    from . import _levenshtein as _lev_impl

    KERNEL_BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _levenshtein_py as _lev_impl

    KERNEL_BACKEND = "python"


@dataclass
class TokenSequence:
    """Discrete audio token ids at a fixed rate."""

    tokens: np.ndarray             # (n,) uint32
    rate: float                    # tokens per second
    vocab_bound: int = 102400

    def __post_init__(self):
        self.tokens = np.ascontiguousarray(self.tokens, dtype=np.uint32)
        if self.rate <= 0:
            raise DataError("token rate must be positive")
        if self.tokens.size and int(self.tokens.max()) >= self.vocab_bound:
            raise DataError(
                f"token id {int(self.tokens.max())} outside vocabulary bound {self.vocab_bound}"
            )


@dataclass
class EmbeddingSequence:
    """One embedding vector per code step."""

    vectors: np.ndarray            # (steps, dim) float

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DataError("embeddings must be a steps x dim matrix")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("embeddings must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def steps(self) -> int:
        return self.vectors.shape[0]


@dataclass
class WindowSlice:
    """A clipped slice of a stream around a code step."""

    items: np.ndarray
    start: int
    stop: int
    clipped: bool


def _as_token_array(seq) -> np.ndarray:
    arr = np.asarray(seq)
    if arr.size and arr.min() < 0:
        raise DataError("token ids must be non-negative")
    return np.ascontiguousarray(arr, dtype=np.uint32)


def levenshtein(a, b) -> int:
    """Minimum insert/delete/substitute edits between two token sequences."""
    return int(_lev_impl.levenshtein_u32(_as_token_array(a), _as_token_array(b)))


def levenshtein_normalized(a, b) -> float:
    """Edit distance divided by the longer length (0 for two empty inputs)."""
    a = _as_token_array(a)
    b = _as_token_array(b)
    longest = max(a.size, b.size)
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def cosine_similarity(u, v) -> float:
    """u.v / (|u||v|); zero vectors are defined to have similarity 0."""
    value, _ = cosine_similarity_flagged(u, v)
    return value


def cosine_similarity_flagged(u, v) -> tuple[float, bool]:
    """Cosine similarity plus a flag marking degenerate (zero) input."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DataError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0, True
    return float(np.dot(u, v) / (nu * nv)), False


def step_center_seconds(code_step: int, frames_per_code: int, fps: float) -> float:
    return (code_step + 0.5) * frames_per_code / fps


def window_at(
    items,
    rate: float,
    code_step: int,
    half_width_seconds: float,
    frames_per_code: int,
    fps: float,
) -> WindowSlice:
    """Slice of a stream covering [center-h, center+h] around a code step.

    ``items`` is any per-item stream sampled at ``rate`` items/second
    (token ids, embedding rows).  Boundary windows are clipped, never
    padded, and the realized bounds are reported.
    """
    items = np.asarray(items)
    n = items.shape[0]
    center = step_center_seconds(code_step, frames_per_code, fps)
    if code_step < 0 or center * rate > n + 0.5:
        raise DataError(f"code step {code_step} outside the stream span")
    length = int(round(2.0 * half_width_seconds * rate))
    start = int(round((center - half_width_seconds) * rate))
    stop = start + length
    clipped = start < 0 or stop > n
    start = max(start, 0)
    stop = min(stop, n)
    return WindowSlice(items[start:stop], start, stop, clipped)
