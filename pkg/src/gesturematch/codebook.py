"""Gesture-unit codebook over fixed-length motion windows.

Quantization is windowed k-means: non-overlapping blocks of normalized
rotation features are clustered, sequences encode to nearest-centroid
indices, and decoding concatenates centroid windows back into motion.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .motion_io import FeatureNorm, MotionSequence, NormalizedMotion, Skeleton

KMEANS_MAX_ROUNDS = 100


@dataclass
class Codebook:
    centers: np.ndarray            # (size, code_dim) in normalized feature units
    frames_per_code: int
    feature_norm: FeatureNorm
    joint_names: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def code_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def joint_count(self) -> int:
        return self.code_dim // (self.frames_per_code * 9)

    def validate(self) -> None:
        if self.size < 1:
            raise DataError("codebook must hold at least one center")
        if not np.all(np.isfinite(self.centers)):
            raise DataError("codebook centers must be finite")
        if self.code_dim != self.frames_per_code * self.joint_count * 9:
            raise DataError("code dimension inconsistent with window metadata")

    def denormalized_centers(self) -> np.ndarray:
        """Centers mapped back to raw feature units (no rotation projection).

        Normalization stats are per frame channel, so windows pass through
        a (size * d, channels) view.
        """
        per_frame = self.centers.reshape(self.size * self.frames_per_code, -1)
        return self.feature_norm.invert(per_frame).reshape(self.size, self.code_dim)


@dataclass
class CodeSequence:
    codes: np.ndarray              # (steps,) int
    frames_per_code: int
    source_fps: float

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)

    @property
    def steps(self) -> int:
        return self.codes.shape[0]


def segment_windows(features: np.ndarray, frames_per_code: int) -> np.ndarray:
    """Non-overlapping windows of flattened frame features.

    Returns (floor(T/d), d * F); trailing remainder frames are dropped.
    """
    features = np.asarray(features, dtype=np.float64)
    t = features.shape[0]
    d = frames_per_code
    if t < d:
        raise DataError(f"need at least {d} frames, got {t}")
    n = t // d
    return features[: n * d].reshape(n, d * features.shape[1])


def _kmeans_pp_init(windows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = windows.shape[0]
    centers = np.empty((k, windows.shape[1]))
    centers[0] = windows[rng.integers(n)]
    closest = np.sum((windows - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[i] = windows[rng.integers(n)]
        else:
            centers[i] = windows[rng.choice(n, p=closest / total)]
        np.minimum(closest, np.sum((windows - centers[i]) ** 2, axis=1), out=closest)
    return centers


def _assign(windows: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # ||w - c||^2 for every pair; argmin ties resolve to the lowest index.
    d2 = (
        np.sum(windows ** 2, axis=1)[:, None]
        - 2.0 * windows @ centers.T
        + np.sum(centers ** 2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(windows.shape[0]), labels]


def fit_codebook(
    windows: np.ndarray,
    size: int,
    seed: int,
    inertia_log: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from a seeded k-means++ start.

    Empty clusters are re-seeded from the point farthest from its center;
    iteration stops when assignments stabilize or after 100 rounds.
    Returns (centers, labels).  ``inertia_log`` collects the per-round sum
    of squared quantization errors when provided.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2:
        raise DataError("windows must be a 2-d array")
    if windows.shape[0] < size:
        raise DataError(f"{windows.shape[0]} windows cannot seed {size} centers")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(windows, size, rng)
    labels = np.full(windows.shape[0], -1)
    for _ in range(KMEANS_MAX_ROUNDS):
        new_labels, dists = _assign(windows, centers)
        for c in range(size):
            mask = new_labels == c
            if np.any(mask):
                centers[c] = windows[mask].mean(axis=0)
            else:
                far = int(np.argmax(dists))
                centers[c] = windows[far]
                new_labels[far] = c
                dists[far] = 0.0
        if inertia_log is not None:
            inertia_log.append(float(_assign(windows, centers)[1].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels


def fit_codebook_from_features(
    features_list,
    size: int,
    frames_per_code: int,
    seed: int,
    feature_norm: FeatureNorm,
    joint_names=None,
    inertia_log: list | None = None,
) -> Codebook:
    """Fit a Codebook from pre-normalized per-sequence feature matrices."""
    windows = np.concatenate(
        [segment_windows(f, frames_per_code) for f in features_list], axis=0
    )
    centers, _ = fit_codebook(windows, size, seed, inertia_log)
    cb = Codebook(centers, frames_per_code, feature_norm, list(joint_names or []))
    cb.validate()
    return cb


def encode_windows(windows: np.ndarray, cb: Codebook) -> np.ndarray:
    """Nearest-center index per window (ties break to the lowest index)."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape[1] != cb.code_dim:
        raise DataError(
            f"window dimension {windows.shape[1]} != code dimension {cb.code_dim}"
        )
    labels, _ = _assign(windows, cb.centers)
    return labels


def encode(normalized: NormalizedMotion, cb: Codebook) -> CodeSequence:
    windows = segment_windows(normalized.features, cb.frames_per_code)
    return CodeSequence(encode_windows(windows, cb), cb.frames_per_code, normalized.motion.fps)


def nearest_rotations(blocks: np.ndarray) -> np.ndarray:
    """Project arbitrary 3x3 blocks onto the closest proper rotations."""
    u, _, vt = np.linalg.svd(blocks)
    dets = np.linalg.det(u @ vt)
    u = u.copy()
    u[..., :, 2] *= np.where(dets < 0, -1.0, 1.0)[..., None]
    return u @ vt


def decode(cs: CodeSequence, cb: Codebook, skeleton: Skeleton) -> MotionSequence:
    """Concatenate centroid windows back into a motion sequence.

    Centroid averaging leaves the rotation manifold, so blocks are polar
    projected back onto it.  Joints outside the codebook's feature subset
    stay at identity; the root path is zeroed.
    """
    if cs.codes.size and (cs.codes.min() < 0 or cs.codes.max() >= cb.size):
        raise DataError("code index outside the codebook")
    d = cb.frames_per_code
    n_feat_joints = cb.joint_count
    raw = cb.denormalized_centers()[cs.codes]          # (steps, d * J9)
    frames = raw.reshape(cs.steps * d, n_feat_joints, 3, 3)
    frames = nearest_rotations(frames)

    if cb.joint_names:
        indices = [skeleton.joint_names.index(n) for n in cb.joint_names]
    else:
        indices = list(range(skeleton.joint_count))
    if len(indices) != n_feat_joints:
        raise DataError("skeleton does not match the codebook's joint subset")

    t = cs.steps * d
    rotations = np.broadcast_to(np.eye(3), (t, skeleton.joint_count, 3, 3)).copy()
    rotations[:, indices] = frames
    return MotionSequence(cs.source_fps, rotations, np.zeros((t, 3)), skeleton)


@dataclass
class LossReport:
    l1: float
    velocity: float
    acceleration: float
    reconstruction: float          # l1 + a1 * velocity + a2 * acceleration
    commitment: float              # mean per-window distance to assigned center
    total: float                   # reconstruction + (1 + beta) * commitment

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def vq_losses(
    normalized: NormalizedMotion,
    cs: CodeSequence,
    cb: Codebook,
    a1: float = 1.0,
    a2: float = 1.0,
    beta: float = 0.1,
) -> LossReport:
    """Diagnostic reconstruction/commitment terms (no training happens here).

    Terms are evaluated in the normalized feature space.  The two
    stop-gradient terms of the quantizer objective coincide numerically,
    so the report carries one commitment magnitude, weighted (1 + beta)
    in the total.
    """
    d = cb.frames_per_code
    windows = segment_windows(normalized.features, d)
    if windows.shape[0] != cs.steps:
        raise DataError("code sequence does not match the motion length")
    quantized = cb.centers[cs.codes]
    frames = windows.reshape(-1, cb.code_dim // d)
    qframes = quantized.reshape(-1, cb.code_dim // d)

    l1 = float(np.mean(np.abs(frames - qframes)))
    vel = float(np.mean(np.abs(np.diff(frames, axis=0) - np.diff(qframes, axis=0)))) if frames.shape[0] > 1 else 0.0
    acc = float(np.mean(np.abs(np.diff(frames, 2, axis=0) - np.diff(qframes, 2, axis=0)))) if frames.shape[0] > 2 else 0.0
    rec = l1 + a1 * vel + a2 * acc
    commit = float(np.mean(np.linalg.norm(windows - quantized, axis=1)))
    return LossReport(l1, vel, acc, rec, commit, rec + (1.0 + beta) * commit)


def code_histogram(code_sequences) -> Counter:
    """Occurrence counts per code across clips."""
    counts: Counter = Counter()
    for cs in code_sequences:
        codes = cs.codes if isinstance(cs, CodeSequence) else np.asarray(cs)
        counts.update(int(c) for c in codes)
    return counts


def top_codes(counts: Counter, n: int = 15) -> list[tuple[int, int]]:
    """(code, count) pairs by descending frequency, ties by lowest code."""
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
