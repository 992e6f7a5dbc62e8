"""Clip database construction and the per-step candidate search.

Each step scores every codebook entry three ways (pose continuity against
the previous code, token-window edit distance, embedding cosine), fuses the
normalized ranks per modality, and lets phase continuity arbitrate between
the audio-ranked and text-ranked winners.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .codebook import Codebook, CodeSequence, decode, encode_windows, segment_windows
from .config import EngineConfig
from .errors import DataError
from .motion_io import (
    FeatureNorm,
    MotionSequence,
    Skeleton,
    forward_kinematics,
    joint_subset_indices,
    normalize,
    rotation_features,
)
from .phase import (
    PhaseBasis,
    build_latent_curves,
    continuity_distance,
    fit_phase_basis,
    phase_manifold,
    rotational_velocity,
)
from .seqsim import (
    EmbeddingSequence,
    TokenSequence,
    cosine_similarity,
    levenshtein,
    levenshtein_normalized,
    window_at,
)

SENTINEL = np.inf


# ---------------------------------------------------------------------------
# database types


@dataclass
class ClipRecord:
    clip_id: str
    codes: CodeSequence
    audio_windows: list[np.ndarray]        # per-step token windows (ragged)
    text_windows: np.ndarray               # (steps, dim)
    phase_windows: np.ndarray              # (steps, n_phase, 2 * channels)
    word_timings: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.codes.steps

    def validate(self) -> None:
        n = self.steps
        if len(self.audio_windows) != n or self.text_windows.shape[0] != n or self.phase_windows.shape[0] != n:
            raise DataError(f"clip {self.clip_id}: per-step arrays disagree on step count")
        starts = [t[1] for t in self.word_timings]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise DataError(f"clip {self.clip_id}: word timings not monotone")


@dataclass
class GestureDatabase:
    clips: list[ClipRecord]
    codebook: Codebook
    phase_basis: PhaseBasis
    skeleton: Skeleton
    config: EngineConfig
    code_frequency: np.ndarray             # (codebook size,) int64
    token_rate: float

    @cached_property
    def occurrences(self) -> list[tuple[int, int]]:
        """Flat (clip index, step index) table, clip-major order."""
        return [(c, s) for c, clip in enumerate(self.clips) for s in range(clip.steps)]

    @cached_property
    def frequency_penalty(self) -> np.ndarray:
        """relrank(-frequency): 0 for the most frequent code, 1 for the rarest."""
        return relrank(-self.code_frequency.astype(np.float64))

    @property
    def text_dim(self) -> int:
        return self.clips[0].text_windows.shape[1] if self.clips else 0

    def phase_window(self, clip_idx: int, step_idx: int) -> np.ndarray:
        return self.clips[clip_idx].phase_windows[step_idx]

    def validate(self) -> None:
        self.codebook.validate()
        counts = np.zeros(self.codebook.size, dtype=np.int64)
        for clip in self.clips:
            clip.validate()
            if clip.codes.codes.size and (
                clip.codes.codes.min() < 0 or clip.codes.codes.max() >= self.codebook.size
            ):
                raise DataError(f"clip {clip.clip_id}: code outside the codebook")
            counts += np.bincount(clip.codes.codes, minlength=self.codebook.size)
        if not np.array_equal(counts, self.code_frequency):
            raise DataError("code frequency table inconsistent with clips")


@dataclass
class MatchQuery:
    audio: TokenSequence
    text: EmbeddingSequence
    g_init: int | None = None              # explicit initial code
    phase_init: np.ndarray | None = None   # (>= n_phase, 2 * channels)
    init: str = "random"                   # fallback policy: random | frequent
    seed: int = 0
    k: int = 1                             # rank taken per modality (1-based)
    freq_weight: float = 0.05
    code_mask: np.ndarray | None = None    # (codebook size,) True = searchable
    step_masks: list | None = None         # per step: occurrence mask or None

    @property
    def steps(self) -> int:
        return self.text.steps


@dataclass
class StepTrace:
    step: int
    prev_code: int
    pose_dist: np.ndarray
    audio_dist: np.ndarray
    text_dist: np.ndarray
    fused_audio: np.ndarray
    fused_text: np.ndarray
    audio_code: int
    text_code: int
    audio_occurrence: tuple[int, int]
    text_occurrence: tuple[int, int]
    audio_phase_score: float
    text_phase_score: float
    chosen_code: int
    source: str                            # "audio" | "text"


@dataclass
class MatchResult:
    codes: np.ndarray
    sources: list[str]
    traces: list[StepTrace]
    decoded: MotionSequence


# ---------------------------------------------------------------------------
# clip splitting


def split_clips(
    frame_count: int,
    fps: float,
    frames_per_code: int,
    word_timings,
    gap_seconds: float = 0.5,
) -> list[tuple[int, int]]:
    """Code-step ranges [lo, hi) split at word gaps strictly above the limit.

    Each clip covers its words' frame span rounded outward to whole code
    steps.  An empty transcription yields one clip over the whole motion.
    """
    total_steps = frame_count // frames_per_code
    if total_steps < 1:
        raise DataError("motion shorter than one code step")
    timings = list(word_timings)
    for word, start, end in timings:
        if end < start:
            raise DataError(f"word {word!r} ends before it starts")
    starts = [t[1] for t in timings]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise DataError("word timings not monotone")
    if not timings:
        return [(0, total_steps)]

    groups: list[list[tuple[str, float, float]]] = [[timings[0]]]
    for prev, cur in zip(timings, timings[1:]):
        if cur[1] - prev[2] > gap_seconds:
            groups.append([cur])
        else:
            groups[-1].append(cur)

    steps_per_second = fps / frames_per_code
    bounds = []
    for group in groups:
        lo = int(np.floor(group[0][1] * steps_per_second))
        hi = int(np.ceil(group[-1][2] * steps_per_second))
        lo = min(max(lo, 0), total_steps - 1)
        hi = min(max(hi, lo + 1), total_steps)
        bounds.append((lo, hi))
    return bounds


# ---------------------------------------------------------------------------
# database construction


@dataclass
class RecordingInput:
    name: str
    motion: MotionSequence
    tokens: TokenSequence
    embeddings: EmbeddingSequence
    word_timings: list[tuple[str, float, float]] = field(default_factory=list)


def build_database(
    recordings: list[RecordingInput],
    config: EngineConfig,
    codebook: Codebook | None = None,
    phase_basis: PhaseBasis | None = None,
) -> GestureDatabase:
    """Assemble the searchable corpus from parallel recordings.

    When no pre-fitted codebook/basis is supplied, both are fitted on this
    corpus under ``config.seed``.  The result is deterministic for fixed
    inputs and seed.
    """
    if not recordings:
        raise DataError("no recordings supplied")
    config.validate()
    skeleton = recordings[0].motion.skeleton
    fps = recordings[0].motion.fps
    d = config.frames_per_code
    for rec in recordings:
        if rec.motion.skeleton.joint_names != skeleton.joint_names:
            raise DataError(f"recording {rec.name}: skeleton differs from the corpus")
        if abs(rec.motion.fps - fps) > 1e-9:
            raise DataError(f"recording {rec.name}: fps {rec.motion.fps} != {fps}")
        if rec.motion.frame_count < config.phase_fft_window_frames:
            raise DataError(
                f"recording {rec.name}: {rec.motion.frame_count} frames is shorter "
                f"than the {config.phase_fft_window_frames}-frame phase window"
            )
        if abs(rec.tokens.rate - recordings[0].tokens.rate) > 1e-9:
            raise DataError(f"recording {rec.name}: token rate differs from the corpus")
        if rec.embeddings.dim != recordings[0].embeddings.dim:
            raise DataError(f"recording {rec.name}: embedding dimension differs")
        if rec.embeddings.steps != rec.motion.frame_count // d:
            raise DataError(
                f"recording {rec.name}: {rec.embeddings.steps} embeddings for "
                f"{rec.motion.frame_count // d} code steps"
            )

    joint_indices = joint_subset_indices(skeleton, config.joint_subset)

    # canonicalize, then share one corpus-level feature normalization
    canon = [normalize(rec.motion, joint_indices) for rec in recordings]
    raw = [rotation_features(nm.motion, joint_indices) for nm in canon]
    if codebook is None:
        stats = FeatureNorm.fit(np.concatenate(raw, axis=0))
        from .codebook import fit_codebook

        windows = np.concatenate(
            [segment_windows(stats.apply(f), d) for f in raw], axis=0
        )
        centers, _ = fit_codebook(windows, config.codebook_size, config.seed)
        codebook = Codebook(
            centers, d, stats, [skeleton.joint_names[i] for i in joint_indices]
        )
        codebook.validate()
    else:
        stats = codebook.feature_norm

    if phase_basis is None:
        phase_basis = fit_phase_basis(
            [rotational_velocity(f, fps) for f in raw], config.phase_channels
        )

    clips: list[ClipRecord] = []
    for rec, nm in zip(recordings, canon):
        curves = build_latent_curves(
            nm.motion, phase_basis, joint_indices,
            config.phase_fft_window_frames / fps,
        )
        manifold = phase_manifold(curves, config.phase_fft_window_frames)
        feats = stats.apply(rotation_features(nm.motion, joint_indices))
        rec_codes = encode_windows(segment_windows(feats, d), codebook)
        frame_count = rec.motion.frame_count

        for c_idx, (lo, hi) in enumerate(
            split_clips(frame_count, fps, d, rec.word_timings)
        ):
            steps = hi - lo
            audio_windows = [
                window_at(
                    rec.tokens.tokens, rec.tokens.rate, lo + s,
                    config.window_seconds, d, fps,
                ).items.copy()
                for s in range(steps)
            ]
            phase_windows = np.empty((steps, config.n_phase, 2 * phase_basis.channels))
            for s in range(steps):
                start = (lo + s) * d + (d - config.n_phase) // 2
                start = min(max(start, 0), frame_count - config.n_phase)
                phase_windows[s] = manifold.values[start : start + config.n_phase]
            clip_lo, clip_hi = lo * d / fps, hi * d / fps
            in_span = [
                (w, a, b) for (w, a, b) in rec.word_timings
                if a < clip_hi and b > clip_lo
            ]
            clips.append(
                ClipRecord(
                    f"{rec.name}#{c_idx}",
                    CodeSequence(rec_codes[lo:hi], d, fps),
                    audio_windows,
                    rec.embeddings.vectors[lo:hi].copy(),
                    phase_windows,
                    in_span,
                )
            )

    frequency = np.zeros(codebook.size, dtype=np.int64)
    for clip in clips:
        frequency += np.bincount(clip.codes.codes, minlength=codebook.size)

    db = GestureDatabase(
        clips, codebook, phase_basis, skeleton, config, frequency,
        recordings[0].tokens.rate,
    )
    db.validate()
    return db


# ---------------------------------------------------------------------------
# pre-candidates and rank fusion


def pose_precandidate(prev_code: int, cb: Codebook) -> np.ndarray:
    """Euclidean distance from the previous code's window to every code's.

    Distances are taken between de-normalized centroid windows (the linear
    part of decoding); the rotation projection is for output motion only.
    """
    if not 0 <= prev_code < cb.size:
        raise DataError(f"code {prev_code} outside the codebook")
    centers = cb.denormalized_centers()
    return np.linalg.norm(centers - centers[prev_code], axis=1)


def _scan_minimum(db: GestureDatabase, occurrence_mask, code_mask, distance_fn):
    dist = np.full(db.codebook.size, SENTINEL)
    best: list[tuple[int, int] | None] = [None] * db.codebook.size
    for flat, (c_idx, s_idx) in enumerate(db.occurrences):
        if occurrence_mask is not None and not occurrence_mask[flat]:
            continue
        code = int(db.clips[c_idx].codes.codes[s_idx])
        if code_mask is not None and not code_mask[code]:
            continue
        value = distance_fn(db.clips[c_idx], s_idx)
        if value < dist[code]:
            dist[code] = value
            best[code] = (c_idx, s_idx)
    return dist, best


def audio_precandidate(
    query_window,
    db: GestureDatabase,
    occurrence_mask=None,
    code_mask=None,
    normalized: bool | None = None,
):
    """Per-code minimum edit distance over unmasked stored windows.

    Codes without a single unmasked occurrence keep the +inf sentinel.
    Returns (distances, best occurrence per code).
    """
    query = np.ascontiguousarray(np.asarray(query_window), dtype=np.uint32)
    if normalized is None:
        normalized = db.config.normalized_levenshtein
    measure = levenshtein_normalized if normalized else levenshtein
    return _scan_minimum(
        db, occurrence_mask, code_mask,
        lambda clip, s: measure(query, clip.audio_windows[s]),
    )


def text_precandidate(query_embedding, db: GestureDatabase, occurrence_mask=None, code_mask=None):
    """Per-code minimum (1 - cosine) over unmasked stored embeddings."""
    query = np.asarray(query_embedding, dtype=np.float64).ravel()
    if db.clips and query.shape[0] != db.text_dim:
        raise DataError(
            f"query embedding dimension {query.shape[0]} != database {db.text_dim}"
        )
    return _scan_minimum(
        db, occurrence_mask, code_mask,
        lambda clip, s: 1.0 - cosine_similarity(query, clip.text_windows[s]),
    )


def relrank(values) -> np.ndarray:
    """Normalized ascending rank in [0, 1].

    Ties share the lowest position of their tie group; +inf sentinels sort
    (and tie) last.  A single-element array ranks 0.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        raise DataError("cannot rank an empty array")
    if np.any(np.isnan(values)):
        raise DataError("cannot rank NaN values")
    if n == 1:
        return np.zeros(1)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n)
    position = 0
    for i, idx in enumerate(order):
        if i and values[idx] != values[order[i - 1]]:
            position = i
        ranks[idx] = position
    return ranks / (n - 1)


def _kth_smallest(fused: np.ndarray, eligible: np.ndarray, k: int) -> int:
    """Index of the k-th smallest fused score among eligible codes.

    Ties break to the lowest code index.  Sentinel-bearing codes are never
    eligible, so rank artifacts cannot surface unseen gestures.
    """
    candidates = np.flatnonzero(eligible)
    if candidates.size == 0:
        raise DataError("all codes are masked or absent at this step")
    if k > candidates.size:
        raise DataError(f"k={k} exceeds the {candidates.size} selectable codes")
    order = np.lexsort((candidates, fused[candidates]))
    return int(candidates[order[k - 1]])


def select_candidates(
    pose_rank: np.ndarray,
    audio_rank: np.ndarray,
    text_rank: np.ndarray,
    frequency_penalty: np.ndarray,
    weight: float,
    k: int,
    eligible: np.ndarray,
) -> tuple[int, int]:
    """Rank-sum fusion: k-th smallest of R_pose + R_modality + w * R_freq."""
    fused_audio = pose_rank + audio_rank + weight * frequency_penalty
    fused_text = pose_rank + text_rank + weight * frequency_penalty
    return (
        _kth_smallest(fused_audio, eligible, k),
        _kth_smallest(fused_text, eligible, k),
    )


# ---------------------------------------------------------------------------
# search


def _initial_state(db: GestureDatabase, query: MatchQuery, rng: np.random.Generator):
    if query.g_init is not None:
        g = int(query.g_init)
        if not 0 <= g < db.codebook.size:
            raise DataError(f"initial code {g} outside the codebook")
    elif query.init == "frequent":
        g = int(np.argmax(db.code_frequency))
    elif query.init == "random":
        g = int(rng.integers(db.codebook.size))
    else:
        raise DataError(f"unknown init policy {query.init!r}")

    if query.phase_init is not None:
        p = np.asarray(query.phase_init, dtype=np.float64)
    else:
        p = None
        for c_idx, s_idx in db.occurrences:
            if int(db.clips[c_idx].codes.codes[s_idx]) == g:
                p = db.phase_window(c_idx, s_idx)
                break
        if p is None:
            channels = db.phase_basis.channels
            p = np.zeros((db.config.n_phase, 2 * channels))
    if p.shape[0] < db.config.n_phase:
        raise DataError(f"initial phase window needs >= {db.config.n_phase} frames")
    return g, p


def _resolve_step_mask(query: MatchQuery, step: int, n_occurrences: int):
    if query.step_masks is None:
        return None
    if len(query.step_masks) != query.steps:
        raise DataError(
            f"mask length {len(query.step_masks)} != query steps {query.steps}"
        )
    mask = query.step_masks[step]
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] != n_occurrences:
        raise DataError(
            f"step {step}: occurrence mask length {mask.shape[0]} != {n_occurrences}"
        )
    return mask


def search(db: GestureDatabase, query: MatchQuery) -> MatchResult:
    """Generate one code per query step with phase-arbitrated candidates.

    Per step: pose/audio/text pre-candidates, rank fusion per modality,
    then the candidate whose stored phase window continues the running
    phase tail more smoothly wins (ties go to the audio branch).
    """
    if not db.clips:
        raise DataError("empty database")
    cfg = db.config
    steps = query.steps
    if steps < 1:
        raise DataError("query needs at least one step")
    if query.k < 1:
        raise DataError("k must be >= 1")
    if query.code_mask is not None and len(query.code_mask) != db.codebook.size:
        raise DataError("code mask length != codebook size")

    rng = np.random.default_rng(query.seed)
    prev_code, prev_phase = _initial_state(db, query, rng)
    n_occ = len(db.occurrences)
    freq_penalty = db.frequency_penalty

    codes: list[int] = []
    sources: list[str] = []
    traces: list[StepTrace] = []
    for step in range(steps):
        occ_mask = _resolve_step_mask(query, step, n_occ)
        pose_d = pose_precandidate(prev_code, db.codebook)
        window = window_at(
            query.audio.tokens, query.audio.rate, step,
            cfg.window_seconds, cfg.frames_per_code, cfg.fps,
        ).items
        audio_d, audio_occ = audio_precandidate(window, db, occ_mask, query.code_mask)
        text_d, text_occ = text_precandidate(
            query.text.vectors[step], db, occ_mask, query.code_mask
        )

        pose_r = relrank(pose_d)
        audio_r = relrank(audio_d)
        text_r = relrank(text_d)
        fused_a = pose_r + audio_r + query.freq_weight * freq_penalty
        fused_t = pose_r + text_r + query.freq_weight * freq_penalty
        eligible = np.isfinite(audio_d)
        code_a = _kth_smallest(fused_a, eligible, query.k)
        code_t = _kth_smallest(fused_t, eligible, query.k)

        occ_a = audio_occ[code_a]
        occ_t = text_occ[code_t]
        phase_a = db.phase_window(*occ_a)
        phase_t = db.phase_window(*occ_t)
        score_a = continuity_distance(prev_phase, phase_a, cfg.n_phase, cfg.n_stride)
        score_t = continuity_distance(prev_phase, phase_t, cfg.n_phase, cfg.n_stride)

        if score_a <= score_t:
            chosen, source, next_phase = code_a, "audio", phase_a
        else:
            chosen, source, next_phase = code_t, "text", phase_t

        traces.append(
            StepTrace(
                step, prev_code, pose_d, audio_d, text_d, fused_a, fused_t,
                code_a, code_t, occ_a, occ_t, score_a, score_t, chosen, source,
            )
        )
        codes.append(chosen)
        sources.append(source)
        prev_code = chosen
        prev_phase = next_phase

    code_seq = CodeSequence(np.array(codes), cfg.frames_per_code, cfg.fps)
    decoded = decode(code_seq, db.codebook, db.skeleton)
    return MatchResult(np.array(codes), sources, traces, decoded)


# ---------------------------------------------------------------------------
# controllability


def replace_code(
    result: MatchResult, from_code: int, to_code: int, db: GestureDatabase
) -> MatchResult:
    """Swap every occurrence of one code and re-decode the motion."""
    size = db.codebook.size
    for c in (from_code, to_code):
        if not 0 <= c < size:
            raise DataError(f"code {c} outside the codebook")
    codes = np.where(result.codes == from_code, to_code, result.codes)
    decoded = decode(
        CodeSequence(codes, db.config.frames_per_code, db.config.fps),
        db.codebook,
        db.skeleton,
    )
    return MatchResult(codes, list(result.sources), list(result.traces), decoded)


def constrain_codes(db: GestureDatabase, predicate) -> np.ndarray:
    """Evaluate a motion predicate on every decoded code window.

    Returns the boolean searchability mask; raises when nothing passes.
    """
    cfg = db.config
    mask = np.zeros(db.codebook.size, dtype=bool)
    for code in range(db.codebook.size):
        motion = decode(
            CodeSequence(np.array([code]), cfg.frames_per_code, cfg.fps),
            db.codebook,
            db.skeleton,
        )
        mask[code] = bool(predicate(motion))
    if not mask.any():
        raise DataError("constraint rejects every code")
    return mask


def wrist_height_predicate(db: GestureDatabase, threshold: float, joint_name: str | None = None):
    """Predicate: the chosen wrist stays at or above a world-height threshold."""
    skeleton = db.skeleton
    if joint_name is None:
        lowered = [n.lower() for n in skeleton.joint_names]
        for needle in ("lefthand", "left_hand", "lhand", "leftwrist", "left_wrist"):
            hits = [i for i, n in enumerate(lowered) if needle in n.replace(":", "")]
            if hits:
                joint_name = skeleton.joint_names[hits[0]]
                break
        if joint_name is None:
            raise DataError("no wrist-like joint found; pass joint_name explicitly")
    idx = skeleton.index_of(joint_name)

    def predicate(motion: MotionSequence) -> bool:
        positions = forward_kinematics(skeleton, motion).positions
        return bool(positions[:, idx, 1].min() >= threshold)

    return predicate
