"""Shared builders for synthetic skeletons, motions, and toy databases."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gesturematch.codebook import Codebook, CodeSequence
from gesturematch.config import load_config
from gesturematch.matcher import ClipRecord, GestureDatabase
from gesturematch.motion_io import FeatureNorm, MotionSequence, Skeleton, axis_rotation
from gesturematch.phase import PhaseBasis
from gesturematch.seqsim import EmbeddingSequence, TokenSequence, window_at


def make_chain_skeleton(names=None, offsets=None) -> Skeleton:
    names = names or ["Hips", "Spine", "Head"]
    n = len(names)
    parents = np.arange(-1, n - 1)
    if offsets is None:
        offsets = np.zeros((n, 3))
        offsets[1:, 1] = 1.0
    channels = [["Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation"]]
    channels += [["Zrotation", "Xrotation", "Yrotation"] for _ in range(n - 1)]
    return Skeleton(names, parents, np.asarray(offsets, dtype=float), channels)


def make_sine_motion(skeleton: Skeleton, frames: int, fps: float, seed: int = 0) -> MotionSequence:
    rng = np.random.default_rng(seed)
    time = np.arange(frames) / fps
    rotations = np.broadcast_to(np.eye(3), (frames, skeleton.joint_count, 3, 3)).copy()
    for j in range(skeleton.joint_count):
        freq = rng.uniform(0.2, 1.5)
        amp = rng.uniform(5.0, 50.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        angles = amp * np.sin(2 * np.pi * freq * time + phase)
        rotations[:, j] = axis_rotation(int(rng.integers(3)), angles)
    return MotionSequence(fps, rotations, np.zeros((frames, 3)), skeleton)


def toy_config(codebook_size: int, **kw):
    base = dict(
        fps=2.0,
        frames_per_code=1,
        codebook_size=codebook_size,
        phase_channels=1,
        n_phase=4,
        n_stride=1,
        window_seconds=0.5,
        phase_fft_window_frames=3,
        joint_subset=("J0",),
    )
    base.update(kw)
    return load_config(None, base)


def toy_skeleton() -> Skeleton:
    return Skeleton(
        ["J0"], np.array([-1]), np.zeros((1, 3)), [["Zrotation", "Xrotation", "Yrotation"]]
    )


def grid(rng: np.random.Generator, shape, lo=-8, hi=8, quarter=True):
    """Random values on an exact binary-fraction grid (k/4)."""
    ints = rng.integers(lo * 4, hi * 4 + 1, size=shape).astype(np.float64)
    return ints / 4.0 if quarter else ints


def make_toy_db(
    rng: np.random.Generator,
    n_codes: int,
    clip_codes: list[list[int]],
    token_rate: float = 4.0,
    embed_dim: int = 3,
    centers: np.ndarray | None = None,
    std: np.ndarray | None = None,
    mean: np.ndarray | None = None,
    tokens_per_clip: list[np.ndarray] | None = None,
    texts_per_clip: list[np.ndarray] | None = None,
    zero_phase_rate: float = 0.15,
) -> tuple[GestureDatabase, list[TokenSequence]]:
    """Hand-assembled database on exact value grids (bit-reproducible)."""
    cfg = toy_config(n_codes)
    skeleton = toy_skeleton()
    if centers is None:
        centers = grid(rng, (n_codes, 9))
    if std is None:
        std = np.choose(rng.integers(0, 3, 9), [0.5, 1.0, 2.0])
    if mean is None:
        mean = grid(rng, 9)
    norm = FeatureNorm(np.asarray(mean, float), np.asarray(std, float), np.zeros(9, bool))
    cb = Codebook(np.asarray(centers, float), 1, norm, ["J0"])
    basis = PhaseBasis(np.zeros(9), np.ones(9), np.ones((1, 9)))

    clips = []
    token_streams = []
    for idx, codes in enumerate(clip_codes):
        steps = len(codes)
        # token stream long enough to cover every window of this clip
        need = int((steps + 1) * cfg.frames_per_code / cfg.fps * token_rate) + 4
        if tokens_per_clip is not None:
            stream = tokens_per_clip[idx]
        else:
            stream = rng.integers(0, 6, size=need).astype(np.uint32)
        tseq = TokenSequence(stream, token_rate)
        token_streams.append(tseq)
        windows = [
            window_at(tseq.tokens, token_rate, s, cfg.window_seconds,
                      cfg.frames_per_code, cfg.fps).items.copy()
            for s in range(steps)
        ]
        if texts_per_clip is not None:
            texts = np.asarray(texts_per_clip[idx], float)
        else:
            texts = grid(rng, (steps, embed_dim), quarter=False)
        phases = grid(rng, (steps, cfg.n_phase, 2))
        for s in range(steps):
            if rng.random() < zero_phase_rate:
                phases[s] = 0.0
        clips.append(
            ClipRecord(
                f"clip{idx}",
                CodeSequence(np.asarray(codes), 1, cfg.fps),
                windows,
                texts,
                phases,
            )
        )
    freq = np.zeros(n_codes, dtype=np.int64)
    for codes in clip_codes:
        freq += np.bincount(np.asarray(codes), minlength=n_codes)
    db = GestureDatabase(clips, cb, basis, skeleton, cfg, freq, token_rate)
    db.validate()
    return db, token_streams


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for key in ("passed", "failed"):
        reports += [r for r in terminalreporter.stats.get(key, []) if r.when == "call"]
    acceptance = [r for r in reports if "test_acceptance" in r.nodeid]
    if not acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for r in sorted(acceptance, key=lambda r: r.nodeid):
        status = "PASS" if r.passed else "FAIL"
        terminalreporter.write_line(f"{status}: {r.nodeid.split('::')[-1]}")
