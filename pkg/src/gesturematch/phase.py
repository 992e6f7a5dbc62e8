"""Periodicity analysis of latent motion curves.

Each curve window is decomposed by FFT into amplitude, dominant frequency,
offset, and phase shift; per-frame (amplitude, shift) pairs form the phase
manifold used to pick motion candidates with compatible timing.

Conventions
-----------
* Window samples sit at t_n = n * duration / T measured from the window
  start; extracted shifts invert exactly on that grid.
* The spectral angle is taken against a sine carrier, so a pure unshifted
  sine extracts shift 0.
* Latent curves come from a fixed PCA basis over rotational-velocity
  features (fitted once per corpus and persisted), not from a trained
  encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .motion_io import STD_EPSILON, MotionSequence, rotation_features
from .seqsim import cosine_similarity_flagged

AC_ENERGY_EPSILON = 1e-12


@dataclass
class PhaseBasis:
    """PCA projection from velocity features to latent curve channels."""

    mean: np.ndarray               # (features,)
    scale: np.ndarray              # (features,) std with epsilon clamp
    components: np.ndarray         # (channels, features)

    @property
    def channels(self) -> int:
        return self.components.shape[0]


@dataclass
class LatentCurves:
    values: np.ndarray             # (frames, channels)
    fps: float
    window_seconds: float

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]


@dataclass
class PeriodicParams:
    """Per-channel amplitude/frequency/offset/shift of one window."""

    amplitude: np.ndarray
    frequency: np.ndarray          # Hz, mean of the power spectrum
    offset: np.ndarray             # DC level
    shift: np.ndarray              # cycles in [-1/2, 1/2)
    frequency_defined: np.ndarray  # False when the window has no AC energy


@dataclass
class PhaseManifold:
    values: np.ndarray             # (frames, 2 * channels)

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1] // 2


def rotational_velocity(features: np.ndarray, fps: float) -> np.ndarray:
    """Frame-rate-scaled first difference, edge-replicated to keep T rows."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise DataError("velocity needs at least 2 frames")
    vel = np.diff(features, axis=0) * fps
    return np.vstack([vel[:1], vel])


def fit_phase_basis(velocity_features_list, channels: int) -> PhaseBasis:
    """Fit the latent projection on pooled corpus velocities.

    Components are the top eigenvectors of the z-scored covariance, sign
    fixed so the largest-magnitude entry is positive (bit-deterministic).
    """
    pooled = np.concatenate([np.asarray(v, dtype=np.float64) for v in velocity_features_list])
    if pooled.shape[0] < 2:
        raise DataError("need at least 2 velocity frames to fit a basis")
    dim = pooled.shape[1]
    if channels > dim:
        raise DataError(f"cannot extract {channels} channels from {dim} features")
    mean = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    scale = np.where(scale < STD_EPSILON, STD_EPSILON, scale)
    z = (pooled - mean) / scale
    cov = (z.T @ z) / max(z.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:channels]
    comps = eigvecs[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PhaseBasis(mean, scale, comps)


def build_latent_curves(
    motion: MotionSequence,
    basis: PhaseBasis,
    joint_indices=None,
    window_seconds: float | None = None,
) -> LatentCurves:
    """Project a sequence's rotational velocities through the fitted basis."""
    feats = rotation_features(motion, joint_indices)
    vel = rotational_velocity(feats, motion.fps)
    z = (vel - basis.mean) / basis.scale
    values = z @ basis.components.T
    return LatentCurves(values, motion.fps, window_seconds or values.shape[0] / motion.fps)


def _wrap_cycles(s):
    return s - np.floor(np.asarray(s, dtype=np.float64) + 0.5)


def periodic_params_1d(window, duration_seconds: float):
    """Periodic parameters of a single-channel window.

    Returns (amplitude, frequency, offset, shift, frequency_defined).
    Constant windows have no AC energy: amplitude 0, offset = mean, and
    frequency/shift reported as 0 with the defined-flag cleared.
    """
    window = np.asarray(window, dtype=np.float64)
    t = window.shape[0]
    if t < 2:
        raise DataError("periodic window needs at least 2 samples")
    if duration_seconds <= 0:
        raise DataError("window duration must be positive")
    coeffs = np.fft.rfft(window)
    power = (2.0 / t) * np.abs(coeffs) ** 2
    ac = power[1:]
    offset = float(coeffs[0].real / t)
    total = float(ac.sum())
    if total <= AC_ENERGY_EPSILON:
        return 0.0, 0.0, offset, 0.0, False
    amplitude = float(np.sqrt((2.0 / t) * total))
    freqs = np.arange(1, ac.shape[0] + 1) / duration_seconds
    frequency = float(np.dot(freqs, ac) / total)
    star = int(round(frequency * duration_seconds))
    star = min(max(star, 1), ac.shape[0])
    # angle against the sine carrier: multiplying by i rotates the FFT's
    # cosine convention onto sine, so an unshifted sine yields shift 0
    shift = float(_wrap_cycles(-np.angle(1j * coeffs[star]) / (2.0 * np.pi)))
    return amplitude, frequency, offset, shift, True


def periodic_params(window: np.ndarray, duration_seconds: float) -> PeriodicParams:
    """Per-channel parameters of a (T, channels) window."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 1:
        window = window[:, None]
    cols = [periodic_params_1d(window[:, i], duration_seconds) for i in range(window.shape[1])]
    a, f, b, s, ok = (np.array(v) for v in zip(*cols))
    return PeriodicParams(a, f, b, s, ok.astype(bool))


def window_times(samples: int, duration_seconds: float) -> np.ndarray:
    """Canonical sample times of an analysis window (start-relative)."""
    return np.arange(samples) * (duration_seconds / samples)


def reconstruct_curve(
    amplitude, frequency, offset, shift, times: np.ndarray
) -> np.ndarray:
    """Evaluate amplitude * sin(2pi * (frequency * t - shift)) + offset."""
    times = np.asarray(times, dtype=np.float64)
    a = np.atleast_1d(np.asarray(amplitude, dtype=np.float64))
    f = np.atleast_1d(np.asarray(frequency, dtype=np.float64))
    b = np.atleast_1d(np.asarray(offset, dtype=np.float64))
    s = np.atleast_1d(np.asarray(shift, dtype=np.float64))
    curve = a * np.sin(2.0 * np.pi * (f * times[:, None] - s)) + b
    return curve[:, 0] if curve.shape[1] == 1 else curve


def phase_manifold(curves: LatentCurves, window_frames: int) -> PhaseManifold:
    """Per-frame (A sin 2piS, A cos 2piS) pairs from sliding windows.

    The window is centered on each frame and clipped at the sequence
    edges (clipping biases edge amplitudes; no padding is invented).
    """
    if window_frames < 1 or window_frames % 2 == 0:
        raise DataError("window_frames must be a positive odd count")
    t = curves.frame_count
    if window_frames > t:
        raise DataError(f"window of {window_frames} frames exceeds {t}-frame sequence")
    half = window_frames // 2
    m = curves.values.shape[1]
    out = np.zeros((t, 2 * m))
    for frame in range(t):
        lo = max(0, frame - half)
        hi = min(t, frame + half + 1)
        window = curves.values[lo:hi]
        params = periodic_params(window, (hi - lo) / curves.fps)
        angle = 2.0 * np.pi * params.shift
        out[frame, 0::2] = params.amplitude * np.sin(angle)
        out[frame, 1::2] = params.amplitude * np.cos(angle)
    return PhaseManifold(out)


def junction_vectors(
    prev: np.ndarray, cand: np.ndarray, n_phase: int, n_stride: int
) -> tuple[np.ndarray, np.ndarray]:
    """Two equal-length splices across the previous/candidate junction."""
    prev = np.asarray(prev, dtype=np.float64)
    cand = np.asarray(cand, dtype=np.float64)
    if not 0 < n_stride < n_phase:
        raise DataError("need 0 < n_stride < n_phase")
    if prev.shape[0] < n_phase or cand.shape[0] < n_phase:
        raise DataError(f"both phase windows need at least {n_phase} frames")
    u = np.concatenate([prev[-(n_phase - n_stride):], cand[:n_stride]]).ravel()
    v = np.concatenate([prev[-n_stride:], cand[: n_phase - n_stride]]).ravel()
    return u, v


def continuity_distance(
    prev: np.ndarray, cand: np.ndarray, n_phase: int, n_stride: int
) -> float:
    """1 - cosine similarity between the two junction splices.

    All-zero junctions (no periodic energy on either side) are degenerate
    and score 0, leaving the branch choice to the caller's tie rule.
    """
    u, v = junction_vectors(prev, cand, n_phase, n_stride)
    if not u.any() and not v.any():
        return 0.0
    value, _ = cosine_similarity_flagged(u, v)
    return 1.0 - value
