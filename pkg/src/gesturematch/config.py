"""Engine configuration: defaults, plain-text config files, CLI overrides.

Config files are ``key = value`` lines; ``#`` starts a comment.  List values
are comma separated.  Every knob has a default so the synthetic demo runs
with zero flags.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UsageError

# Upper-body joints used for gesture features when present in the skeleton.
DEFAULT_JOINT_SUBSET = (
    "Spine",
    "Spine1",
    "Spine2",
    "Spine3",
    "Neck",
    "Neck1",
    "Head",
    "LeftShoulder",
    "RightShoulder",
    "LeftArm",
    "RightArm",
    "LeftForeArm",
    "RightForeArm",
    "LeftHand",
    "RightHand",
)

TOKEN_VOCAB_BOUND = 102400  # two 320-way groups combined


@dataclass
class EngineConfig:
    fps: float = 60.0
    frames_per_code: int = 8           # motion frames per codebook entry
    codebook_size: int = 512
    phase_channels: int = 8
    n_phase: int = 8                   # phase-window frames compared per step
    n_stride: int = 3                  # junction stride for continuity checks
    window_seconds: float = 0.5        # half-width of audio/text context windows
    k: int = 1                         # candidate rank taken per modality
    freq_weight: float = 0.05          # frequency-penalty weight in rank fusion
    seed: int = 0
    init: str = "random"               # initial code policy: random | frequent
    joint_subset: tuple[str, ...] = DEFAULT_JOINT_SUBSET
    hist_bin_width: float = 0.5        # speed-histogram bin width (units/s)
    hist_max_speed: float = 50.0       # overflow folded into the last bin
    phase_fft_window_frames: int = 61  # odd sliding-window length for phase extraction
    vocab_bound: int = TOKEN_VOCAB_BOUND
    normalized_levenshtein: bool = False

    def validate(self) -> None:
        if self.fps <= 0:
            raise UsageError("fps must be positive")
        if self.frames_per_code < 1:
            raise UsageError("frames_per_code must be >= 1")
        if self.codebook_size < 1:
            raise UsageError("codebook_size must be >= 1")
        if self.phase_channels < 1:
            raise UsageError("phase_channels must be >= 1")
        if not 0 < self.n_stride < self.n_phase:
            raise UsageError("need 0 < n_stride < n_phase")
        if self.window_seconds <= 0:
            raise UsageError("window_seconds must be positive")
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if self.phase_fft_window_frames < 1 or self.phase_fft_window_frames % 2 == 0:
            raise UsageError("phase_fft_window_frames must be a positive odd count")
        if self.init not in ("random", "frequent"):
            raise UsageError("init must be 'random' or 'frequent'")

    def hash(self) -> str:
        """Stable digest of the configuration, embedded in reports."""
        text = "\n".join(
            f"{f.name}={getattr(self, f.name)!r}" for f in dataclasses.fields(self)
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(name: str, raw: str, current):
    if isinstance(current, bool):
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise UsageError(f"config key {name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw.strip()


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> EngineConfig:
    """Build a config from defaults, an optional file, and explicit overrides."""
    cfg = EngineConfig()
    fields = {f.name: f for f in dataclasses.fields(EngineConfig)}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            name, raw = (part.strip() for part in line.split("=", 1))
            if name not in fields:
                raise UsageError(f"{path}:{lineno}: unknown config key {name!r}")
            try:
                setattr(cfg, name, _coerce(name, raw, getattr(cfg, name)))
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from exc
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in fields:
            raise UsageError(f"unknown config key {name!r}")
        setattr(cfg, name, value)
    cfg.validate()
    return cfg
