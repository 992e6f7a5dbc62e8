"""BVH motion ingestion: skeletons, rotation-matrix features, kinematics.

Format notes
------------
* Euler channels are intrinsic rotations applied in the per-joint channel
  order; the composite matrix is the product of the per-axis matrices in
  listed order.  BVH never declares its convention explicitly, so this is
  stated here as the engine convention.
* Axis matrices are built with degree-exact trigonometry, so right-angle
  fixtures produce exact 0/±1 entries.
* Non-root translation channels are read and discarded; offsets are
  authoritative below the root.
* The facing estimator (cross product of the shoulder axis with world up,
  frame 0) is likewise an engine convention, not an external standard.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.special import cosdg, sindg

from .errors import BvhParseError, DataError

_POSITION_TAGS = ("Xposition", "Yposition", "Zposition")
_ROTATION_TAGS = ("Xrotation", "Yrotation", "Zrotation")
_AXIS_OF = {"Xrotation": 0, "Yrotation": 1, "Zrotation": 2}

ORTHONORMAL_TOL = 1e-4
STD_EPSILON = 1e-8


@dataclass
class Skeleton:
    """Joint tree with fixed offsets and per-joint channel declarations."""

    joint_names: list[str]
    parents: np.ndarray            # (J,) int, -1 for the root
    offsets: np.ndarray            # (J, 3) float
    channel_layout: list[list[str]]
    end_offsets: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def validate(self) -> None:
        parents = np.asarray(self.parents)
        if int(np.sum(parents == -1)) != 1:
            raise DataError("skeleton must have exactly one root")
        if not np.all(np.isfinite(self.offsets)):
            raise DataError("skeleton offsets must be finite")
        for i, p in enumerate(parents):
            if p >= i:
                raise DataError("skeleton parents must precede children")

    def index_of(self, name: str) -> int:
        return self.joint_names.index(name)


@dataclass
class MotionSequence:
    """Per-frame 3x3 rotation blocks plus the root trajectory."""

    fps: float
    rotations: np.ndarray          # (T, J, 3, 3) float
    root_positions: np.ndarray     # (T, 3) float
    skeleton: Skeleton

    @property
    def frame_count(self) -> int:
        return self.rotations.shape[0]

    def validate(self) -> None:
        if self.fps <= 0:
            raise DataError("fps must be positive")
        if self.frame_count < 1:
            raise DataError("motion needs at least one frame")
        r = self.rotations
        gram = np.einsum("tjab,tjac->tjbc", r, r)
        eye = np.eye(3)
        if np.max(np.abs(gram - eye)) > ORTHONORMAL_TOL:
            raise DataError("rotation blocks are not orthonormal")
        if np.max(np.abs(np.linalg.det(r) - 1.0)) > ORTHONORMAL_TOL:
            raise DataError("rotation blocks must have determinant +1")

    def copy(self) -> "MotionSequence":
        return MotionSequence(
            self.fps, self.rotations.copy(), self.root_positions.copy(), self.skeleton
        )


@dataclass
class PositionSequence:
    """Per-frame joint positions (or a time derivative thereof)."""

    fps: float
    positions: np.ndarray          # (T, J, 3) float


@dataclass
class FeatureNorm:
    """Per-channel mean/std with zero-variance channels clamped to epsilon."""

    mean: np.ndarray
    std: np.ndarray
    clamped: np.ndarray            # bool mask of channels whose std was clamped

    @classmethod
    def fit(cls, rows: np.ndarray) -> "FeatureNorm":
        rows = np.asarray(rows, dtype=np.float64)
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        clamped = std < STD_EPSILON
        std = np.where(clamped, STD_EPSILON, std)
        return cls(mean, std, clamped)

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.std

    def invert(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=np.float64) * self.std + self.mean


@dataclass
class NormalizedMotion:
    """Canonicalized sequence plus its z-scored feature matrix."""

    motion: MotionSequence
    features: np.ndarray           # (T, n_joints * 9) z-scored
    stats: FeatureNorm
    joint_indices: list[int]
    flags: list[str] = field(default_factory=list)


def axis_rotation(axis: int, degrees) -> np.ndarray:
    """Rotation matrices about a world axis, exact at multiples of 90 deg."""
    degrees = np.asarray(degrees, dtype=np.float64)
    c = cosdg(degrees)
    s = sindg(degrees)
    out = np.zeros(degrees.shape + (3, 3))
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    out[..., axis, axis] = 1.0
    out[..., i, i] = c
    out[..., j, j] = c
    out[..., i, j] = -s
    out[..., j, i] = s
    return out


# ---------------------------------------------------------------------------
# parsing


class _LineCursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> tuple[int, list[str]]:
        while self.pos < len(self.lines):
            self.pos += 1
            tokens = self.lines[self.pos - 1].split()
            if tokens:
                return self.pos, tokens
        raise BvhParseError("unexpected end of file", len(self.lines))

    def peek(self) -> list[str] | None:
        saved = self.pos
        try:
            _, tokens = self.next()
        except BvhParseError:
            return None
        self.pos = saved
        return tokens


def _as_text(source) -> str:
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        return Path(source).read_text()
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    raise DataError(f"cannot read BVH from {type(source).__name__}")


def _read_offset(cur: _LineCursor) -> np.ndarray:
    lineno, tokens = cur.next()
    if tokens[0] != "OFFSET" or len(tokens) != 4:
        raise BvhParseError("expected 'OFFSET x y z'", lineno)
    try:
        return np.array([float(v) for v in tokens[1:]])
    except ValueError:
        raise BvhParseError("non-numeric OFFSET", lineno) from None


def _read_channels(cur: _LineCursor) -> list[str]:
    lineno, tokens = cur.next()
    if tokens[0] != "CHANNELS" or len(tokens) < 2:
        raise BvhParseError("expected CHANNELS declaration", lineno)
    try:
        count = int(tokens[1])
    except ValueError:
        raise BvhParseError("non-integer channel count", lineno) from None
    tags = tokens[2:]
    if len(tags) != count:
        raise BvhParseError(
            f"CHANNELS declares {count} but lists {len(tags)}", lineno
        )
    for tag in tags:
        if tag not in _POSITION_TAGS and tag not in _ROTATION_TAGS:
            raise BvhParseError(f"unknown channel tag {tag!r}", lineno)
    return tags


def _expect(cur: _LineCursor, literal: str) -> int:
    lineno, tokens = cur.next()
    if tokens[0] != literal:
        raise BvhParseError(f"expected {literal!r}, found {tokens[0]!r}", lineno)
    return lineno


def parse_bvh(source) -> tuple[Skeleton, MotionSequence]:
    """Parse BVH text (path, str, bytes, or file-like) into engine types."""
    cur = _LineCursor(_as_text(source))

    _expect(cur, "HIERARCHY")
    lineno, tokens = cur.next()
    if tokens[0] != "ROOT":
        raise BvhParseError("expected ROOT after HIERARCHY", lineno)

    names: list[str] = []
    parents: list[int] = []
    offsets: list[np.ndarray] = []
    channels: list[list[str]] = []
    end_offsets: dict[int, np.ndarray] = {}
    stack: list[int] = []

    def open_joint(name: str, parent: int) -> None:
        names.append(name)
        parents.append(parent)
        _expect(cur, "{")
        offsets.append(_read_offset(cur))
        channels.append(_read_channels(cur))
        stack.append(len(names) - 1)

    open_joint("_".join(tokens[1:]), -1)
    while stack:
        lineno, tokens = cur.next()
        if tokens[0] == "JOINT":
            open_joint("_".join(tokens[1:]), stack[-1])
        elif tokens[0] == "End":
            _expect(cur, "{")
            end_offsets[stack[-1]] = _read_offset(cur)
            _expect(cur, "}")
        elif tokens[0] == "}":
            stack.pop()
        else:
            raise BvhParseError(f"unexpected token {tokens[0]!r} in hierarchy", lineno)

    _expect(cur, "MOTION")
    lineno, tokens = cur.next()
    if tokens[0] != "Frames:" or len(tokens) != 2:
        raise BvhParseError("expected 'Frames: N'", lineno)
    try:
        frame_count = int(tokens[1])
    except ValueError:
        raise BvhParseError("non-integer frame count", lineno) from None
    lineno, tokens = cur.next()
    if tokens[:2] != ["Frame", "Time:"] or len(tokens) != 3:
        raise BvhParseError("expected 'Frame Time: t'", lineno)
    try:
        frame_time = float(tokens[2])
    except ValueError:
        raise BvhParseError("non-numeric frame time", lineno) from None
    if frame_time <= 0:
        raise BvhParseError("frame time must be positive", lineno)

    width = sum(len(ch) for ch in channels)
    rows = np.zeros((frame_count, width))
    for f in range(frame_count):
        if cur.peek() is None:
            raise BvhParseError(
                f"MOTION declares {frame_count} frames but provides {f}",
                len(cur.lines),
            )
        lineno, tokens = cur.next()
        if len(tokens) != width:
            raise BvhParseError(
                f"frame row has {len(tokens)} values, expected {width}", lineno
            )
        try:
            rows[f] = [float(v) for v in tokens]
        except ValueError:
            raise BvhParseError("non-numeric frame value", lineno) from None
    extra = cur.peek()
    if extra is not None:
        raise BvhParseError(
            f"MOTION declares {frame_count} frames but more rows follow", cur.pos + 1
        )

    skeleton = Skeleton(names, np.array(parents), np.array(offsets), channels, end_offsets)
    skeleton.validate()

    joint_count = len(names)
    rotations = np.broadcast_to(
        np.eye(3), (frame_count, joint_count, 3, 3)
    ).copy()
    root_positions = np.zeros((frame_count, 3))
    col = 0
    for j, tags in enumerate(channels):
        for tag in tags:
            values = rows[:, col]
            col += 1
            if tag in _POSITION_TAGS:
                if j == 0:
                    root_positions[:, _POSITION_TAGS.index(tag)] = values
                continue
            rotations[:, j] = rotations[:, j] @ axis_rotation(_AXIS_OF[tag], values)

    motion = MotionSequence(1.0 / frame_time, rotations, root_positions, skeleton)
    motion.validate()
    return skeleton, motion


# ---------------------------------------------------------------------------
# emission


def _rotation_order(tags: list[str]) -> str:
    return "".join(tag[0] for tag in tags if tag in _ROTATION_TAGS)


def emit_bvh(skeleton: Skeleton, motion: MotionSequence) -> str:
    """Render a skeleton + motion back to BVH text.

    Values are printed with shortest round-trip float formatting, so
    parse -> emit -> parse is stable well below the 1e-6 contract.
    """
    children: list[list[int]] = [[] for _ in range(skeleton.joint_count)]
    root = 0
    for i, p in enumerate(skeleton.parents):
        if p == -1:
            root = i
        else:
            children[p].append(i)

    out = io.StringIO()
    out.write("HIERARCHY\n")

    def write_joint(j: int, depth: int) -> None:
        pad = "\t" * depth
        kind = "ROOT" if skeleton.parents[j] == -1 else "JOINT"
        out.write(f"{pad}{kind} {skeleton.joint_names[j]}\n{pad}{{\n")
        ox, oy, oz = (float(v) for v in skeleton.offsets[j])
        out.write(f"{pad}\tOFFSET {ox!r} {oy!r} {oz!r}\n")
        tags = skeleton.channel_layout[j]
        out.write(f"{pad}\tCHANNELS {len(tags)} {' '.join(tags)}".rstrip() + "\n")
        if not children[j]:
            ex, ey, ez = (float(v) for v in skeleton.end_offsets.get(j, np.zeros(3)))
            out.write(f"{pad}\tEnd Site\n{pad}\t{{\n")
            out.write(f"{pad}\t\tOFFSET {ex!r} {ey!r} {ez!r}\n{pad}\t}}\n")
        for c in children[j]:
            write_joint(c, depth + 1)
        out.write(f"{pad}}}\n")

    write_joint(root, 0)

    out.write("MOTION\n")
    out.write(f"Frames: {motion.frame_count}\n")
    out.write(f"Frame Time: {1.0 / motion.fps!r}\n")

    eulers: list[np.ndarray | None] = []
    for j, tags in enumerate(skeleton.channel_layout):
        order = _rotation_order(tags)
        if order:
            eulers.append(
                Rotation.from_matrix(motion.rotations[:, j]).as_euler(order, degrees=True)
            )
        else:
            eulers.append(None)

    for f in range(motion.frame_count):
        values: list[float] = []
        for j, tags in enumerate(skeleton.channel_layout):
            rot_i = 0
            for tag in tags:
                if tag in _POSITION_TAGS:
                    if j == root:
                        values.append(motion.root_positions[f, _POSITION_TAGS.index(tag)])
                    else:
                        values.append(skeleton.offsets[j, _POSITION_TAGS.index(tag)])
                else:
                    values.append(eulers[j][f, rot_i])
                    rot_i += 1
        out.write(" ".join(repr(float(v)) for v in values) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# kinematics and features


def _fk_full(skeleton: Skeleton, motion: MotionSequence) -> tuple[np.ndarray, np.ndarray]:
    # chain with the root at the origin, translating once at the end, so
    # shifting root_positions shifts every joint by exactly that vector
    t, j = motion.frame_count, skeleton.joint_count
    positions = np.zeros((t, j, 3))
    globals_ = np.zeros((t, j, 3, 3))
    for i in range(j):
        p = skeleton.parents[i]
        if p == -1:
            globals_[:, i] = motion.rotations[:, i]
        else:
            positions[:, i] = positions[:, p] + np.einsum(
                "tab,b->ta", globals_[:, p], skeleton.offsets[i]
            )
            globals_[:, i] = globals_[:, p] @ motion.rotations[:, i]
    return positions + motion.root_positions[:, None, :], globals_


def forward_kinematics(skeleton: Skeleton, motion: MotionSequence) -> PositionSequence:
    """World-space joint positions by chaining rotations down the tree."""
    if motion.skeleton is not skeleton and motion.skeleton.joint_names != skeleton.joint_names:
        raise DataError("motion does not belong to this skeleton")
    positions, _ = _fk_full(skeleton, motion)
    return PositionSequence(motion.fps, positions)


def finite_difference(seq: PositionSequence, order: int) -> PositionSequence:
    """Iterated symmetric differences scaled by fps^order; drops boundaries.

    The k-th difference of a degree-k polynomial trajectory is exactly its
    constant k-th derivative, so order 2 and 3 serve directly as
    acceleration and jerk estimates.
    """
    if order not in (1, 2, 3):
        raise DataError("order must be 1, 2 or 3")
    if seq.positions.shape[0] <= order:
        raise DataError(f"need more than {order} frames, got {seq.positions.shape[0]}")
    diffed = np.diff(seq.positions, n=order, axis=0) * (seq.fps ** order)
    return PositionSequence(seq.fps, diffed)


def joint_subset_indices(skeleton: Skeleton, names) -> list[int]:
    """Indices of named joints; all joints when none of the names match."""
    present = [skeleton.joint_names.index(n) for n in names if n in skeleton.joint_names]
    return present if present else list(range(skeleton.joint_count))


def rotation_features(motion: MotionSequence, joint_indices=None) -> np.ndarray:
    """Flattened per-frame rotation blocks, (T, len(subset) * 9)."""
    if joint_indices is None:
        joint_indices = range(motion.rotations.shape[1])
    sel = motion.rotations[:, list(joint_indices)]
    return sel.reshape(sel.shape[0], -1)


def _facing_rotation(skeleton: Skeleton, motion: MotionSequence, flags: list[str]) -> np.ndarray:
    lefts = [i for i, n in enumerate(skeleton.joint_names) if "shoulder" in n.lower() and n.lower().lstrip("_").startswith(("l", "left"))]
    rights = [i for i, n in enumerate(skeleton.joint_names) if "shoulder" in n.lower() and n.lower().lstrip("_").startswith(("r", "right"))]
    if not lefts or not rights:
        flags.append("facing-skipped:no-shoulder-joints")
        return np.eye(3)
    positions, _ = _fk_full(skeleton, motion)
    axis = positions[0, lefts[0]] - positions[0, rights[0]]
    forward = np.cross(axis, np.array([0.0, 1.0, 0.0]))
    forward[1] = 0.0
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        flags.append("facing-skipped:degenerate-shoulder-axis")
        return np.eye(3)
    forward /= norm
    angle = np.arctan2(forward[0], forward[2])
    c, s = np.cos(-angle), np.sin(-angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def normalize(
    motion: MotionSequence,
    joint_indices=None,
    stats: FeatureNorm | None = None,
) -> NormalizedMotion:
    """Canonicalize a sequence and z-score its rotation features.

    The root trajectory is zeroed, the frame-0 facing direction is rotated
    onto +Z, and features are z-scored (with the supplied corpus stats, or
    stats fitted from this sequence).  Zero-variance channels are clamped
    to epsilon and flagged.
    """
    if motion.frame_count < 2:
        raise DataError("normalize needs at least 2 frames")
    skeleton = motion.skeleton
    flags: list[str] = []
    align = _facing_rotation(skeleton, motion, flags)

    canonical = motion.copy()
    canonical.root_positions[:] = 0.0
    root = int(np.flatnonzero(np.asarray(skeleton.parents) == -1)[0])
    canonical.rotations[:, root] = align @ canonical.rotations[:, root]

    if joint_indices is None:
        joint_indices = list(range(skeleton.joint_count))
    feats = rotation_features(canonical, joint_indices)
    if stats is None:
        stats = FeatureNorm.fit(feats)
    if np.any(stats.clamped):
        flags.append("zero-variance-channels-clamped")
    return NormalizedMotion(canonical, stats.apply(feats), stats, list(joint_indices), flags)
