"""Command-line surface: fit, build-db, match, metrics, inspect, demo.

Exit codes: 0 success, 1 usage error, 2 data error.  Errors print one
machine-parsable ``ERROR: <kind>: <message>`` line on stderr.  All
commands are bit-deterministic for fixed inputs and --seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .codebook import CodeSequence, code_histogram, fit_codebook, top_codes
from .config import EngineConfig, load_config
from .dbio import (
    load_codebook_artifacts,
    load_database,
    save_codebook_artifacts,
    save_database,
)
from .errors import DataError, EngineError, UsageError
from .formats import (
    read_beats,
    read_embeddings,
    read_json,
    read_timings,
    read_tokens,
    write_beats,
    write_embeddings,
    write_timings,
    write_tokens,
)
from .matcher import (
    GestureDatabase,
    MatchQuery,
    RecordingInput,
    build_database,
    constrain_codes,
    replace_code,
    search,
    wrist_height_predicate,
)
from .metrics import (
    average_acceleration,
    average_jerk,
    beat_align,
    cca_first,
    diversity,
    fgd_raw,
    gesture_beats,
    hellinger_average,
    mean_and_spread,
)
from .motion_io import (
    FeatureNorm,
    MotionSequence,
    Skeleton,
    emit_bvh,
    forward_kinematics,
    joint_subset_indices,
    normalize,
    parse_bvh,
    rotation_features,
)
from .phase import fit_phase_basis, rotational_velocity
from .seqsim import EmbeddingSequence, TokenSequence, KERNEL_BACKEND


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--fps", type=float)
    p.add_argument("--frames-per-code", type=int, dest="frames_per_code")
    p.add_argument("--codebook-size", type=int, dest="codebook_size")
    p.add_argument("--phase-channels", type=int, dest="phase_channels")
    p.add_argument("--n-phase", type=int, dest="n_phase")
    p.add_argument("--n-stride", type=int, dest="n_stride")
    p.add_argument("--window-seconds", type=float, dest="window_seconds")
    p.add_argument("--freq-weight", type=float, dest="freq_weight")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=("random", "frequent"))
    p.add_argument(
        "--phase-window-frames", type=int, dest="phase_fft_window_frames",
        help="odd sliding-window length for phase extraction",
    )
    p.add_argument("--joint-subset", dest="joint_subset",
                   help="comma-separated joint names for gesture features")


def _config_from_args(args) -> EngineConfig:
    names = (
        "fps", "frames_per_code", "codebook_size", "phase_channels", "n_phase",
        "n_stride", "window_seconds", "freq_weight", "k", "seed", "init",
        "phase_fft_window_frames",
    )
    overrides = {n: getattr(args, n, None) for n in names}
    subset = getattr(args, "joint_subset", None)
    if subset is not None:
        overrides["joint_subset"] = tuple(s.strip() for s in subset.split(",") if s.strip())
    return load_config(getattr(args, "config", None), overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="gesturematch", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the codebook and phase basis on a BVH corpus")
    p.add_argument("--motion-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("build-db", help="assemble the searchable clip database")
    p.add_argument("--motion-dir", type=Path, required=True)
    p.add_argument("--tokens-dir", type=Path)
    p.add_argument("--embeddings-dir", type=Path)
    p.add_argument("--timings-dir", type=Path)
    p.add_argument("--codebook", type=Path, help="artifacts from a previous fit")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("match", help="run a query against a database")
    p.add_argument("--db", type=Path, required=True)
    p.add_argument("--tokens", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--freq-weight", type=float, dest="freq_weight")
    p.add_argument("--init", choices=("random", "frequent"))
    p.add_argument("--g-init", type=int, dest="g_init", help="explicit initial code")
    p.add_argument("--mask", help="per-step 0/1 list (inline or @file); 1 applies the constraint")
    p.add_argument("--replace", help="FROM:TO code replacement after search")
    p.add_argument("--constraint", help="wrist-above:HEIGHT search restriction")
    p.add_argument("--constraint-joint", dest="constraint_joint")

    p = sub.add_parser("metrics", help="objective evaluation of generated motion")
    p.add_argument("--ref-dir", type=Path, required=True)
    p.add_argument("--gen-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--audio-beats", type=Path)
    p.add_argument("--beat-align", action="store_true")
    p.add_argument("--diversity-pairs", type=int, default=100)
    _add_config_flags(p)

    p = sub.add_parser("inspect", help="validate interchange files and directories")
    p.add_argument("paths", nargs="+", type=Path)

    p = sub.add_parser("demo", help="synthetic end-to-end run (fit, build, match, metrics)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


# ---------------------------------------------------------------------------
# corpus discovery


def _require(path: Path, description: str) -> Path:
    if not path.exists():
        raise DataError(f"{description} missing: {path}")
    return path


def _load_recordings(args, config: EngineConfig) -> list[RecordingInput]:
    motion_dir = _require(args.motion_dir, "motion directory")
    stems = sorted(p.stem for p in motion_dir.glob("*.bvh"))
    if not stems:
        raise DataError(f"no .bvh files under {motion_dir}")
    recordings = []
    for stem in stems:
        _, motion = parse_bvh(motion_dir / f"{stem}.bvh")
        if abs(motion.fps - config.fps) > 1e-6:
            raise DataError(
                f"{motion_dir / (stem + '.bvh')}: fps {motion.fps:g} != configured {config.fps:g}"
            )
        tokens, _ = read_tokens(_require(args.tokens_dir / f"{stem}.tokens.bin",
                                         f"token file for {stem}"))
        embeddings, _ = read_embeddings(_require(args.embeddings_dir / f"{stem}.embed.bin",
                                                 f"embedding file for {stem}"))
        timings = []
        if args.timings_dir is not None:
            timing_path = args.timings_dir / f"{stem}.timings.tsv"
            if timing_path.exists():
                timings, _ = read_timings(timing_path)
        recordings.append(RecordingInput(stem, motion, tokens, embeddings, timings))
    return recordings


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    config = _config_from_args(args)
    motion_dir = _require(args.motion_dir, "motion directory")
    files = sorted(motion_dir.glob("*.bvh"))
    if not files:
        raise DataError(f"no .bvh files under {motion_dir}")

    raw_features = []
    skeleton: Skeleton | None = None
    for path in files:
        sk, motion = parse_bvh(path)
        if skeleton is None:
            skeleton = sk
        elif sk.joint_names != skeleton.joint_names:
            raise DataError(f"{path}: skeleton differs from the corpus")
        if abs(motion.fps - config.fps) > 1e-6:
            raise DataError(f"{path}: fps {motion.fps:g} != configured {config.fps:g}")
        indices = joint_subset_indices(skeleton, config.joint_subset)
        nm = normalize(motion, indices)
        raw_features.append(rotation_features(nm.motion, indices))

    indices = joint_subset_indices(skeleton, config.joint_subset)
    stats = FeatureNorm.fit(np.concatenate(raw_features, axis=0))
    from .codebook import Codebook, segment_windows

    windows = np.concatenate(
        [segment_windows(stats.apply(f), config.frames_per_code) for f in raw_features]
    )
    inertia: list[float] = []
    centers, labels = fit_codebook(windows, config.codebook_size, config.seed, inertia)
    codebook = Codebook(
        centers, config.frames_per_code, stats,
        [skeleton.joint_names[i] for i in indices],
    )
    basis = fit_phase_basis(
        [rotational_velocity(f, config.fps) for f in raw_features], config.phase_channels
    )
    err = float(np.mean(np.sum((windows - centers[labels]) ** 2, axis=1)))
    save_codebook_artifacts(
        args.out, codebook, basis,
        {"seed": config.seed, "mean_quantization_error": err, "windows": int(windows.shape[0])},
    )
    print(f"fit: {windows.shape[0]} windows from {len(files)} files")
    print(f"fit: codebook {codebook.size} x {codebook.code_dim}, "
          f"mean quantization error {err!r}")
    print(f"fit: artifacts written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# build-db


def cmd_build_db(args) -> int:
    config = _config_from_args(args)
    if args.tokens_dir is None or args.embeddings_dir is None:
        raise UsageError("build-db needs --tokens-dir and --embeddings-dir")
    recordings = _load_recordings(args, config)
    codebook = basis = None
    if args.codebook is not None:
        codebook, basis, _ = load_codebook_artifacts(args.codebook)
    db = build_database(recordings, config, codebook, basis)
    save_database(db, args.out)

    steps = sum(c.steps for c in db.clips)
    print(f"build-db: {len(db.clips)} clips, {steps} searchable steps, "
          f"codebook {db.codebook.size}")
    counts = code_histogram(c.codes for c in db.clips)
    print("build-db: top code frequencies:")
    for code, count in top_codes(counts, 15):
        print(f"  code {code}: {count}")
    print(f"build-db: database written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# match


def _parse_mask(spec: str, steps: int) -> list[bool]:
    if spec.startswith("@"):
        text = Path(spec[1:]).read_text()
        raw = text.replace(",", " ").split()
    else:
        raw = [s for s in spec.replace(",", " ").split() if s]
    try:
        flags = [bool(int(v)) for v in raw]
    except ValueError:
        raise UsageError(f"mask entries must be 0/1, got {spec!r}") from None
    if len(flags) != steps:
        raise UsageError(f"mask length {len(flags)} != query steps {steps}")
    return flags


def cmd_match(args) -> int:
    db = load_database(args.db)
    cfg = db.config
    tokens, warn_a = read_tokens(args.tokens)
    embeddings, warn_b = read_embeddings(args.embeddings)
    for w in (*warn_a, *warn_b):
        print(f"WARN {w}", file=sys.stderr)

    code_mask = None
    step_masks = None
    if args.constraint:
        kind, _, value = args.constraint.partition(":")
        if kind != "wrist-above" or not value:
            raise UsageError("constraint must look like wrist-above:HEIGHT")
        predicate = wrist_height_predicate(db, float(value), args.constraint_joint)
        allowed = constrain_codes(db, predicate)
        if args.mask:
            flags = _parse_mask(args.mask, embeddings.steps)
            step_masks = [None] * embeddings.steps
            occ_codes = np.array(
                [int(db.clips[c].codes.codes[s]) for c, s in db.occurrences]
            )
            occ_mask = allowed[occ_codes]
            for t, flagged in enumerate(flags):
                if flagged:
                    step_masks[t] = occ_mask
        else:
            code_mask = allowed
    elif args.mask:
        raise UsageError("--mask requires --constraint to define what is masked")

    seed = args.seed if args.seed is not None else cfg.seed
    query = MatchQuery(
        audio=tokens,
        text=embeddings,
        g_init=args.g_init,
        init=args.init or cfg.init,
        seed=seed,
        k=args.k if args.k is not None else cfg.k,
        freq_weight=args.freq_weight if args.freq_weight is not None else cfg.freq_weight,
        code_mask=code_mask,
        step_masks=step_masks,
    )
    result = search(db, query)

    replaced = None
    if args.replace:
        try:
            src, dst = (int(v) for v in args.replace.split(":"))
        except ValueError:
            raise UsageError("--replace expects FROM:TO code indices") from None
        if not np.any(result.codes == src):
            print(f"WARN replace: code {src} absent from the result", file=sys.stderr)
        result = replace_code(result, src, dst, db)
        replaced = {"from": src, "to": dst}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "codes.txt").write_text("".join(f"{c}\n" for c in result.codes))
    (out / "decoded.bvh").write_text(emit_bvh(db.skeleton, result.decoded))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "step", "prev_code",
        "audio_code", "audio_clip", "audio_step", "audio_dist", "audio_fused", "audio_phase",
        "text_code", "text_clip", "text_step", "text_dist", "text_fused", "text_phase",
        "chosen_code", "source",
    ])
    for t in result.traces:
        writer.writerow([
            t.step, t.prev_code,
            t.audio_code, t.audio_occurrence[0], t.audio_occurrence[1],
            repr(float(t.audio_dist[t.audio_code])), repr(float(t.fused_audio[t.audio_code])),
            repr(t.audio_phase_score),
            t.text_code, t.text_occurrence[0], t.text_occurrence[1],
            repr(float(t.text_dist[t.text_code])), repr(float(t.fused_text[t.text_code])),
            repr(t.text_phase_score),
            t.chosen_code, t.source,
        ])
    (out / "trace.csv").write_text(buf.getvalue())

    from .formats import write_json

    write_json(out / "result.json", {
        "codes": [int(c) for c in result.codes],
        "sources": result.sources,
        "seed": seed,
        "k": query.k,
        "freq_weight": query.freq_weight,
        "config_hash": cfg.hash(),
        "engine_version": __version__,
        "replaced": replaced,
    })
    print(f"match: {len(result.codes)} codes -> {out}")
    return 0


# ---------------------------------------------------------------------------
# metrics


def _load_motion_dir(path: Path) -> list[tuple[str, MotionSequence]]:
    path = _require(path, "motion directory")
    out = []
    for p in sorted(path.glob("*.bvh")):
        _, motion = parse_bvh(p)
        out.append((p.stem, motion))
    if not out:
        raise DataError(f"no .bvh files under {path}")
    return out


def cmd_metrics(args) -> int:
    config = _config_from_args(args)
    if args.beat_align and args.audio_beats is None:
        raise DataError("--beat-align needs --audio-beats FILE")

    ref = _load_motion_dir(args.ref_dir)
    gen = _load_motion_dir(args.gen_dir)
    indices_ref = joint_subset_indices(ref[0][1].skeleton, config.joint_subset)
    indices_gen = joint_subset_indices(gen[0][1].skeleton, config.joint_subset)

    ref_pos = [forward_kinematics(m.skeleton, m) for _, m in ref]
    gen_pos = [forward_kinematics(m.skeleton, m) for _, m in gen]
    for seqs, indices in ((ref_pos, indices_ref), (gen_pos, indices_gen)):
        for s in seqs:
            s.positions = s.positions[:, indices]

    ref_feat = [rotation_features(m, indices_ref) for _, m in ref]
    gen_feat = [rotation_features(m, indices_gen) for _, m in gen]
    if ref_feat[0].shape[1] != gen_feat[0].shape[1]:
        raise DataError("reference and generated joint subsets have different sizes")

    report: dict = {
        "engine_version": __version__,
        "config_hash": config.hash(),
        "seed": config.seed,
        "kernel_backend": KERNEL_BACKEND,
        "fgd_feature_space": "unavailable (needs a trained feature encoder)",
    }
    report["hellinger_average"] = hellinger_average(
        ref_pos, gen_pos, config.hist_bin_width, config.hist_max_speed
    )
    report["fgd_raw"] = fgd_raw(np.concatenate(ref_feat), np.concatenate(gen_feat))
    # CCA needs frame-paired samples: clips pair up in sorted order and
    # each pair truncates to its common length
    pairs = [
        (r[: min(len(r), len(g))], g[: min(len(r), len(g))])
        for r, g in zip(ref_feat, gen_feat)
    ]
    report["cca_global"] = cca_first(
        np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs])
    )
    report["cca_per_sequence_mean"], report["cca_per_sequence_std"] = mean_and_spread(
        [cca_first(r, g) for r, g in pairs]
    )

    jerk_ref = mean_and_spread([average_jerk(p) for p in ref_pos])
    jerk_gen = mean_and_spread([average_jerk(p) for p in gen_pos])
    acc_ref = mean_and_spread([average_acceleration(p) for p in ref_pos])
    acc_gen = mean_and_spread([average_acceleration(p) for p in gen_pos])
    report["average_jerk"] = {
        "ref_mean": jerk_ref[0], "ref_std": jerk_ref[1],
        "gen_mean": jerk_gen[0], "gen_std": jerk_gen[1],
    }
    report["average_acceleration"] = {
        "ref_mean": acc_ref[0], "ref_std": acc_ref[1],
        "gen_mean": acc_gen[0], "gen_std": acc_gen[1],
    }
    if len(ref_feat) >= 2:
        report["diversity_ref"] = diversity(
            np.stack([f.mean(axis=0) for f in ref_feat]), args.diversity_pairs, config.seed
        )
    if len(gen_feat) >= 2:
        report["diversity_gen"] = diversity(
            np.stack([f.mean(axis=0) for f in gen_feat]), args.diversity_pairs, config.seed
        )

    if args.beat_align:
        beats, _ = read_beats(args.audio_beats)
        if beats.size == 0:
            raise DataError(f"{args.audio_beats}: no audio beats")
        values = []
        flagged = False
        for p in gen_pos:
            gb = gesture_beats(p)
            flagged = flagged or gb.size == 0
            values.append(beat_align(beats, gb))
        report["beat_align"] = float(np.mean(values))
        report["beat_align_flagged_empty"] = flagged

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .formats import write_json

    write_json(out / "report.json", report)
    rows = _flatten_report(report)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerows(rows)
    (out / "report.csv").write_text(buf.getvalue())
    for name, value in rows:
        print(f"metrics: {name} = {value}")
    print(f"metrics: report written to {out}")
    return 0


def _flatten_report(report: dict) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    for key in sorted(report):
        value = report[key]
        if isinstance(value, dict):
            for sub in sorted(value):
                rows.append((f"{key}.{sub}", repr(value[sub])))
        else:
            rows.append((key, repr(value) if isinstance(value, float) else str(value)))
    return rows


# ---------------------------------------------------------------------------
# inspect


def _inspect_one(path: Path) -> list[str]:
    name = path.name
    if path.is_dir():
        manifest = read_json(path / "manifest.json")
        kind = manifest.get("format", "")
        if kind == "gesturematch.db/1":
            db = load_database(path)
            return [f"OK {path} database: {len(db.clips)} clips, codebook {db.codebook.size}"]
        if kind == "gesturematch.codebook/1":
            cb, basis, _ = load_codebook_artifacts(path)
            return [f"OK {path} codebook: {cb.size} x {cb.code_dim}, basis {basis.channels} channels"]
        raise DataError(f"{path}: unknown manifest format {kind!r}")
    if name.endswith(".tokens.bin"):
        seq, warnings = read_tokens(path)
        lines = [f"WARN {w}" for w in warnings]
        lines.append(f"OK {path} tokens: {seq.tokens.size} ids at {seq.rate:g}/s")
        return lines
    if name.endswith(".embed.bin"):
        emb, warnings = read_embeddings(path)
        lines = [f"WARN {w}" for w in warnings]
        lines.append(f"OK {path} embeddings: {emb.steps} x {emb.dim}")
        return lines
    if name.endswith(".beats.txt"):
        beats, warnings = read_beats(path)
        lines = [f"WARN {w}" for w in warnings]
        lines.append(f"OK {path} beats: {beats.size}")
        return lines
    if name.endswith(".timings.tsv"):
        timings, warnings = read_timings(path)
        lines = [f"WARN {w}" for w in warnings]
        lines.append(f"OK {path} timings: {len(timings)} words")
        return lines
    if name.endswith(".bvh"):
        skeleton, motion = parse_bvh(path)
        return [f"OK {path} motion: {motion.frame_count} frames, "
                f"{skeleton.joint_count} joints at {motion.fps:g} fps"]
    raise DataError(f"{path}: unrecognized file kind")


def cmd_inspect(args) -> int:
    for path in args.paths:
        if not path.exists():
            raise DataError(f"{path}: does not exist")
        for line in _inspect_one(path):
            print(line)
    return 0


# ---------------------------------------------------------------------------
# demo


def _demo_skeleton() -> Skeleton:
    names = ["Hips", "Spine", "Neck", "LeftShoulder", "LeftHand", "RightShoulder", "RightHand"]
    parents = np.array([-1, 0, 1, 1, 3, 1, 5])
    offsets = np.array([
        [0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.4, 0.4, 0.0],
        [0.6, 0.0, 0.0],
        [-0.4, 0.4, 0.0],
        [-0.6, 0.0, 0.0],
    ])
    channels = [["Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation"]]
    channels += [["Zrotation", "Xrotation", "Yrotation"] for _ in range(6)]
    return Skeleton(names, parents, offsets, channels)


def _demo_motion(skeleton: Skeleton, seconds: float, fps: float, seed: int) -> MotionSequence:
    from .motion_io import axis_rotation

    t = int(seconds * fps)
    rng = np.random.default_rng(seed)
    time = np.arange(t) / fps
    rotations = np.broadcast_to(np.eye(3), (t, skeleton.joint_count, 3, 3)).copy()
    for j in range(skeleton.joint_count):
        freq = rng.uniform(0.3, 1.2)
        amp = rng.uniform(10.0, 40.0)
        phase_off = rng.uniform(0, 2 * np.pi)
        angles = amp * np.sin(2 * np.pi * freq * time + phase_off)
        axis = int(rng.integers(3))
        rotations[:, j] = axis_rotation(axis, angles)
    return MotionSequence(fps, rotations, np.zeros((t, 3)), skeleton)


def _demo_tokens(seconds: float, rate: float, seed: int) -> TokenSequence:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    walk = np.cumsum(rng.integers(-3, 4, size=n)) % 320
    group2 = rng.integers(0, 320, size=n)
    return TokenSequence((walk * group2).astype(np.uint32), rate)


def _demo_embeddings(steps: int, dim: int, seed: int) -> EmbeddingSequence:
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(max(steps // 6, 1), dim))
    rows = np.repeat(base, 6, axis=0)[:steps]
    rows = rows + 0.05 * rng.normal(size=rows.shape)
    return EmbeddingSequence(rows)


def cmd_demo(args) -> int:
    out = Path(args.out)
    fps, seconds, rate, dim = 60.0, 16.0, 50.0, 16
    config = load_config(None, {
        "fps": fps, "codebook_size": 24, "seed": args.seed,
        "phase_fft_window_frames": 31,
    })
    skeleton = _demo_skeleton()

    data = out / "data"
    for sub in ("motion", "tokens", "embeddings", "timings"):
        (data / sub).mkdir(parents=True, exist_ok=True)
    words = ["so", "this", "gesture", "follows", "speech", "nicely"]
    for r in range(2):
        name = f"take{r}"
        motion = _demo_motion(skeleton, seconds, fps, args.seed + r)
        (data / "motion" / f"{name}.bvh").write_text(emit_bvh(skeleton, motion))
        tokens = _demo_tokens(seconds, rate, args.seed + 10 + r)
        write_tokens(data / "tokens" / f"{name}.tokens.bin", tokens)
        steps = motion.frame_count // config.frames_per_code
        write_embeddings(
            data / "embeddings" / f"{name}.embed.bin",
            _demo_embeddings(steps, dim, args.seed + 20 + r),
        )
        timings = []
        cursor = 0.1
        rng = np.random.default_rng(args.seed + 30 + r)
        while cursor < seconds - 1.0:
            word = words[int(rng.integers(len(words)))]
            span = float(rng.uniform(0.15, 0.4))
            timings.append((word, round(cursor, 3), round(cursor + span, 3)))
            cursor += span + float(rng.uniform(0.05, 0.9))
        write_timings(data / "timings" / f"{name}.timings.tsv", timings)
    write_beats(data / "beats.txt", np.arange(0.5, seconds - 0.5, 1.0))

    run = lambda argv: main(argv)  # noqa: E731 - small internal driver
    steps_total = [
        ["fit", "--motion-dir", str(data / "motion"), "--out", str(out / "artifacts"),
         "--codebook-size", "24", "--seed", str(args.seed), "--phase-window-frames", "31"],
        ["build-db", "--motion-dir", str(data / "motion"),
         "--tokens-dir", str(data / "tokens"), "--embeddings-dir", str(data / "embeddings"),
         "--timings-dir", str(data / "timings"), "--codebook", str(out / "artifacts"),
         "--out", str(out / "db"), "--codebook-size", "24", "--seed", str(args.seed),
         "--phase-window-frames", "31"],
        ["match", "--db", str(out / "db"), "--tokens", str(data / "tokens" / "take0.tokens.bin"),
         "--embeddings", str(data / "embeddings" / "take0.embed.bin"),
         "--out", str(out / "match"), "--seed", str(args.seed)],
    ]
    for argv in steps_total:
        code = run(argv)
        if code != 0:
            return code
    gen_dir = out / "generated"
    gen_dir.mkdir(exist_ok=True)
    (gen_dir / "take0.bvh").write_text((out / "match" / "decoded.bvh").read_text())
    code = run([
        "metrics", "--ref-dir", str(data / "motion"), "--gen-dir", str(gen_dir),
        "--out", str(out / "report"), "--audio-beats", str(data / "beats.txt"),
        "--beat-align", "--phase-window-frames", "31", "--seed", str(args.seed),
    ])
    if code != 0:
        return code
    print(f"demo: complete under {out}")
    return 0


# ---------------------------------------------------------------------------


_COMMANDS = {
    "fit": cmd_fit,
    "build-db": cmd_build_db,
    "match": cmd_match,
    "metrics": cmd_metrics,
    "inspect": cmd_inspect,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ERROR: usage: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"ERROR: data: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:  # pragma: no cover - safety net
        print(f"ERROR: engine: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
