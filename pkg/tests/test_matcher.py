import numpy as np
import pytest

from gesturematch.codebook import Codebook
from gesturematch.errors import DataError
from gesturematch.matcher import (
    MatchQuery,
    RecordingInput,
    audio_precandidate,
    build_database,
    constrain_codes,
    pose_precandidate,
    relrank,
    replace_code,
    search,
    select_candidates,
    split_clips,
    text_precandidate,
    wrist_height_predicate,
)
from gesturematch.motion_io import FeatureNorm
from gesturematch.seqsim import EmbeddingSequence, TokenSequence, levenshtein, window_at

from conftest import (
    grid,
    make_chain_skeleton,
    make_sine_motion,
    make_toy_db,
    toy_config,
)
from oracles import OracleSearch, lev_full_matrix, relrank_oracle


def words(*spans):
    return [(f"w{i}", a, b) for i, (a, b) in enumerate(spans)]


class TestSplitClips:
    def test_one_gap_above_threshold(self):
        timings = words((0.0, 0.5), (0.7, 1.0), (1.9, 2.2), (2.5, 2.8))
        bounds = split_clips(240, 60.0, 8, timings)
        assert len(bounds) == 2

    def test_all_gaps_small_single_clip(self):
        timings = words((0.0, 0.5), (0.8, 1.2), (1.5, 2.0))
        assert len(split_clips(240, 60.0, 8, timings)) == 1

    def test_exact_half_second_gap_no_split(self):
        timings = words((0.0, 0.5), (1.0, 1.5))
        assert len(split_clips(240, 60.0, 8, timings)) == 1
        timings = words((0.0, 0.5), (1.001, 1.5))
        assert len(split_clips(240, 60.0, 8, timings)) == 2

    def test_empty_transcription_whole_motion(self):
        assert split_clips(240, 60.0, 8, []) == [(0, 30)]

    def test_bounds_are_step_aligned_and_cover_words(self):
        timings = words((0.21, 0.92), (2.02, 2.55))
        bounds = split_clips(240, 60.0, 8, timings)
        assert bounds == [(1, 7), (15, 20)]

    def test_non_monotone_rejected(self):
        with pytest.raises(DataError):
            split_clips(240, 60.0, 8, words((1.0, 1.2), (0.2, 0.4)))


def small_corpus(seed=0, recordings=2, frames=96, fps=12.0, dim=4, frames_per_code=4):
    cfg = toy_config(
        6,
        fps=fps,
        frames_per_code=frames_per_code,
        phase_fft_window_frames=9,
        n_phase=4,
        n_stride=1,
        phase_channels=2,
        joint_subset=("Hips", "Spine", "Head"),
    )
    skeleton = make_chain_skeleton()
    rng = np.random.default_rng(seed)
    recs = []
    for r in range(recordings):
        motion = make_sine_motion(skeleton, frames, fps, seed=seed + r)
        steps = frames // cfg.frames_per_code
        tokens = TokenSequence(rng.integers(0, 30, frames * 2).astype(np.uint32), fps * 2)
        embeddings = EmbeddingSequence(rng.normal(size=(steps, dim)))
        timings = [("hi", 0.2, 0.6), ("there", 2.5, 3.1)]
        recs.append(RecordingInput(f"rec{r}", motion, tokens, embeddings, timings))
    return recs, cfg


class TestBuildDatabase:
    def test_single_clip_thirty_steps(self):
        recs, cfg = small_corpus(recordings=1, frames=240, fps=60.0, frames_per_code=8)
        recs[0].word_timings = []
        db = build_database(recs, cfg)
        assert len(db.clips) == 1
        assert db.clips[0].steps == 30

    def test_duplicate_recording_doubles_frequency(self):
        recs, cfg = small_corpus(recordings=1)
        db1 = build_database(recs, cfg)
        twin = RecordingInput(
            "rec0b", recs[0].motion, recs[0].tokens, recs[0].embeddings,
            recs[0].word_timings,
        )
        db2 = build_database([recs[0], twin], cfg, db1.codebook, db1.phase_basis)
        assert np.array_equal(db2.code_frequency, 2 * db1.code_frequency)

    def test_deterministic(self):
        recs, cfg = small_corpus()
        db1 = build_database(recs, cfg)
        db2 = build_database(recs, cfg)
        assert np.array_equal(db1.codebook.centers, db2.codebook.centers)
        for c1, c2 in zip(db1.clips, db2.clips):
            assert np.array_equal(c1.codes.codes, c2.codes.codes)
            assert np.array_equal(c1.phase_windows, c2.phase_windows)

    def test_embedding_step_mismatch_names_recording(self):
        recs, cfg = small_corpus()
        recs[1] = RecordingInput(
            recs[1].name, recs[1].motion, recs[1].tokens,
            EmbeddingSequence(np.zeros((3, 4))), recs[1].word_timings,
        )
        with pytest.raises(DataError, match="rec1"):
            build_database(recs, cfg)

    def test_fps_mismatch_names_recording(self):
        recs, cfg = small_corpus()
        bad = make_sine_motion(recs[1].motion.skeleton, 96, 24.0, seed=1)
        recs[1] = RecordingInput(
            recs[1].name, bad, recs[1].tokens, recs[1].embeddings, recs[1].word_timings
        )
        with pytest.raises(DataError, match="rec1"):
            build_database(recs, cfg)


class TestPosePrecandidate:
    def _cb(self, rng, n=8):
        centers = grid(rng, (n, 9))
        std = np.choose(rng.integers(0, 3, 9), [0.5, 1.0, 2.0])
        mean = grid(rng, 9)
        return Codebook(centers, 1, FeatureNorm(mean, std, np.zeros(9, bool)), ["J0"])

    def test_self_distance_zero(self):
        cb = self._cb(np.random.default_rng(0))
        dists = pose_precandidate(3, cb)
        assert dists[3] == 0.0

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        cb = self._cb(rng)
        dists = pose_precandidate(2, cb)
        denorm = cb.denormalized_centers()
        for code in range(8):
            expected = float(np.sqrt(np.sum((denorm[code] - denorm[2]) ** 2)))
            assert dists[code] == pytest.approx(expected, abs=0)

    def test_scaling_centroids_scales_distances(self):
        rng = np.random.default_rng(2)
        cb = self._cb(rng)
        doubled = Codebook(2.0 * cb.centers, 1, cb.feature_norm, cb.joint_names)
        assert np.allclose(pose_precandidate(1, doubled), 2.0 * pose_precandidate(1, cb))


class TestScanPrecandidates:
    def test_exact_window_match_zero(self):
        rng = np.random.default_rng(3)
        db, streams = make_toy_db(rng, 6, [[0, 1, 2], [3, 1, 0]])
        window = db.clips[0].audio_windows[1]
        dists, best = audio_precandidate(window, db)
        assert dists[1] == 0
        assert best[1] == (0, 1)

    def test_mask_forces_sentinel(self):
        rng = np.random.default_rng(4)
        db, _ = make_toy_db(rng, 6, [[0, 1, 2], [3, 1, 0]])
        # code 2 occurs once, at flat occurrence index 2
        occ_mask = np.ones(len(db.occurrences), dtype=bool)
        occ_mask[2] = False
        dists, best = audio_precandidate(db.clips[0].audio_windows[2], db, occ_mask)
        assert np.isinf(dists[2])
        assert best[2] is None

    def test_absent_code_keeps_sentinel(self):
        rng = np.random.default_rng(5)
        db, _ = make_toy_db(rng, 6, [[0, 1, 2]])
        dists, _ = audio_precandidate(np.array([1, 2], np.uint32), db)
        assert np.isinf(dists[5])

    def test_audio_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(6)
        db, _ = make_toy_db(rng, 5, [[0, 1, 2, 3], [4, 2, 0]])
        query = rng.integers(0, 6, 5).astype(np.uint32)
        dists, best = audio_precandidate(query, db)
        for code in range(5):
            expected = np.inf
            who = None
            for ci, clip in enumerate(db.clips):
                for si in range(clip.steps):
                    if int(clip.codes.codes[si]) != code:
                        continue
                    d = lev_full_matrix(query, clip.audio_windows[si])
                    if d < expected:
                        expected, who = d, (ci, si)
            assert dists[code] == expected
            assert best[code] == who

    def test_text_exact_match_and_orthogonal(self):
        rng = np.random.default_rng(7)
        texts = [np.eye(3)[[0, 1, 2]] * 2.0]
        db, _ = make_toy_db(rng, 4, [[0, 1, 2]], texts_per_clip=texts)
        dists, best = text_precandidate(np.array([0.0, 2.0, 0.0]), db)
        assert dists[1] == 0.0
        assert best[1] == (0, 1)
        assert dists[0] == 1.0 and dists[2] == 1.0
        orth, _ = text_precandidate(np.array([1.0, 1.0, 1.0]) * 0, db)
        assert orth[0] == 1.0  # zero query is degenerate: similarity 0

    def test_text_dim_mismatch(self):
        rng = np.random.default_rng(8)
        db, _ = make_toy_db(rng, 4, [[0, 1]])
        with pytest.raises(DataError):
            text_precandidate(np.zeros(5), db)


class TestRelrank:
    def test_basic_example(self):
        assert relrank([10, 30, 20]).tolist() == [0.0, 1.0, 0.5]

    def test_all_equal(self):
        assert relrank([4, 4, 4, 4]).tolist() == [0, 0, 0, 0]

    def test_single_element(self):
        assert relrank([9.0]).tolist() == [0.0]

    def test_ties_share_lowest_position(self):
        out = relrank([5, 1, 5, 0])
        assert out.tolist() == [2 / 3, 1 / 3, 2 / 3, 0.0]

    def test_sentinels_rank_last_and_tie(self):
        out = relrank([2.0, np.inf, 1.0, np.inf])
        assert out.tolist() == [1 / 3, 2 / 3, 0.0, 2 / 3]

    def test_matches_oracle_and_order_isomorphic(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            values = rng.integers(0, 10, rng.integers(2, 12)).astype(float)
            got = relrank(values)
            assert got.tolist() == relrank_oracle(values)
            order = np.argsort(values, kind="stable")
            assert np.all(np.diff(got[order]) >= 0)


class TestSelectCandidates:
    def test_joint_minimum_wins(self):
        pose = relrank([0.0, 5.0, 9.0])
        audio = relrank([0.0, 7.0, 2.0])
        text = relrank([3.0, 0.0, 5.0])
        freq = np.zeros(3)
        code_a, code_t = select_candidates(
            pose, audio, text, freq, 0.05, 1, np.ones(3, bool)
        )
        assert code_a == 0
        assert code_t in (0, 1)

    def test_zero_weight_is_pure_rank_sum(self):
        rng = np.random.default_rng(10)
        pose = relrank(grid(rng, 6))
        audio = relrank(grid(rng, 6))
        freq = relrank(grid(rng, 6))
        a0, _ = select_candidates(pose, audio, audio, freq, 0.0, 1, np.ones(6, bool))
        fused = pose + audio
        expected = min(range(6), key=lambda i: (fused[i], i))
        assert a0 == expected

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            pose = relrank(grid(rng, 6))
            audio = relrank(grid(rng, 6))
            freq = relrank(grid(rng, 6))
            k = int(rng.integers(1, 4))
            fused = pose + audio + 0.05 * freq
            pool = sorted(range(6), key=lambda i: (fused[i], i))
            got, _ = select_candidates(pose, audio, audio, freq, 0.05, k, np.ones(6, bool))
            assert got == pool[k - 1]

    def test_k_beyond_eligible_errors(self):
        ranks = relrank([1.0, 2.0, 3.0])
        eligible = np.array([True, False, False])
        with pytest.raises(DataError):
            select_candidates(ranks, ranks, ranks, np.zeros(3), 0.0, 2, eligible)

    def test_monotone_fusion_winner_stays(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            pose_d = grid(rng, 8, lo=0, hi=10)
            audio_d = grid(rng, 8, lo=0, hi=10)
            freq = relrank(grid(rng, 8))
            eligible = np.ones(8, bool)
            winner, _ = select_candidates(
                relrank(pose_d), relrank(audio_d), relrank(audio_d), freq, 0.05, 1, eligible
            )
            improved = audio_d.copy()
            improved[winner] = improved[winner] - 2.0
            again, _ = select_candidates(
                relrank(pose_d), relrank(improved), relrank(improved), freq, 0.05, 1, eligible
            )
            assert again == winner


def self_retrieval_setup(rng, n_codes=8, steps=5):
    """Database from one clip, engineered so the clip is its own best match."""
    codes = list(range(n_codes - 1, n_codes - 1 - steps, -1))  # descending
    centers = 4.0 * np.eye(n_codes, 9)                         # equidistant pairs
    tokens = [np.arange(40, dtype=np.uint32)]                  # unique windows
    texts = [6.0 * np.eye(steps, 5)]                           # orthogonal, exact norms
    db, streams = make_toy_db(
        rng, n_codes, [codes],
        centers=centers, std=np.ones(9), mean=np.zeros(9),
        tokens_per_clip=tokens, texts_per_clip=texts,
        zero_phase_rate=0.0, embed_dim=5,
    )
    query = MatchQuery(
        audio=streams[0],
        text=EmbeddingSequence(texts[0]),
        g_init=codes[0],
        phase_init=db.clips[0].phase_windows[0],
        k=1,
        freq_weight=0.0,
    )
    return db, query, codes


class TestSearch:
    def test_self_retrieval(self):
        rng = np.random.default_rng(13)
        db, query, codes = self_retrieval_setup(rng)
        result = search(db, query)
        assert result.codes.tolist() == codes

    def test_single_code_database_constant_output(self):
        rng = np.random.default_rng(14)
        db, streams = make_toy_db(rng, 4, [[2, 2, 2]])
        query = MatchQuery(
            audio=TokenSequence(rng.integers(0, 6, 30).astype(np.uint32), 4.0),
            text=EmbeddingSequence(grid(rng, (5, 3), quarter=False)),
            g_init=0,
            phase_init=np.zeros((4, 2)),
        )
        result = search(db, query)
        assert result.codes.tolist() == [2, 2, 2, 2, 2]

    def test_empty_database_errors(self):
        rng = np.random.default_rng(15)
        db, streams = make_toy_db(rng, 4, [[0, 1]])
        db.clips = []
        query = MatchQuery(
            audio=streams[0], text=EmbeddingSequence(np.zeros((2, 3)))
        )
        with pytest.raises(DataError, match="empty database"):
            search(db, query)

    def test_trace_consistency_and_sources(self):
        rng = np.random.default_rng(16)
        db, streams = make_toy_db(rng, 6, [[0, 1, 2, 3], [4, 2, 1]])
        query = MatchQuery(
            audio=TokenSequence(rng.integers(0, 6, 40).astype(np.uint32), 4.0),
            text=EmbeddingSequence(grid(rng, (6, 3), quarter=False)),
            g_init=1,
            phase_init=grid(rng, (4, 2)),
        )
        result = search(db, query)
        assert len(result.traces) == 6
        for t in result.traces:
            if t.audio_phase_score <= t.text_phase_score:
                assert t.source == "audio" and t.chosen_code == t.audio_code
            else:
                assert t.source == "text" and t.chosen_code == t.text_code

    def test_mask_soundness(self):
        rng = np.random.default_rng(17)
        db, streams = make_toy_db(rng, 6, [[0, 1, 2, 3], [4, 2, 1]])
        banned = 2
        code_mask = np.ones(6, bool)
        code_mask[banned] = False
        query = MatchQuery(
            audio=TokenSequence(rng.integers(0, 6, 40).astype(np.uint32), 4.0),
            text=EmbeddingSequence(grid(rng, (6, 3), quarter=False)),
            g_init=0,
            phase_init=grid(rng, (4, 2)),
            code_mask=code_mask,
        )
        result = search(db, query)
        assert banned not in result.codes.tolist()

    def test_all_masked_step_errors(self):
        rng = np.random.default_rng(18)
        db, streams = make_toy_db(rng, 4, [[0, 1]])
        query = MatchQuery(
            audio=streams[0],
            text=EmbeddingSequence(grid(rng, (2, 3), quarter=False)),
            g_init=0,
            phase_init=grid(rng, (4, 2)),
            code_mask=np.zeros(4, bool),
        )
        with pytest.raises(DataError, match="masked|selectable"):
            search(db, query)

    def test_step_mask_length_validated(self):
        rng = np.random.default_rng(19)
        db, streams = make_toy_db(rng, 4, [[0, 1]])
        query = MatchQuery(
            audio=streams[0],
            text=EmbeddingSequence(grid(rng, (2, 3), quarter=False)),
            g_init=0,
            phase_init=grid(rng, (4, 2)),
            step_masks=[None],
        )
        with pytest.raises(DataError, match="mask length"):
            search(db, query)

    def test_determinism(self):
        rng = np.random.default_rng(20)
        db, streams = make_toy_db(rng, 6, [[0, 1, 2, 3], [4, 2, 1]])
        query = MatchQuery(
            audio=TokenSequence(rng.integers(0, 6, 40).astype(np.uint32), 4.0),
            text=EmbeddingSequence(grid(rng, (5, 3), quarter=False)),
            seed=7,
        )
        r1 = search(db, query)
        r2 = search(db, query)
        assert np.array_equal(r1.codes, r2.codes)
        assert r1.sources == r2.sources
        assert np.array_equal(r1.decoded.rotations, r2.decoded.rotations)


class TestOracleEquivalence:
    def _random_case(self, rng):
        n_codes = int(rng.integers(2, 9))
        n_clips = int(rng.integers(1, 5))
        clip_codes = [
            rng.integers(0, n_codes, rng.integers(1, 7)).tolist() for _ in range(n_clips)
        ]
        db, streams = make_toy_db(rng, n_codes, clip_codes)
        steps = int(rng.integers(1, 7))
        need = int((steps + 1) * db.config.frames_per_code / db.config.fps * db.token_rate) + 4
        query_tokens = TokenSequence(rng.integers(0, 6, need).astype(np.uint32), db.token_rate)
        present = sorted({c for codes in clip_codes for c in codes})
        k = 1 if len(present) < 2 or rng.random() < 0.7 else 2
        step_masks = None
        if rng.random() < 0.3:
            n_occ = len(db.occurrences)
            step_masks = []
            for _ in range(steps):
                if rng.random() < 0.5:
                    mask = rng.random(n_occ) < 0.8
                    mask[int(rng.integers(n_occ))] = True  # keep one occurrence alive
                    step_masks.append(mask)
                else:
                    step_masks.append(None)
            k = 1
        query = MatchQuery(
            audio=query_tokens,
            text=EmbeddingSequence(grid(rng, (steps, 3), quarter=False)),
            g_init=int(rng.integers(n_codes)),
            phase_init=grid(rng, (db.config.n_phase, 2)),
            k=k,
            freq_weight=float(rng.choice([0.0, 0.05])),
            step_masks=step_masks,
        )
        return db, query

    def test_matches_bruteforce_on_random_toy_databases(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            db, query = self._random_case(rng)
            oracle = OracleSearch(db)
            try:
                expected_codes, expected_sources = oracle.run(
                    query, query.g_init, query.phase_init
                )
            except ValueError:
                with pytest.raises(DataError):
                    search(db, query)
                continue
            result = search(db, query)
            assert result.codes.tolist() == expected_codes
            assert result.sources == expected_sources


class TestControllability:
    def test_replace_code(self):
        rng = np.random.default_rng(22)
        db, query, codes = self_retrieval_setup(rng)
        result = search(db, query)
        target_from, target_to = codes[1], codes[-1]
        swapped = replace_code(result, target_from, target_to, db)
        expected = [target_to if c == target_from else c for c in codes]
        assert swapped.codes.tolist() == expected
        # decoded motion equals decoding the swapped sequence directly
        from gesturematch.codebook import CodeSequence, decode

        direct = decode(
            CodeSequence(np.array(expected), 1, db.config.fps), db.codebook, db.skeleton
        )
        assert np.array_equal(swapped.decoded.rotations, direct.rotations)

    def test_replace_absent_is_identity(self):
        rng = np.random.default_rng(23)
        db, query, codes = self_retrieval_setup(rng)
        result = search(db, query)
        unchanged = replace_code(result, 0 if 0 not in codes else 1, 3, db)
        assert unchanged.codes.tolist() == result.codes.tolist()

    def test_replace_same_code_identity(self):
        rng = np.random.default_rng(24)
        db, query, codes = self_retrieval_setup(rng)
        result = search(db, query)
        same = replace_code(result, codes[0], codes[0], db)
        assert same.codes.tolist() == result.codes.tolist()

    def test_replace_invalid_code(self):
        rng = np.random.default_rng(25)
        db, query, _ = self_retrieval_setup(rng)
        result = search(db, query)
        with pytest.raises(DataError):
            replace_code(result, 0, 99, db)

    def test_constrain_codes_threshold_sweep(self):
        recs, cfg = small_corpus(recordings=1)
        db = build_database(recs, cfg)
        always = constrain_codes(db, lambda m: True)
        assert always.all()
        with pytest.raises(DataError):
            constrain_codes(db, lambda m: False)

    def test_wrist_mask_matches_per_code_fk(self):
        recs, cfg = small_corpus(recordings=1)
        db = build_database(recs, cfg)
        from gesturematch.codebook import CodeSequence, decode
        from gesturematch.motion_io import forward_kinematics

        heights = []
        for code in range(db.codebook.size):
            motion = decode(CodeSequence(np.array([code]), cfg.frames_per_code, cfg.fps),
                            db.codebook, db.skeleton)
            pos = forward_kinematics(db.skeleton, motion).positions
            heights.append(pos[:, 2, 1].min())  # "Head" stands in for the wrist
        threshold = float(np.median(heights))
        predicate = wrist_height_predicate(db, threshold, joint_name="Head")
        mask = constrain_codes(db, predicate)
        expected = np.array([h >= threshold for h in heights])
        assert np.array_equal(mask, expected)
        assert mask.any() and not mask.all()


class TestScaling:
    def test_search_cost_grows_linearly_in_clips(self):
        import time

        rng = np.random.default_rng(26)
        times = {}
        for n_clips in (10, 20, 40, 80):
            clip_codes = [rng.integers(0, 8, 6).tolist() for _ in range(n_clips)]
            db, _ = make_toy_db(rng, 8, clip_codes)
            query = MatchQuery(
                audio=TokenSequence(rng.integers(0, 6, 40).astype(np.uint32), 4.0),
                text=EmbeddingSequence(grid(rng, (4, 3), quarter=False)),
                g_init=0,
                phase_init=grid(rng, (4, 2)),
            )
            best = np.inf
            for _ in range(3):
                t0 = time.perf_counter()
                search(db, query)
                best = min(best, time.perf_counter() - t0)
            times[n_clips] = best
        assert times[80] <= times[10] * 8.0 * 1.3
