import numpy as np
import pytest

from gesturematch.codebook import (
    Codebook,
    CodeSequence,
    code_histogram,
    decode,
    encode,
    encode_windows,
    fit_codebook,
    nearest_rotations,
    segment_windows,
    top_codes,
    vq_losses,
)
from gesturematch.errors import DataError
from gesturematch.motion_io import FeatureNorm, normalize

from conftest import make_chain_skeleton, make_sine_motion, toy_skeleton


def identity_norm(dim):
    return FeatureNorm(np.zeros(dim), np.ones(dim), np.zeros(dim, bool))


class TestSegmentWindows:
    def test_240_by_8_gives_30(self):
        feats = np.random.default_rng(0).normal(size=(240, 27))
        assert segment_windows(feats, 8).shape == (30, 8 * 27)

    def test_remainder_dropped(self):
        feats = np.arange(9, dtype=float)[:, None]
        windows = segment_windows(feats, 8)
        assert windows.shape == (1, 8)
        assert np.array_equal(windows[0], np.arange(8, dtype=float))

    def test_too_short_errors(self):
        with pytest.raises(DataError):
            segment_windows(np.zeros((7, 3)), 8)


class TestFitCodebook:
    def test_two_separated_clusters(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0.0, 0.05, size=(40, 4)) + np.array([10, 0, 0, 0])
        b = rng.normal(0.0, 0.05, size=(40, 4)) - np.array([10, 0, 0, 0])
        windows = np.concatenate([a, b])
        centers, labels = fit_codebook(windows, 2, seed=1)
        got = centers[np.argsort(centers[:, 0])]
        expected = np.stack([b.mean(axis=0), a.mean(axis=0)])
        assert np.max(np.abs(got - expected)) < 1e-6

    def test_identical_windows_single_center(self):
        windows = np.tile([1.0, 2.0, 3.0], (10, 1))
        centers, _ = fit_codebook(windows, 1, seed=0)
        assert np.allclose(centers[0], [1, 2, 3])

    def test_size_equals_count_zero_error(self):
        rng = np.random.default_rng(3)
        windows = rng.normal(size=(6, 5))
        centers, labels = fit_codebook(windows, 6, seed=2)
        # every window is its own centroid
        dists = np.linalg.norm(windows - centers[labels], axis=1)
        assert np.max(dists) < 1e-12

    def test_fewer_windows_than_centers(self):
        with pytest.raises(DataError):
            fit_codebook(np.zeros((3, 2)), 4, seed=0)

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(5)
        windows = rng.normal(size=(200, 6))
        log: list[float] = []
        fit_codebook(windows, 8, seed=7, inertia_log=log)
        assert len(log) >= 1
        assert all(b <= a + 1e-9 for a, b in zip(log, log[1:]))

    def test_bit_deterministic_per_seed(self):
        rng = np.random.default_rng(8)
        windows = rng.normal(size=(120, 5))
        c1, l1 = fit_codebook(windows.copy(), 6, seed=3)
        c2, l2 = fit_codebook(windows.copy(), 6, seed=3)
        assert np.array_equal(c1, c2) and np.array_equal(l1, l2)
        c3, _ = fit_codebook(windows.copy(), 6, seed=4)
        assert not np.array_equal(c1, c3)


class TestEncode:
    def test_exact_center_hits_its_code(self):
        rng = np.random.default_rng(0)
        centers = rng.normal(size=(10, 6))
        cb = Codebook(centers, 1, identity_norm(6), [])
        assert encode_windows(centers[7:8], cb)[0] == 7

    def test_tie_breaks_to_lowest_index(self):
        centers = np.zeros((6, 4))
        centers[2] = [1.0, 0, 0, 0]
        centers[5] = [-1.0, 0, 0, 0]
        centers[0] = [0, 5.0, 0, 0]
        centers[1] = [0, -5.0, 0, 0]
        centers[3] = [0, 0, 7.0, 0]
        centers[4] = [0, 0, -7.0, 0]
        cb = Codebook(centers, 1, identity_norm(4), [])
        window = np.zeros((1, 4))  # equidistant from 2 and 5, closer than others
        assert encode_windows(window, cb)[0] == 2

    def test_matches_bruteforce_argmin(self):
        rng = np.random.default_rng(1)
        centers = rng.normal(size=(16, 8))
        cb = Codebook(centers, 1, identity_norm(8), [])
        windows = rng.normal(size=(1000, 8))
        codes = encode_windows(windows, cb)
        for w, c in zip(windows, codes):
            dists = [float(np.sqrt(np.sum((w - center) ** 2))) for center in centers]
            best = min(range(16), key=lambda i: (dists[i], i))
            assert c == best

    def test_no_center_strictly_closer(self):
        rng = np.random.default_rng(2)
        centers = rng.normal(size=(12, 5))
        cb = Codebook(centers, 1, identity_norm(5), [])
        windows = rng.normal(size=(200, 5))
        codes = encode_windows(windows, cb)
        chosen = np.linalg.norm(windows - centers[codes], axis=1)
        for other in range(12):
            alternative = np.linalg.norm(windows - centers[other], axis=1)
            assert np.all(chosen <= alternative + 1e-12)

    def test_dimension_mismatch(self):
        cb = Codebook(np.zeros((2, 6)), 1, identity_norm(6), [])
        with pytest.raises(DataError):
            encode_windows(np.zeros((1, 5)), cb)


def _rotation_codebook(skeleton, frames_per_code=2, size=4, seed=0):
    """Codebook whose centers are flattened genuine rotation windows."""
    motion = make_sine_motion(skeleton, frames_per_code * size * 3, 30.0, seed=seed)
    nm = normalize(motion)
    windows = segment_windows(nm.features, frames_per_code)
    centers = windows[:: windows.shape[0] // size][:size].copy()
    return Codebook(centers, frames_per_code, nm.stats, list(skeleton.joint_names)), nm


class TestDecode:
    def test_centroid_sequence_round_trips(self):
        skeleton = make_chain_skeleton()
        cb, nm = _rotation_codebook(skeleton)
        codes = CodeSequence(np.array([2, 0, 1]), cb.frames_per_code, 30.0)
        motion = decode(codes, cb, skeleton)
        reencoded = encode(normalize(motion, stats=cb.feature_norm), cb)
        assert np.array_equal(reencoded.codes, codes.codes)

    def test_single_code_repeats_window(self):
        skeleton = make_chain_skeleton()
        cb, _ = _rotation_codebook(skeleton)
        codes = CodeSequence(np.array([1, 1, 1]), cb.frames_per_code, 30.0)
        motion = decode(codes, cb, skeleton)
        d = cb.frames_per_code
        assert motion.frame_count == 3 * d
        assert np.allclose(motion.rotations[:d], motion.rotations[d : 2 * d])
        assert np.allclose(motion.rotations[:d], motion.rotations[2 * d :])

    def test_rotations_are_orthonormal(self):
        skeleton = make_chain_skeleton()
        cb, _ = _rotation_codebook(skeleton)
        motion = decode(CodeSequence(np.array([0, 3]), cb.frames_per_code, 30.0), cb, skeleton)
        motion.validate()

    def test_invalid_index(self):
        skeleton = make_chain_skeleton()
        cb, _ = _rotation_codebook(skeleton)
        with pytest.raises(DataError):
            decode(CodeSequence(np.array([99]), cb.frames_per_code, 30.0), cb, skeleton)

    def test_encode_decode_error_minimal_exhaustive(self):
        # reconstruction error of nearest-code assignment beats any other
        # assignment, checked exhaustively for a 4-code book
        rng = np.random.default_rng(4)
        centers = rng.normal(size=(4, 9))
        cb = Codebook(centers, 1, identity_norm(9), [])
        windows = rng.normal(size=(3, 9))
        codes = encode_windows(windows, cb)
        chosen_err = float(np.sum((windows - centers[codes]) ** 2))
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    err = float(np.sum((windows - centers[[a, b, c]]) ** 2))
                    assert chosen_err <= err + 1e-12


class TestNearestRotations:
    def test_projects_back_to_rotation(self):
        rng = np.random.default_rng(0)
        blocks = np.stack([np.eye(3) + 0.05 * rng.normal(size=(3, 3)) for _ in range(8)])
        fixed = nearest_rotations(blocks)
        gram = np.einsum("nab,nac->nbc", fixed, fixed)
        assert np.max(np.abs(gram - np.eye(3))) < 1e-12
        assert np.min(np.linalg.det(fixed)) > 0.99

    def test_rotation_is_fixed_point(self):
        from gesturematch.motion_io import axis_rotation

        r = axis_rotation(1, 40.0)
        assert np.allclose(nearest_rotations(r[None])[0], r, atol=1e-12)


class TestVqLosses:
    def test_exactly_decodable_zero_terms(self):
        skeleton = make_chain_skeleton()
        cb, _ = _rotation_codebook(skeleton)
        codes = CodeSequence(np.array([0, 1, 2]), cb.frames_per_code, 30.0)
        motion = decode(codes, cb, skeleton)
        nm = normalize(motion, stats=cb.feature_norm)
        report = vq_losses(nm, encode(nm, cb), cb)
        assert report.l1 < 1e-9
        assert report.velocity < 1e-9
        assert report.acceleration < 1e-9
        assert report.commitment < 1e-9

    def test_zero_weights_reduce_to_l1(self):
        skeleton = make_chain_skeleton()
        cb, nm = _rotation_codebook(skeleton)
        cs = encode(nm, cb)
        report = vq_losses(nm, cs, cb, a1=0.0, a2=0.0)
        assert report.reconstruction == pytest.approx(report.l1)

    def test_hand_computed_toy_case(self):
        # 2 frames, 1-frame codes, 1-dim feature channel padded to 9 dims
        centers = np.zeros((2, 9))
        centers[0, 0] = 1.0
        centers[1, 0] = 3.0
        cb = Codebook(centers, 1, identity_norm(9), [])

        class FakeNorm:
            features = None

        features = np.zeros((2, 9))
        features[0, 0] = 1.5   # nearest center 0 (dist 0.5)
        features[1, 0] = 2.0   # tie between 1.0 and 3.0 -> code 0
        from gesturematch.motion_io import NormalizedMotion

        nm = NormalizedMotion(None, features, cb.feature_norm, [0], [])
        cs = CodeSequence(encode_windows(features, cb), 1, 2.0)
        assert np.array_equal(cs.codes, [0, 0])
        report = vq_losses(nm, cs, cb, a1=1.0, a2=1.0, beta=0.25)
        # per-frame |g - g_q|: frame0 0.5, frame1 1.0 over 9 channels
        assert report.l1 == pytest.approx((0.5 + 1.0) / 18)
        # velocity: |(2.0 - 1.5) - (1.0 - 1.0)| = 0.5 over 9 channels
        assert report.velocity == pytest.approx(0.5 / 9)
        assert report.acceleration == 0.0
        assert report.commitment == pytest.approx((0.5 + 1.0) / 2)
        assert report.total == pytest.approx(
            report.reconstruction + 1.25 * report.commitment
        )


class TestHistogram:
    def test_counts(self):
        counts = code_histogram([[3, 3, 5]])
        assert counts == {3: 2, 5: 1}

    def test_empty(self):
        assert code_histogram([]) == {}

    def test_planted_dominant_code(self):
        rng = np.random.default_rng(0)
        clips = [rng.integers(0, 10, 20).tolist() + [7] * 30 for _ in range(5)]
        counts = code_histogram(clips)
        assert top_codes(counts, 1)[0][0] == 7
        assert sum(counts.values()) == sum(len(c) for c in clips)


class TestReconstructionMonotone:
    def test_error_non_increasing_in_size(self):
        rng = np.random.default_rng(12)
        windows = rng.normal(size=(400, 10))
        errors = []
        for size in (2, 4, 8, 16, 32):
            centers, labels = fit_codebook(windows, size, seed=99)
            errors.append(float(np.mean(np.sum((windows - centers[labels]) ** 2, axis=1))))
        assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
