import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vawgan import features as ft
from vawgan.errors import (
    BadMagicError,
    BadVersionError,
    DataError,
    DimMismatchError,
    TruncatedFileError,
)
from vawgan.features import FrameMatrix, NormStats, SyntheticSpec
from vawgan.numerics import RngState


def _random_corpus(seed=0, n=50, dim=5):
    rng = np.random.default_rng(seed)
    return [
        FrameMatrix(speaker_id=i, frames=rng.normal(size=(n, dim)) * (i + 1) + i)
        for i in range(2)
    ]


class TestNormalizer:
    def test_single_frame_is_fully_degenerate(self):
        stats = ft.fit_normalizer([FrameMatrix(0, [[1.0, 2.0]])])
        np.testing.assert_array_equal(stats.mins, [1.0, 2.0])
        np.testing.assert_array_equal(stats.maxs, [1.0, 2.0])
        assert stats.degenerate.all()

    def test_two_frames(self):
        stats = ft.fit_normalizer([FrameMatrix(0, [[0.0, 0.0], [2.0, 4.0]])])
        np.testing.assert_array_equal(stats.mins, [0.0, 0.0])
        np.testing.assert_array_equal(stats.maxs, [2.0, 4.0])
        assert not stats.degenerate.any()

    def test_refit_on_normalized_output_gives_unit_box(self):
        corpus = _random_corpus(seed=3)
        stats = ft.fit_normalizer(corpus)
        refit = ft.fit_normalizer([ft.normalize(fm, stats) for fm in corpus])
        np.testing.assert_allclose(refit.mins, -1.0, atol=1e-6)
        np.testing.assert_allclose(refit.maxs, 1.0, atol=1e-6)

    def test_stats_bound_the_corpus(self):
        corpus = _random_corpus(seed=8)
        stats = ft.fit_normalizer(corpus)
        for fm in corpus:
            assert (fm.frames >= stats.mins - 1e-7).all()
            assert (fm.frames <= stats.maxs + 1e-7).all()

    def test_rejects_empty_and_mismatched(self):
        with pytest.raises(DataError):
            ft.fit_normalizer([])
        with pytest.raises(DimMismatchError):
            ft.fit_normalizer([FrameMatrix(0, [[1.0]]), FrameMatrix(1, [[1.0, 2.0]])])

    def test_midpoint_maps_to_zero(self):
        stats = NormStats(mins=[0.0], maxs=[2.0])
        out = ft.normalize(FrameMatrix(0, [[1.0]]), stats)
        assert out.frames[0, 0] == 0.0

    def test_extremes_map_to_unit_interval_ends(self):
        stats = NormStats(mins=[-3.0, 1.0], maxs=[5.0, 9.0])
        out = ft.normalize(FrameMatrix(0, [[-3.0, 1.0], [5.0, 9.0]]), stats)
        np.testing.assert_array_equal(out.frames, [[-1.0, -1.0], [1.0, 1.0]])

    def test_degenerate_dims_map_to_zero_and_restore_min(self):
        stats = NormStats(mins=[2.0], maxs=[2.0])
        normed = ft.normalize(FrameMatrix(0, [[2.0]]), stats)
        assert normed.frames[0, 0] == 0.0
        assert ft.denormalize(normed, stats).frames[0, 0] == 2.0

    def test_dim_mismatch(self):
        stats = NormStats(mins=[0.0], maxs=[1.0])
        with pytest.raises(DimMismatchError):
            ft.normalize(FrameMatrix(0, [[1.0, 2.0]]), stats)
        with pytest.raises(DimMismatchError):
            ft.denormalize(FrameMatrix(0, [[1.0, 2.0]]), stats)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_round_trip_identity(self, seed):
        corpus = _random_corpus(seed=seed, n=20, dim=4)
        stats = ft.fit_normalizer(corpus)
        for fm in corpus:
            back = ft.denormalize(ft.normalize(fm, stats), stats)
            np.testing.assert_allclose(back.frames, fm.frames, atol=1e-5, rtol=1e-6)


class TestFilterNonsilent:
    def test_equal_energies_keep_everything(self):
        fm = FrameMatrix(0, np.ones((4, 2)), energy=np.zeros(4))
        assert ft.filter_nonsilent(fm, threshold_db=0.0).num_frames == 4

    def test_threshold_drops_quiet_frame(self):
        fm = FrameMatrix(0, [[1.0], [2.0]], energy=[0.0, -100.0])
        kept = ft.filter_nonsilent(fm, threshold_db=30.0)
        assert kept.num_frames == 1
        assert kept.frames[0, 0] == 1.0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(17)
        energy = rng.normal(size=200) * 20
        fm = FrameMatrix(0, rng.normal(size=(200, 3)), energy=energy)
        kept = ft.filter_nonsilent(fm, threshold_db=25.0)
        expected = [i for i in range(200) if energy[i] >= energy.max() - 25.0]
        np.testing.assert_array_equal(kept.energy, energy[expected].astype(np.float32))
        np.testing.assert_array_equal(kept.frames, fm.frames[expected])

    def test_output_is_a_subsequence(self):
        rng = np.random.default_rng(23)
        fm = FrameMatrix(0, rng.normal(size=(50, 2)), energy=rng.normal(size=50) * 30)
        kept = ft.filter_nonsilent(fm)
        # every kept frame appears in the input, in order
        idx = 0
        for row in kept.frames:
            while not np.array_equal(fm.frames[idx], row):
                idx += 1
        assert idx < fm.num_frames

    def test_missing_energy_warns_and_passes_through(self):
        fm = FrameMatrix(0, [[1.0], [2.0]])
        with pytest.warns(UserWarning, match="no energy"):
            out = ft.filter_nonsilent(fm)
        assert out is fm


class TestSynthetic:
    def test_zero_noise_single_cluster_is_exact(self):
        spec = SyntheticSpec(num_clusters=1, noise_scale=0.0, frames_per_speaker=10, dim=6, seed=5)
        corpus, truth = ft.generate_synthetic(spec)
        for m, fm in enumerate(corpus):
            expected = truth.clean_frame(m, 0).astype(np.float32)
            for row in fm.frames:
                np.testing.assert_allclose(row, expected, rtol=1e-6)

    def test_ideal_conversion_reproduces_target_cluster(self):
        spec = SyntheticSpec(num_clusters=4, noise_scale=0.0, frames_per_speaker=40, dim=8, seed=9)
        corpus, truth = ft.generate_synthetic(spec)
        source = corpus[0]
        converted = truth.ideal_conversion(source.frames, source_id=0, target_id=1)
        for row, cluster in zip(converted, truth.assignments[0]):
            np.testing.assert_allclose(row, truth.clean_frame(1, cluster), atol=1e-4)

    def test_same_seed_bitwise_identical(self):
        spec = SyntheticSpec(frames_per_speaker=30, dim=5, seed=21)
        corpus_a, _ = ft.generate_synthetic(spec)
        corpus_b, _ = ft.generate_synthetic(spec)
        for a, b in zip(corpus_a, corpus_b):
            assert np.array_equal(a.frames, b.frames)
            assert np.array_equal(a.energy, b.energy)

    def test_ill_conditioned_map_rejected(self):
        spec = SyntheticSpec(dim=6, seed=2, max_condition=1.0000001)
        with pytest.raises(DataError, match="ill-conditioned"):
            ft.generate_synthetic(spec)

    def test_speaker_means_differ(self):
        corpus, truth = ft.generate_synthetic(SyntheticSpec(frames_per_speaker=500, seed=3))
        gap = np.linalg.norm(corpus[0].frames.mean(axis=0) - corpus[1].frames.mean(axis=0))
        assert gap > 0.1

    def test_silence_fraction_marks_low_energy_frames(self):
        spec = SyntheticSpec(frames_per_speaker=200, silence_fraction=0.25, seed=11)
        corpus, truth = ft.generate_synthetic(spec)
        for fm, silent in zip(corpus, truth.silent):
            assert silent.sum() == 50
            kept = ft.filter_nonsilent(fm, threshold_db=30.0)
            assert kept.num_frames == 150

    def test_rng_argument_controls_generation(self):
        spec = SyntheticSpec(frames_per_speaker=10, dim=4, seed=0)
        a, _ = ft.generate_synthetic(spec, rng=RngState(seed=77))
        b, _ = ft.generate_synthetic(spec, rng=RngState(seed=77))
        assert np.array_equal(a[0].frames, b[0].frames)


class TestFrameFileFormat:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(1)
        fm = FrameMatrix(3, rng.normal(size=(7, 4)), energy=rng.normal(size=7))
        path = tmp_path / "frames.vawf"
        ft.write_frames(fm, path)
        loaded = read_back = ft.read_frames(path)
        assert loaded.speaker_id == 3
        assert np.array_equal(loaded.frames, fm.frames)
        assert np.array_equal(loaded.energy, fm.energy)
        second = tmp_path / "again.vawf"
        ft.write_frames(read_back, second)
        assert path.read_bytes() == second.read_bytes()

    def test_round_trip_without_energy(self, tmp_path):
        fm = FrameMatrix(0, np.eye(3))
        path = tmp_path / "noenergy.vawf"
        ft.write_frames(fm, path)
        loaded = ft.read_frames(path)
        assert loaded.energy is None
        assert np.array_equal(loaded.frames, fm.frames)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.vawf"
        ft.write_frames(FrameMatrix(0, [[1.0]]), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            ft.read_frames(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.vawf"
        ft.write_frames(FrameMatrix(0, [[1.0]]), path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (2).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(BadVersionError):
            ft.read_frames(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "short.vawf"
        ft.write_frames(FrameMatrix(0, np.ones((4, 3))), path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(TruncatedFileError):
            ft.read_frames(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "long.vawf"
        ft.write_frames(FrameMatrix(0, [[1.0]]), path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(TruncatedFileError):
            ft.read_frames(path)


class TestNormStatsFormat:
    def test_round_trip_bitwise(self, tmp_path):
        stats = NormStats(mins=[-1.5, 0.0], maxs=[2.5, 0.0])
        path = tmp_path / "stats.vawn"
        ft.write_norm_stats(stats, path)
        loaded = ft.read_norm_stats(path)
        assert np.array_equal(loaded.mins, stats.mins)
        assert np.array_equal(loaded.maxs, stats.maxs)
        second = tmp_path / "again.vawn"
        ft.write_norm_stats(loaded, second)
        assert path.read_bytes() == second.read_bytes()

    def test_bytes_round_trip(self):
        stats = NormStats(mins=[0.0, 1.0], maxs=[3.0, 4.0])
        again = ft.norm_stats_from_bytes(ft.norm_stats_to_bytes(stats))
        assert np.array_equal(again.mins, stats.mins)
        assert np.array_equal(again.maxs, stats.maxs)

    def test_bad_magic_distinct_from_bad_version(self, tmp_path):
        path = tmp_path / "stats.vawn"
        ft.write_norm_stats(NormStats(mins=[0.0], maxs=[1.0]), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"WRNG"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            ft.read_norm_stats(path)

        ft.write_norm_stats(NormStats(mins=[0.0], maxs=[1.0]), path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (9).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(BadVersionError):
            ft.read_norm_stats(path)
