import numpy as np
import pytest

from cfdet import dataio
from cfdet.codecsim import (
    CodecSpec,
    SynthConfig,
    decode,
    embed_views,
    encode,
    synth_corpus,
    train_codebook,
)
from cfdet.errors import InvalidInputError


def brute_force_encode(x, cb):
    """Loop-based exhaustive nearest-neighbor RVQ, the encode oracle."""
    codes = np.zeros((x.shape[0], cb.n_stages), dtype=np.int64)
    residual = np.array(x, dtype=np.float64)
    for s, codewords in enumerate(cb.stages):
        for t in range(residual.shape[0]):
            best, best_d = 0, None
            for k in range(codewords.shape[0]):
                d = float(((residual[t] - codewords[k]) ** 2).sum())
                if best_d is None or d < best_d:
                    best, best_d = k, d
            codes[t, s] = best
            residual[t] = residual[t] - codewords[best]
    return codes


class TestTrainCodebook:
    def test_exact_fit_when_frames_equal_k(self):
        rng = np.random.default_rng(0)
        frames = rng.standard_normal((8, 3))
        cb = train_codebook([frames], stages=1, codewords=8, seed=5)
        # codewords are a permutation of the input frames
        sorted_cb = np.array(sorted(cb.stages[0].tolist()))
        sorted_fr = np.array(sorted(frames.tolist()))
        np.testing.assert_allclose(sorted_cb, sorted_fr, atol=1e-12)
        recon = decode(encode(frames, cb), cb)
        np.testing.assert_allclose(recon, frames, atol=1e-12)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(1)
        frames = [rng.standard_normal((40, 4)) for _ in range(3)]
        cb1 = train_codebook(frames, stages=2, codewords=8, seed=9)
        cb2 = train_codebook(frames, stages=2, codewords=8, seed=9)
        for a, b in zip(cb1.stages, cb2.stages):
            assert np.array_equal(a, b)

    def test_residual_energy_non_increasing_across_stages(self):
        frames = [np.array([[-1.0], [1.0], [-1.0], [1.0]])]
        cb = train_codebook(frames, stages=2, codewords=2, seed=3)
        residual = frames[0].copy()
        energies = []
        for codewords in cb.stages:
            idx = np.argmin(((residual[:, None, :] - codewords[None]) ** 2).sum(2), axis=1)
            residual = residual - codewords[idx]
            energies.append(float((residual**2).sum()))
        assert energies[1] <= energies[0] + 1e-12

    def test_residual_energy_on_random_data(self):
        rng = np.random.default_rng(12)
        frames = [rng.standard_normal((80, 4)) for _ in range(2)]
        cb = train_codebook(frames, stages=4, codewords=8, seed=5)
        residual = np.concatenate(frames)
        prev = float((residual**2).sum())
        for codewords in cb.stages:
            idx = np.argmin(((residual[:, None, :] - codewords[None]) ** 2).sum(2), axis=1)
            residual = residual - codewords[idx]
            energy = float((residual**2).sum())
            assert energy <= prev + 1e-9
            prev = energy

    def test_too_few_frames_rejected(self):
        with pytest.raises(InvalidInputError):
            train_codebook([np.ones((3, 2))], stages=1, codewords=8, seed=0)


class TestEncodeDecode:
    def test_frame_equal_to_codeword(self):
        frames = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [0.0, 2.0]])
        cb = train_codebook([frames], stages=1, codewords=4, seed=2)
        codes = encode(frames[1:2], cb)
        recon = decode(codes, cb)
        np.testing.assert_allclose(recon, frames[1:2], atol=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        cb = train_codebook([np.array([[1.0], [-1.0]])], stages=1, codewords=2, seed=0)
        # 0.0 is equidistant from both codewords
        codes = encode(np.array([[0.0]]), cb)
        assert codes[0, 0] == 0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        frames = [rng.standard_normal((60, 5)) for _ in range(4)]
        cb = train_codebook(frames, stages=3, codewords=7, seed=8)
        x = rng.standard_normal((50, 5))
        np.testing.assert_array_equal(encode(x, cb), brute_force_encode(x, cb))

    def test_dim_mismatch_rejected(self):
        cb = train_codebook([np.ones((4, 2)) * np.arange(4)[:, None]], 1, 2, 0)
        with pytest.raises(InvalidInputError):
            encode(np.ones((3, 5)), cb)

    def test_out_of_range_code_rejected(self):
        cb = train_codebook([np.arange(8.0).reshape(4, 2)], 1, 2, 0)
        with pytest.raises(InvalidInputError):
            decode(np.array([[5]]), cb)

    def test_single_codeword_decodes_constant(self):
        frames = np.arange(10.0).reshape(5, 2)
        cb = train_codebook([frames], stages=1, codewords=1, seed=0)
        recon = decode(encode(frames, cb), cb)
        assert np.allclose(recon, recon[0])

    def test_reconstruction_error_positive_for_small_codebook(self):
        rng = np.random.default_rng(6)
        train = [rng.standard_normal((100, 4))]
        cb = train_codebook(train, stages=1, codewords=4, seed=1)
        held_out = rng.standard_normal((50, 4))
        mse = float(((decode(encode(held_out, cb), cb) - held_out) ** 2).mean())
        assert mse > 0


class TestEmbedViews:
    def test_identical_stats_identical_embeddings(self):
        x = np.tile(np.array([[1.0, -2.0], [3.0, 0.5]]), (2, 1))
        y = x[[2, 3, 0, 1]]  # same frames, different order: same mean/std
        ew1, et1 = embed_views(x, proj_seed=1, d_w=4, d_t=6)
        ew2, et2 = embed_views(y, proj_seed=1, d_w=4, d_t=6)
        np.testing.assert_allclose(ew1, ew2, atol=1e-12)
        np.testing.assert_allclose(et1, et2, atol=1e-12)

    def test_constant_sequence_std_half_contributes_nothing(self):
        from cfdet.codecsim import _STREAM_PROJECTION

        x = np.ones((10, 3)) * 2.5
        _, et = embed_views(x, proj_seed=1, d_w=4, d_t=6, mean_weight=0.5)
        rng = np.random.default_rng([1, _STREAM_PROJECTION])
        rng.standard_normal((4, 3))  # advance past the semantic map
        a_t = rng.standard_normal((6, 6)) / np.sqrt(6)
        a_t[:, :3] *= 0.5
        expected = a_t @ np.concatenate([x.mean(axis=0), np.zeros(3)])
        np.testing.assert_allclose(et, expected, atol=1e-12)

    def test_quantization_changes_semantic_view(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((30, 4)) * 2
        cb = train_codebook([rng.standard_normal((50, 4))], 1, 4, 3)
        x_tilde = decode(encode(x, cb), cb)
        ew_a, _ = embed_views(x, 5, 4, 6)
        ew_b, _ = embed_views(x_tilde, 5, 4, 6)
        assert not np.allclose(ew_a, ew_b)


def small_cfg(**kw):
    base = dict(
        languages=["la", "lb"],
        utterances_per_language=30,
        t_min=20,
        t_max=40,
        feature_dim=6,
        clusters_per_language=2,
        seen_codecs=[CodecSpec(1, 8, 11)],
        unseen_codecs=[CodecSpec(2, 4, 13)],
        d_w=8,
        d_t=12,
        seed=77,
    )
    base.update(kw)
    return SynthConfig(**base)


class TestSynthCorpus:
    def test_counts_single_split(self, tmp_path):
        cfg = small_cfg(
            utterances_per_language=10,
            split_fractions={"train": 1.0, "valid": 0.0, "test_seen": 0.0, "test_unseen": 0.0},
            seen_codecs=[CodecSpec(1, 8, 11), CodecSpec(1, 4, 12)],
        )
        manifest = synth_corpus(cfg, tmp_path / "c")
        reals = [r for r in manifest.records if r.label == "real"]
        fakes = [r for r in manifest.records if r.label == "fake"]
        assert len(reals) == 20
        assert len(fakes) == 40

    def test_unseen_split_uses_only_unseen_codecs(self, tmp_path):
        cfg = small_cfg()
        manifest = synth_corpus(cfg, tmp_path / "c")
        unseen_ids = {c.codec_id for c in cfg.unseen_codecs}
        for row in manifest.records:
            if row.split == "test_unseen" and row.label == "fake":
                assert row.codec_id in unseen_ids
            if row.split != "test_unseen" and row.label == "fake":
                assert row.codec_id not in unseen_ids

    def test_validator_accepts_output(self, tmp_path):
        synth_corpus(small_cfg(), tmp_path / "c")
        report = dataio.validate_corpus(tmp_path / "c")
        assert report.ok, report.violations

    def test_byte_identical_for_same_config(self, tmp_path):
        cfg = small_cfg()
        synth_corpus(cfg, tmp_path / "a")
        synth_corpus(cfg, tmp_path / "b")
        for name in (dataio.MANIFEST_NAME, dataio.SEMANTIC_NAME, dataio.PARALINGUISTIC_NAME):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_refuses_non_empty_dir(self, tmp_path):
        target = tmp_path / "c"
        target.mkdir()
        (target / "junk.txt").write_text("x")
        with pytest.raises(InvalidInputError):
            synth_corpus(small_cfg(), target)

    def test_fake_real_pairing_preserves_split_and_language(self, tmp_path):
        manifest = synth_corpus(small_cfg(), tmp_path / "c")
        reals = {r.id: r for r in manifest.records if r.label == "real"}
        for row in manifest.records:
            if row.label == "fake":
                real = reals[row.stem]
                assert real.split == row.split
                assert real.language == row.language

    def test_overlapping_codec_ids_rejected(self):
        with pytest.raises(InvalidInputError):
            small_cfg(
                seen_codecs=[CodecSpec(1, 8, 1)],
                unseen_codecs=[CodecSpec(1, 8, 2)],
            )
