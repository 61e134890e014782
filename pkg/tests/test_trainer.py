import json

import numpy as np
import pytest
import torch

from cfdet import dataio
from cfdet.codecsim import CodecSpec, SynthConfig, synth_corpus
from cfdet.errors import CheckpointError, ConfigError, DivergenceError, InvalidInputError
from cfdet.model import ModelConfig, init_params, predict, prompt_spec
from cfdet.trainer import TrainConfig, load_checkpoint, save_checkpoint, train


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus") / "c"
    synth_corpus(
        SynthConfig(
            languages=["la", "lb"],
            utterances_per_language=60,
            t_min=20,
            t_max=50,
            feature_dim=8,
            clusters_per_language=2,
            seen_codecs=[CodecSpec(1, 8, 11)],
            unseen_codecs=[CodecSpec(2, 4, 13)],
            d_w=8,
            d_t=12,
            seed=123,
        ),
        root,
    )
    return dataio.load_corpus(root)


def tiny_mcfg(**kw):
    base = dict(variant="satyam", d=8, conv_filters=4)
    base.update(kw)
    return ModelConfig(**base)


class TestTrainConfig:
    def test_defaults_match_training_protocol(self):
        t = TrainConfig()
        assert t.learning_rate == 1e-4
        assert t.batch_size == 32
        assert t.epochs == 5
        assert (t.beta1, t.beta2, t.eps) == (0.9, 0.999, 1e-8)
        assert t.weight_decay == 0.01

    def test_batch_size_below_two_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=1)

    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)


class TestTrainLoop:
    def test_zero_learning_rate_keeps_params(self, corpus):
        mcfg = tiny_mcfg()
        tcfg = TrainConfig(learning_rate=0.0, epochs=1, seed=4)
        params, _ = train(corpus, mcfg, tcfg)
        init = init_params(mcfg, tcfg.seed)
        for k in init.tensors:
            assert torch.equal(params.tensors[k], init.tensors[k])

    def test_step_count_formula(self, corpus):
        n = len(corpus.split_records("train"))
        tcfg = TrainConfig(epochs=2, batch_size=32, seed=1)
        _, log = train(corpus, tiny_mcfg(), tcfg)
        assert len(log.steps) == -(-n // 32) * 2

    def test_deterministic_runs(self, corpus):
        mcfg = tiny_mcfg()
        tcfg = TrainConfig(epochs=1, seed=9)
        p1, log1 = train(corpus, mcfg, tcfg)
        p2, log2 = train(corpus, mcfg, tcfg)
        for k in p1.tensors:
            assert torch.equal(p1.tensors[k], p2.tensors[k])
        assert [s.total for s in log1.steps] == [s.total for s in log2.steps]
        assert [e.val_acc for e in log1.epochs] == [e.val_acc for e in log2.epochs]

    def test_frozen_tensors_untouched(self, corpus):
        mcfg = tiny_mcfg()
        tcfg = TrainConfig(epochs=2, seed=2)
        params, _ = train(corpus, mcfg, tcfg)
        init = init_params(mcfg, tcfg.seed)
        for k in init.frozen:
            assert torch.equal(params.frozen[k], init.frozen[k])

    def test_empty_split_rejected(self, corpus, tmp_path):
        rows = [r for r in corpus.manifest.records if r.split != "valid"]
        rows = [
            dataio.ManifestRow(r.id, r.label, r.codec_id, r.language, r.split, i)
            for i, r in enumerate(rows)
        ]
        keep = [r.id for r in rows]
        idx = [corpus.manifest.records[i].row_index
               for i in range(len(corpus.manifest.records))
               if corpus.manifest.records[i].id in set(keep)]
        dataio.write_corpus(tmp_path / "c2", rows, corpus.semantic[idx], corpus.paralinguistic[idx])
        broken = dataio.load_corpus(tmp_path / "c2")
        with pytest.raises(InvalidInputError):
            train(broken, tiny_mcfg(), TrainConfig(epochs=1))

    def test_divergence_guard(self, corpus):
        # a huge learning rate drives the loss non-finite within an epoch
        tcfg = TrainConfig(learning_rate=1e6, epochs=3, seed=1)
        with pytest.raises(DivergenceError):
            train(corpus, tiny_mcfg(variant="e-bd", var_floor=1e-9), tcfg)

    def test_training_reduces_loss(self, corpus):
        tcfg = TrainConfig(epochs=5, seed=3)
        _, log = train(corpus, tiny_mcfg(), tcfg)
        first_epoch = [s.total for s in log.steps if s.epoch == 0]
        last_epoch = [s.total for s in log.steps if s.epoch == 4]
        assert np.mean(last_epoch) < np.mean(first_epoch)


class TestAdamWReference:
    def test_matches_hand_stepped_quadratic(self):
        """Optimizer iterates vs a hand-stepped decoupled-AdamW on f(p)=p^2/2."""
        lr, wd, b1, b2, eps = 1e-2, 0.05, 0.9, 0.999, 1e-8
        p = torch.tensor([0.7], dtype=torch.float64, requires_grad=True)
        opt = torch.optim.AdamW([p], lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
        ref_p, m, v = 0.7, 0.0, 0.0
        for t in range(1, 51):
            opt.zero_grad()
            loss = 0.5 * p**2
            loss.backward()
            opt.step()
            # reference: decoupled weight decay, then Adam moment update
            g = ref_p
            ref_p = ref_p * (1.0 - lr * wd)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            ref_p = ref_p - lr * m_hat / (np.sqrt(v_hat) + eps)
            assert abs(p.item() - ref_p) < 1e-10, f"step {t}"


class TestCheckpoint:
    def test_save_load_predict_identical(self, corpus, tmp_path):
        mcfg = tiny_mcfg()
        tcfg = TrainConfig(epochs=1, seed=6)
        params, _ = train(corpus, mcfg, tcfg)
        save_checkpoint(params, mcfg, tmp_path / "ck", corpus.dims)
        loaded, mcfg2, dims = load_checkpoint(tmp_path / "ck")
        assert mcfg2 == mcfg
        assert dims == corpus.dims
        prompt = prompt_spec(mcfg.prompt_id, mcfg.d)
        rng = np.random.default_rng(0)
        records = corpus.split_records("test_seen")
        pick = rng.choice(len(records), size=min(100, len(records)), replace=False)
        for i in pick:
            d1, s1 = predict(records[i], params, mcfg, prompt)
            d2, s2 = predict(records[i], loaded, mcfg2, prompt)
            assert d1 == d2
            assert s1 == s2

    def test_checkpoint_bytes_deterministic(self, corpus, tmp_path):
        mcfg = tiny_mcfg()
        tcfg = TrainConfig(epochs=1, seed=6)
        for run in ("a", "b"):
            params, _ = train(corpus, mcfg, tcfg)
            save_checkpoint(params, mcfg, tmp_path / run, corpus.dims)
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name

    def test_tampered_version_rejected(self, corpus, tmp_path):
        mcfg = tiny_mcfg()
        params = init_params(mcfg, 0)
        save_checkpoint(params, mcfg, tmp_path / "ck", corpus.dims)
        meta_path = tmp_path / "ck" / "params.json"
        meta = json.loads(meta_path.read_text())
        meta["checkpoint_version"] = 99
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "ck")

    def test_variant_schema_mismatch_rejected(self, corpus, tmp_path):
        mcfg = tiny_mcfg(variant="w-only")
        params = init_params(mcfg, 0)
        save_checkpoint(params, mcfg, tmp_path / "ck", corpus.dims)
        meta_path = tmp_path / "ck" / "params.json"
        meta = json.loads(meta_path.read_text())
        meta["variant"] = "satyam"  # demands t-branch tensors the dir lacks
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(tmp_path / "ck")
        assert "missing" in str(exc.value)

    def test_tampered_shape_rejected(self, corpus, tmp_path):
        mcfg = tiny_mcfg()
        params = init_params(mcfg, 0)
        save_checkpoint(params, mcfg, tmp_path / "ck", corpus.dims)
        meta_path = tmp_path / "ck" / "params.json"
        meta = json.loads(meta_path.read_text())
        meta["tensors"]["prefix_proj"] = [2, 2]
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "ck")
