"""Deterministic training loop and checkpoint round trip.

AdamW (Adam with decoupled weight decay) over the trainable tensors
only; the frozen decoder never enters the optimizer. Runs are bitwise
reproducible for a fixed seed at a fixed thread count, and returned
parameters are snapped to the float32 grid so a checkpoint save/load
cycle reproduces predictions exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import dataio, evalsuite
from .errors import CheckpointError, ConfigError, DivergenceError, InvalidInputError
from .model import (
    Batch,
    ModelConfig,
    ModelParams,
    PromptSpec,
    _snap_f32,
    forward,
    frozen_schema,
    init_params,
    prompt_spec,
    trainable_schema,
)

CHECKPOINT_VERSION = 1
CHECKPOINT_META = "params.json"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 (batch statistics need it), got {self.batch_size}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class StepRecord:
    epoch: int
    step: int
    l_ss: float
    l_st: float
    l_lm: float
    total: float


@dataclass
class EpochRecord:
    epoch: int
    val_acc: float | None
    val_eer: float | None
    wall_time_s: float


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    wall_time_s: float = 0.0

    def save_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.steps:
                fh.write(json.dumps({"kind": "step", **asdict(s)}, sort_keys=True) + "\n")
            for e in self.epochs:
                fh.write(json.dumps({"kind": "epoch", **asdict(e)}, sort_keys=True) + "\n")
            fh.write(
                json.dumps(
                    {"kind": "summary", "wall_time_s": self.wall_time_s, "n_steps": len(self.steps)},
                    sort_keys=True,
                )
                + "\n"
            )


def _stack_split(corpus: dataio.Corpus, split: str):
    records = corpus.split_records(split)
    if not records:
        raise InvalidInputError(f"split {split!r} is empty")
    return records


def train(
    corpus: dataio.Corpus,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    prompt: PromptSpec | None = None,
) -> tuple[ModelParams, TrainLog]:
    """Train on the corpus train split, validating per epoch on valid."""
    t0 = time.perf_counter()
    if prompt is None:
        prompt = prompt_spec(mcfg.prompt_id, mcfg.d)
    train_records = _stack_split(corpus, "train")
    valid_records = _stack_split(corpus, "valid")

    params = init_params(mcfg, tcfg.seed)
    for t in params.tensors.values():
        t.requires_grad_(True)
    optimizer = torch.optim.AdamW(
        list(params.tensors.values()),
        lr=tcfg.learning_rate,
        betas=(tcfg.beta1, tcfg.beta2),
        eps=tcfg.eps,
        weight_decay=tcfg.weight_decay,
    )

    full = Batch.from_records(train_records)
    n = full.size
    log = TrainLog()
    step_idx = 0
    for epoch in range(tcfg.epochs):
        epoch_t0 = time.perf_counter()
        if tcfg.shuffle:
            order = np.random.default_rng([tcfg.seed, epoch]).permutation(n)
        else:
            order = np.arange(n)
        for start in range(0, n, tcfg.batch_size):
            idx = torch.as_tensor(order[start : start + tcfg.batch_size])
            batch = Batch(e_w=full.e_w[idx], e_t=full.e_t[idx], labels=full.labels[idx])
            out = forward(batch, params, mcfg, prompt)
            total = out.losses.total
            if not bool(torch.isfinite(total)):
                d = out.losses.detached()
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch} step {step_idx}: "
                    f"l_ss={d.l_ss}, l_st={d.l_st}, l_lm={d.l_lm}"
                )
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            d = out.losses.detached()
            log.steps.append(
                StepRecord(epoch=epoch, step=step_idx, l_ss=d.l_ss, l_st=d.l_st, l_lm=d.l_lm, total=d.total)
            )
            step_idx += 1
        val_acc, val_eer = _validate(valid_records, params, mcfg, prompt)
        log.epochs.append(
            EpochRecord(
                epoch=epoch,
                val_acc=val_acc,
                val_eer=val_eer,
                wall_time_s=time.perf_counter() - epoch_t0,
            )
        )

    final = ModelParams(
        tensors={k: _snap_f32(v) for k, v in params.tensors.items()},
        frozen={k: v.detach().clone() for k, v in params.frozen.items()},
    )
    log.wall_time_s = time.perf_counter() - t0
    return final, log


def _validate(records, params, mcfg, prompt):
    from .model import predict_batch

    with torch.no_grad():
        scores, decisions = predict_batch(records, params, mcfg, prompt)
    truths = np.array([r.label for r in records])
    acc = 100.0 * float((decisions == truths).mean())
    if len(set(truths)) < 2:
        return acc, None
    eer, _ = evalsuite.compute_eer(scores, truths)
    return acc, eer


def save_checkpoint(
    params: ModelParams,
    mcfg: ModelConfig,
    path,
    dims: tuple[int, int],
    train_seed: int | None = None,
) -> None:
    """Write params.json plus one ICFE tensor file per named parameter."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "train_seed": train_seed,
        "variant": mcfg.variant,
        "d": mcfg.d,
        "conv_filters": mcfg.conv_filters,
        "c": mcfg.c,
        "lambda1": mcfg.lambda1,
        "lambda2": mcfg.lambda2,
        "lambda3": mcfg.lambda3,
        "prompt_id": mcfg.prompt_id,
        "decoder_seed": mcfg.decoder_seed,
        "var_floor": mcfg.var_floor,
        "d_w": dims[0],
        "d_t": dims[1],
        "tensors": {name: list(t.shape) for name, t in params.tensors.items()},
        "frozen": {name: list(t.shape) for name, t in params.frozen.items()},
    }
    for name, t in list(params.tensors.items()) + list(params.frozen.items()):
        flat = _snap_f32(t).reshape(1, -1).numpy()
        dataio.write_tensor_file(out / f"{name}.icfe", flat)
    with open(out / CHECKPOINT_META, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, tuple[int, int]]:
    """Reload a checkpoint, verifying version, variant schema and shapes."""
    root = Path(path)
    meta_path = root / CHECKPOINT_META
    if not meta_path.exists():
        raise CheckpointError(f"no {CHECKPOINT_META} in {root}")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('checkpoint_version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    mcfg = ModelConfig(
        variant=meta["variant"],
        d=int(meta["d"]),
        conv_filters=int(meta["conv_filters"]),
        c=float(meta["c"]),
        lambda1=float(meta["lambda1"]),
        lambda2=float(meta["lambda2"]),
        lambda3=float(meta["lambda3"]),
        prompt_id=meta["prompt_id"],
        decoder_seed=int(meta["decoder_seed"]),
        var_floor=float(meta["var_floor"]),
    )
    expected_t = trainable_schema(mcfg)
    expected_f = frozen_schema(mcfg)
    for domain, expected, found in (
        ("trainable", expected_t, meta["tensors"]),
        ("frozen", expected_f, meta["frozen"]),
    ):
        if set(found) != set(expected):
            missing = sorted(set(expected) - set(found))
            extra = sorted(set(found) - set(expected))
            raise CheckpointError(
                f"{domain} tensor set does not match variant {mcfg.variant!r}: "
                f"missing {missing}, unexpected {extra}"
            )
        for name, shape in expected.items():
            if tuple(found[name]) != shape:
                raise CheckpointError(
                    f"tensor {name} has shape {found[name]}, expected {list(shape)}"
                )

    def _load(name, shape):
        mat = dataio.read_tensor_file(root / f"{name}.icfe")
        want = int(np.prod(shape))
        if mat.size != want:
            raise CheckpointError(f"tensor file {name}.icfe holds {mat.size} values, expected {want}")
        return torch.as_tensor(mat.reshape(shape), dtype=torch.float64)

    params = ModelParams(
        tensors={name: _load(name, shape) for name, shape in expected_t.items()},
        frozen={name: _load(name, shape) for name, shape in expected_f.items()},
    )
    dims = (int(meta["d_w"]), int(meta["d_t"]))
    return params, mcfg, dims
