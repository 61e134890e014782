"""Dual-stage fusion network over paired speech embeddings.

Two branch encoders (conv + global max pool + projection + sigmoid
gate) map the semantic and paralinguistic views into a shared space.
Depending on the variant, the branches are fused hyperbolically (exp
map, Mobius addition) or in Euclidean space, aligned with Bhattacharyya
distances at the speech-speech and speech-prompt stages, conditioned on
a fixed prompt vector, and finally read out by a frozen seeded decoder
that produces (Fake, Real) logits. Only the branch encoders, fusion
projections and the prefix projection train; the decoder never moves.

Variants
--------
satyam   hyperbolic fusion, BD alignment at both stages
h-bd-ss  hyperbolic fusion, BD at the speech-speech stage only
h-bd-st  hyperbolic fusion, BD at the speech-prompt stage only
ma       hyperbolic fusion, no BD losses
e-bd     Euclidean additive fusion, BD at both stages (pre-map space)
concat   Euclidean concatenation + projection at both stages, no BD
w-only   semantic branch only, additive prompt conditioning, no BD
t-only   paralinguistic branch only, likewise
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .alignment import LossBreakdown, bd_euclidean, bd_hyperbolic
from .dataio import EmbeddingRecord
from .errors import ConfigError, InvalidInputError
from .geometry import BallConfig, exp_origin, log_origin, mobius_add

VARIANTS = ("satyam", "h-bd-ss", "h-bd-st", "e-bd", "ma", "concat", "w-only", "t-only")

#: Class index convention for the two decision tokens.
CLASS_FAKE = 0
CLASS_REAL = 1

#: Scale applied to the frozen decoder init on top of the 1/sqrt(d) bound.
DECODER_SCALE = 32.0
#: Norm scale of registry prompt embeddings.
PROMPT_SCALE = 0.5
PROMPT_REGISTRY_SEED = 90210

_PROMPT_TEXTS = {
    "artifact-analysis": "Analyze the speech for unnatural artifacts",
    "one-word-decision": "Determine whether the speech is real or fake. "
    "Answer only in one word: Real or Fake.",
}


def register_prompt(prompt_id: str, text: str) -> None:
    """Add or replace a prompt template in the registry."""
    _PROMPT_TEXTS[prompt_id] = text


def registered_prompts() -> dict[str, str]:
    return dict(_PROMPT_TEXTS)


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "satyam"
    d: int = 128
    conv_filters: int = 32
    c: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 1.0
    prompt_id: str = "artifact-analysis"
    decoder_seed: int = 7001
    # Floor for the BD batch statistics. Sits above typical batch
    # variances at this scale, so the alignment losses act on means and
    # never reward collapsing the representation spread.
    var_floor: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.d < 2:
            raise ConfigError(f"shared dim must be >= 2, got {self.d}")
        if self.conv_filters < 1:
            raise ConfigError(f"conv_filters must be >= 1, got {self.conv_filters}")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.var_floor <= 0:
            raise ConfigError(f"var_floor must be positive, got {self.var_floor}")

    @property
    def ball(self) -> BallConfig:
        return BallConfig(c=self.c)

    @property
    def has_w(self) -> bool:
        return self.variant != "t-only"

    @property
    def has_t(self) -> bool:
        return self.variant != "w-only"

    @property
    def hyperbolic(self) -> bool:
        return self.variant in ("satyam", "h-bd-ss", "h-bd-st", "ma")


@dataclass
class PromptSpec:
    prompt_id: str
    text: str
    embedding: torch.Tensor


def prompt_spec(
    prompt_id: str,
    d: int,
    registry_seed: int = PROMPT_REGISTRY_SEED,
    embedding_file=None,
) -> PromptSpec:
    """Resolve a prompt id to its text and fixed conditioning vector.

    The embedding is seeded from (registry_seed, prompt_id), so it is
    stable across runs and platforms. Passing ``embedding_file`` (an
    ICFE tensor of shape (1, d)) substitutes an externally computed
    vector, e.g. from a real text encoder.
    """
    if prompt_id not in _PROMPT_TEXTS:
        raise ConfigError(f"unknown prompt_id {prompt_id!r}; register it first")
    if embedding_file is not None:
        from .dataio import read_tensor_file

        mat = read_tensor_file(embedding_file)
        if mat.shape != (1, d):
            raise ConfigError(f"prompt embedding file has shape {mat.shape}, expected (1, {d})")
        emb = torch.as_tensor(mat[0], dtype=torch.float64)
    else:
        digest = hashlib.sha256(prompt_id.encode("utf-8")).digest()
        tag = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng([registry_seed, tag])
        emb = torch.as_tensor(
            rng.standard_normal(d) / np.sqrt(d) * PROMPT_SCALE, dtype=torch.float64
        )
    return PromptSpec(prompt_id=prompt_id, text=_PROMPT_TEXTS[prompt_id], embedding=emb)


@dataclass
class ModelParams:
    """Trainable tensors plus the frozen surrogate-decoder tensors."""

    tensors: dict[str, torch.Tensor]
    frozen: dict[str, torch.Tensor]

    def clone(self) -> "ModelParams":
        return ModelParams(
            tensors={k: v.detach().clone() for k, v in self.tensors.items()},
            frozen={k: v.detach().clone() for k, v in self.frozen.items()},
        )

    def param_count(self, include_frozen: bool = False) -> int:
        n = sum(t.numel() for t in self.tensors.values())
        if include_frozen:
            n += sum(t.numel() for t in self.frozen.values())
        return n


def trainable_schema(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of the variant's trainable tensors."""
    d, c = cfg.d, cfg.conv_filters
    schema: dict[str, tuple[int, ...]] = {}
    for branch, active in (("w", cfg.has_w), ("t", cfg.has_t)):
        if not active:
            continue
        schema[f"conv_{branch}_weight"] = (c, 1, 3)
        schema[f"conv_{branch}_bias"] = (c,)
        schema[f"proj_{branch}"] = (d, c)
        schema[f"gate_{branch}_weight"] = (d, d)
        schema[f"gate_{branch}_bias"] = (d,)
    if cfg.variant == "concat":
        schema["fuse_ss"] = (d, 2 * d)
        schema["fuse_st"] = (d, 2 * d)
    schema["prefix_proj"] = (d, d)
    return schema


def frozen_schema(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {"decoder_weight": (2, cfg.d), "decoder_bias": (2,)}


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name.startswith("conv_"):
        return 3
    if len(shape) >= 2:
        return shape[-1]
    return shape[0]


def _snap_f32(t: torch.Tensor) -> torch.Tensor:
    """Round to the float32 grid so checkpoints reload bit-exactly."""
    return t.detach().to(torch.float32).to(torch.float64)


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Seeded init: trainables uniform within 1/sqrt(fan_in), decoder frozen.

    The two branch encoders share their init draw (branch-symmetric
    init, all their tensor shapes coincide), so the speech-speech
    alignment loss starts near its optimum instead of between two
    unrelated random encoders. Trainable and frozen tensors draw from
    independent generators, so changing decoder_seed leaves the
    trainable init untouched. All values are snapped to the float32
    grid up front; see _snap_f32.
    """
    gen = torch.Generator().manual_seed(int(seed))
    tensors = {}
    for name, shape in trainable_schema(cfg).items():
        if name.endswith("_t") or "_t_" in name:
            twin = name.replace("_t", "_w", 1)
            if twin in tensors:
                tensors[name] = tensors[twin].clone()
                continue
        bound = 1.0 / np.sqrt(_fan_in(name, shape))
        t = (torch.rand(shape, generator=gen, dtype=torch.float64) * 2.0 - 1.0) * bound
        tensors[name] = _snap_f32(t)
    gen_frozen = torch.Generator().manual_seed(int(cfg.decoder_seed))
    frozen = {}
    for name, shape in frozen_schema(cfg).items():
        bound = DECODER_SCALE / np.sqrt(cfg.d)
        t = (torch.rand(shape, generator=gen_frozen, dtype=torch.float64) * 2.0 - 1.0) * bound
        frozen[name] = _snap_f32(t)
    return ModelParams(tensors=tensors, frozen=frozen)


@dataclass
class Batch:
    e_w: torch.Tensor | None
    e_t: torch.Tensor | None
    labels: torch.Tensor  # CLASS_FAKE / CLASS_REAL per record

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @staticmethod
    def from_records(records: list[EmbeddingRecord]) -> "Batch":
        if not records:
            raise InvalidInputError("batch must contain at least one record")
        e_w = torch.as_tensor(np.stack([r.e_w for r in records]), dtype=torch.float64)
        e_t = torch.as_tensor(np.stack([r.e_t for r in records]), dtype=torch.float64)
        labels = torch.tensor(
            [CLASS_FAKE if r.label == "fake" else CLASS_REAL for r in records],
            dtype=torch.int64,
        )
        return Batch(e_w=e_w, e_t=e_t, labels=labels)


@dataclass
class ForwardOutput:
    logits: torch.Tensor
    losses: LossBreakdown
    intermediates: dict[str, torch.Tensor] = field(default_factory=dict)


def encode_branch(e: torch.Tensor, branch: str, params: ModelParams, cfg: ModelConfig) -> torch.Tensor:
    """Branch encoder: width-3 conv, global max pool, projection, gate.

    The embedding is treated as a length-D single-channel sequence;
    max pooling is global per channel, so the output dimension depends
    only on conv_filters, never on the input width.
    """
    if branch not in ("w", "t"):
        raise InvalidInputError(f"branch must be 'w' or 't', got {branch!r}")
    if f"conv_{branch}_weight" not in params.tensors:
        raise InvalidInputError(f"branch {branch!r} is not part of variant {cfg.variant!r}")
    if e.ndim != 2:
        raise InvalidInputError(f"branch input must be (batch, dim), got {tuple(e.shape)}")
    if e.shape[1] < 3:
        raise InvalidInputError(f"branch input dim {e.shape[1]} is narrower than the conv filter")
    x = e.unsqueeze(1)  # (B, 1, D)
    x = F.conv1d(x, params.tensors[f"conv_{branch}_weight"], params.tensors[f"conv_{branch}_bias"], padding=1)
    pooled = x.amax(dim=2)  # (B, C)
    z = pooled @ params.tensors[f"proj_{branch}"].T  # (B, d)
    gate = torch.sigmoid(z @ params.tensors[f"gate_{branch}_weight"].T + params.tensors[f"gate_{branch}_bias"])
    return gate * z


def forward(batch, params: ModelParams, cfg: ModelConfig, prompt: PromptSpec) -> ForwardOutput:
    """Run one variant end to end on a batch and assemble all losses."""
    if isinstance(batch, (list, tuple)):
        batch = Batch.from_records(list(batch))
    if batch.size < 1:
        raise InvalidInputError("batch must contain at least one record")
    if prompt.embedding.shape != (cfg.d,):
        raise ConfigError(
            f"prompt embedding dim {tuple(prompt.embedding.shape)} does not match d={cfg.d}"
        )
    ball = cfg.ball
    e_a = prompt.embedding
    inter: dict[str, torch.Tensor] = {}
    zero = torch.zeros((), dtype=torch.float64)
    l_ss = zero
    l_st = zero

    u_w = encode_branch(batch.e_w, "w", params, cfg) if cfg.has_w else None
    u_t = encode_branch(batch.e_t, "t", params, cfg) if cfg.has_t else None
    if u_w is not None:
        inter["u_w"] = u_w
    if u_t is not None:
        inter["u_t"] = u_t

    if cfg.hyperbolic:
        h_w = exp_origin(u_w, ball)
        h_t = exp_origin(u_t, ball)
        h_a = exp_origin(e_a, ball)
        if cfg.variant in ("satyam", "h-bd-ss"):
            l_ss = bd_hyperbolic(h_w, h_t, ball, cfg.var_floor)
        h_f = mobius_add(h_w, h_t, ball)
        if cfg.variant in ("satyam", "h-bd-st"):
            l_st = bd_hyperbolic(h_f, h_a.unsqueeze(0), ball, cfg.var_floor)
        h_final = mobius_add(h_f, h_a.expand_as(h_f), ball)
        u_final = log_origin(h_final, ball)
        inter.update(h_w=h_w, h_t=h_t, h_f=h_f, h_A=h_a, h_final=h_final)
    elif cfg.variant == "e-bd":
        l_ss = bd_euclidean(u_w, u_t, cfg.var_floor)
        u_f = u_w + u_t
        l_st = bd_euclidean(u_f, e_a.unsqueeze(0), cfg.var_floor)
        u_final = u_f + e_a
        inter["u_f"] = u_f
    elif cfg.variant == "concat":
        u_f = torch.cat([u_w, u_t], dim=1) @ params.tensors["fuse_ss"].T
        u_final = (
            torch.cat([u_f, e_a.expand(u_f.shape[0], -1)], dim=1) @ params.tensors["fuse_st"].T
        )
        inter["u_f"] = u_f
    elif cfg.variant == "w-only":
        u_final = u_w + e_a
    elif cfg.variant == "t-only":
        u_final = u_t + e_a
    else:  # pragma: no cover - ModelConfig already validates
        raise ConfigError(f"unknown variant {cfg.variant!r}")

    g = u_final @ params.tensors["prefix_proj"].T
    logits = g @ params.frozen["decoder_weight"].T + params.frozen["decoder_bias"]
    l_lm = F.cross_entropy(logits, batch.labels)
    total = cfg.lambda1 * l_ss + cfg.lambda2 * l_st + cfg.lambda3 * l_lm
    inter.update(u_final=u_final, g=g)
    return ForwardOutput(
        logits=logits,
        losses=LossBreakdown(l_ss=l_ss, l_st=l_st, l_lm=l_lm, total=total),
        intermediates=inter,
    )


def predict_batch(records, params: ModelParams, cfg: ModelConfig, prompt: PromptSpec):
    """Score a list of records; returns (scores, decisions) arrays.

    Score is the softmax probability of Fake; the decision is the
    argmax with ties resolved to Real.
    """
    batch = Batch.from_records(list(records))
    with torch.no_grad():
        out = forward(batch, params, cfg, prompt)
    logits = out.logits
    scores = torch.sigmoid(logits[:, CLASS_FAKE] - logits[:, CLASS_REAL]).numpy()
    decisions = np.where(
        logits[:, CLASS_FAKE].numpy() > logits[:, CLASS_REAL].numpy(), "fake", "real"
    )
    return scores, decisions


def predict(record: EmbeddingRecord, params: ModelParams, cfg: ModelConfig, prompt: PromptSpec):
    """Single-record decision with its Fake-probability score."""
    scores, decisions = predict_batch([record], params, cfg, prompt)
    return str(decisions[0]), float(scores[0])
