"""Desk-scale codec resynthesis pipeline.

A residual vector quantizer (k-means codebooks over stage-wise
residuals) stands in for neural audio codecs: encoding a frame sequence
to discrete codes and decoding it back injects exactly the artifact
class a codec-fake detector has to pick up, quantization noise that
shrinks within-utterance variance.

Synthetic "real" utterances are per-language, per-speaker-cluster
Gaussian AR(1) processes; fakes are their encode/decode round trips.
Everything is derived from a master seed, so corpora are byte-identical
across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .errors import InvalidInputError

# RNG stream tags, combined with the master seed so each consumer gets
# an independent, schedule-free stream.
_STREAM_CLUSTERS = 101
_STREAM_UTTERANCE = 102
_STREAM_PROJECTION = 103
_STREAM_SPLIT = 104

KMEANS_ITERS = 25


@dataclass
class Codebook:
    """S-stage residual quantizer: stage s holds a (K, F) codeword matrix."""

    stages: list[np.ndarray]
    codec_id: str
    seed: int

    def __post_init__(self):
        if len(self.stages) < 1:
            raise InvalidInputError("codebook needs at least one stage")
        dims = {m.shape[1] for m in self.stages}
        if len(dims) != 1:
            raise InvalidInputError(f"stages disagree on feature dim: {sorted(dims)}")
        if any(m.shape[0] < 1 for m in self.stages):
            raise InvalidInputError("every stage needs at least one codeword")

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def n_codewords(self) -> int:
        return self.stages[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.stages[0].shape[1]


@dataclass
class CodecSpec:
    stages: int
    codewords: int
    seed: int

    @property
    def codec_id(self) -> str:
        return f"rvq-s{self.stages}-k{self.codewords}"


@dataclass
class SynthConfig:
    languages: list[str] = field(default_factory=lambda: ["lang-a", "lang-b", "lang-c"])
    utterances_per_language: int = 800
    t_min: int = 40
    t_max: int = 120
    feature_dim: int = 24
    clusters_per_language: int = 4
    seen_codecs: list[CodecSpec] = field(
        default_factory=lambda: [CodecSpec(2, 64, 11), CodecSpec(4, 32, 12)]
    )
    unseen_codecs: list[CodecSpec] = field(
        default_factory=lambda: [CodecSpec(3, 16, 13), CodecSpec(1, 256, 14)]
    )
    d_w: int = 64
    d_t: int = 128
    seed: int = 1234
    split_fractions: dict[str, float] = field(
        default_factory=lambda: {"train": 0.5, "valid": 0.15, "test_seen": 0.2, "test_unseen": 0.15}
    )
    # Frame process: x_t = mu_cluster + AR(1) noise + sparse spikes.
    # Defaults are calibrated so the codec artifacts (variance shrink,
    # spike truncation) stand clear of per-utterance estimator noise.
    ar_rho: float = 0.0
    frame_sigma: float = 1.4
    cluster_spread: float = 0.9
    spike_prob: float = 0.0
    spike_sigma: float = 4.0
    # "disjoint" holds the second half of each language's speaker
    # clusters out of train/valid, so test splits carry a speaker shift
    # (as real corpora do); "shared" samples clusters uniformly.
    cluster_split: str = "disjoint"
    # Relative weight of the mean block inside the paralinguistic view's
    # linear map (the std block has weight 1). Keeps the shift-sensitive
    # speaker information mostly in the semantic view.
    mean_weight: float = 0.25

    def __post_init__(self):
        if not self.languages:
            raise InvalidInputError("need at least one language")
        if self.utterances_per_language < 1 or self.clusters_per_language < 1:
            raise InvalidInputError("counts must be >= 1")
        if not (1 <= self.t_min <= self.t_max):
            raise InvalidInputError(f"bad frame-count range [{self.t_min}, {self.t_max}]")
        seen_ids = {c.codec_id for c in self.seen_codecs}
        unseen_ids = {c.codec_id for c in self.unseen_codecs}
        if seen_ids & unseen_ids:
            raise InvalidInputError(f"seen/unseen codec ids overlap: {sorted(seen_ids & unseen_ids)}")
        for name, frac in self.split_fractions.items():
            if name not in dataio.SPLITS:
                raise InvalidInputError(f"unknown split {name!r}")
            if frac < 0:
                raise InvalidInputError(f"negative split fraction for {name}")
        if abs(sum(self.split_fractions.values()) - 1.0) > 1e-9:
            raise InvalidInputError("split fractions must sum to 1")
        if self.cluster_split not in ("disjoint", "shared"):
            raise InvalidInputError(f"unknown cluster_split {self.cluster_split!r}")

    def cluster_pool(self, split: str) -> range:
        """Speaker clusters an utterance of this split may come from."""
        k = self.clusters_per_language
        if self.cluster_split == "shared" or k < 2:
            return range(k)
        cut = (k + 1) // 2
        return range(cut, k) if split in ("test_seen", "test_unseen") else range(cut)


def nearest_codeword(residual: np.ndarray, codewords: np.ndarray) -> np.ndarray:
    """Index of the closest codeword per frame; ties go to the lowest index.

    Distances are computed as explicit squared differences (not the
    expanded dot-product form) so results match an exhaustive scan
    bit-for-bit.
    """
    t = residual.shape[0]
    out = np.empty(t, dtype=np.int64)
    # Chunked to bound the (chunk, K, F) broadcast buffer.
    chunk = max(1, (1 << 21) // max(1, codewords.shape[0] * codewords.shape[1]))
    for start in range(0, t, chunk):
        block = residual[start : start + chunk]
        d2 = ((block[:, None, :] - codewords[None, :, :]) ** 2).sum(axis=2)
        out[start : start + chunk] = np.argmin(d2, axis=1)
    return out


def _assign_fast(frames: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Assignment step via the expanded quadratic form (BLAS-backed).

    Only used inside Lloyd iterations; the public encode path sticks to
    nearest_codeword's direct differences.
    """
    c2 = (centroids * centroids).sum(axis=1)
    d2 = (frames * frames).sum(axis=1, keepdims=True) - 2.0 * frames @ centroids.T + c2
    return np.argmin(d2, axis=1)


def _kmeans(frames: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed-iteration Lloyd's algorithm with seeded distinct-frame init.

    When fewer than k distinct frames exist (late RVQ stages can see
    all-zero residuals) the init cycles the distinct set; duplicate
    centroids then simply stay empty and keep their value.
    """
    distinct = np.unique(frames, axis=0)
    n_distinct = distinct.shape[0]
    if n_distinct >= k:
        pick = rng.choice(n_distinct, size=k, replace=False)
        centroids = distinct[np.sort(pick)].copy()
    else:
        reps = -(-k // n_distinct)
        centroids = np.tile(distinct, (reps, 1))[:k].copy()
    for _ in range(iters):
        assign = _assign_fast(frames, centroids)
        sums = np.zeros((k, frames.shape[1]))
        np.add.at(sums, assign, frames)
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        occupied = counts > 0
        centroids[occupied] = sums[occupied] / counts[occupied, None]
    return centroids


def train_codebook(frames: list[np.ndarray], stages: int, codewords: int, seed: int,
                   iters: int = KMEANS_ITERS, codec_id: str | None = None) -> Codebook:
    """Fit an S-stage residual k-means codebook on training frames."""
    if not frames:
        raise InvalidInputError("no training frames")
    pool = np.concatenate([np.asarray(f, dtype=np.float64) for f in frames], axis=0)
    if pool.shape[0] < codewords:
        raise InvalidInputError(
            f"need at least {codewords} frames to fit {codewords} codewords, got {pool.shape[0]}"
        )
    rng = np.random.default_rng([seed, _STREAM_CLUSTERS])
    stage_mats = []
    residual = pool.copy()
    for _ in range(stages):
        centroids = _kmeans(residual, codewords, iters, rng)
        stage_mats.append(centroids)
        assign = nearest_codeword(residual, centroids)
        residual = residual - centroids[assign]
    cid = codec_id if codec_id is not None else f"rvq-s{stages}-k{codewords}"
    return Codebook(stages=stage_mats, codec_id=cid, seed=seed)


def encode(x: np.ndarray, cb: Codebook) -> np.ndarray:
    """Quantize a (T, F) sequence to (T, S) stage indices."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cb.feature_dim:
        raise InvalidInputError(
            f"frame dim {x.shape} does not match codebook feature dim {cb.feature_dim}"
        )
    codes = np.empty((x.shape[0], cb.n_stages), dtype=np.int64)
    residual = x.copy()
    for s, codewords in enumerate(cb.stages):
        idx = nearest_codeword(residual, codewords)
        codes[:, s] = idx
        residual -= codewords[idx]
    return codes


def decode(codes: np.ndarray, cb: Codebook) -> np.ndarray:
    """Reconstruct a (T, F) sequence as the sum of selected codewords."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != cb.n_stages:
        raise InvalidInputError(f"code shape {codes.shape} does not match {cb.n_stages} stages")
    out = np.zeros((codes.shape[0], cb.feature_dim), dtype=np.float64)
    for s, codewords in enumerate(cb.stages):
        idx = codes[:, s]
        if idx.min() < 0 or idx.max() >= codewords.shape[0]:
            raise InvalidInputError(f"stage {s} indices out of range [0, {codewords.shape[0]})")
        out += codewords[idx]
    return out


def embed_views(
    x: np.ndarray, proj_seed: int, d_w: int, d_t: int, mean_weight: float = 0.25
) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-encoder stand-ins: two seeded linear maps of frame statistics.

    The semantic view projects the frame mean; the paralinguistic view
    projects the concatenated per-dimension mean and standard deviation,
    which is where quantization's variance loss shows up. The mean block
    of the paralinguistic map carries ``mean_weight`` so speaker identity
    lives mostly in the semantic view.
    """
    x = np.asarray(x, dtype=np.float64)
    f = x.shape[1]
    rng = np.random.default_rng([proj_seed, _STREAM_PROJECTION])
    a_w = rng.standard_normal((d_w, f)) / np.sqrt(f)
    a_t = rng.standard_normal((d_t, 2 * f)) / np.sqrt(2 * f)
    a_t[:, :f] *= mean_weight
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    e_w = a_w @ mean
    e_t = a_t @ np.concatenate([mean, std])
    return e_w, e_t


def _utterance(
    cfg: SynthConfig,
    lang_idx: int,
    utt_idx: int,
    cluster_means: np.ndarray,
    cluster_pool=None,
) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, _STREAM_UTTERANCE, lang_idx, utt_idx])
    pool = list(cluster_pool) if cluster_pool is not None else list(range(cfg.clusters_per_language))
    cluster = pool[int(rng.integers(len(pool)))]
    t = int(rng.integers(cfg.t_min, cfg.t_max + 1))
    mu = cluster_means[lang_idx, cluster]
    innovations = rng.standard_normal((t, cfg.feature_dim)) * cfg.frame_sigma * np.sqrt(
        1.0 - cfg.ar_rho**2
    )
    s = np.empty((t, cfg.feature_dim))
    s[0] = rng.standard_normal(cfg.feature_dim) * cfg.frame_sigma
    for i in range(1, t):
        s[i] = cfg.ar_rho * s[i - 1] + innovations[i]
    spikes = np.zeros((t, cfg.feature_dim))
    if cfg.spike_prob > 0:
        mask = rng.random((t, cfg.feature_dim)) < cfg.spike_prob
        spikes = mask * rng.standard_normal((t, cfg.feature_dim)) * cfg.spike_sigma
    return mu + s + spikes


def _split_assignment(cfg: SynthConfig, n: int, lang_idx: int) -> list[str]:
    """Deterministic per-language split labels honoring the fractions."""
    rng = np.random.default_rng([cfg.seed, _STREAM_SPLIT, lang_idx])
    names = [s for s in dataio.SPLITS if cfg.split_fractions.get(s, 0.0) > 0]
    counts = {s: int(cfg.split_fractions[s] * n) for s in names}
    short = n - sum(counts.values())
    for s in names[:short]:
        counts[s] += 1
    labels = [s for s in names for _ in range(counts[s])]
    rng.shuffle(labels)
    return labels


def synth_corpus(cfg: SynthConfig, out_dir) -> dataio.CorpusManifest:
    """Generate a paired real/fake corpus and write it via dataio.

    Reals cover every split; each real in {train, valid, test_seen}
    gets one fake per seen codec and each test_unseen real gets one
    fake per unseen codec, preserving the real's split and language.
    Codebooks (seen and unseen alike) are fit on train-split real
    frames only.
    """
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise InvalidInputError(f"output directory {out} is not empty")

    cluster_rng = np.random.default_rng([cfg.seed, _STREAM_CLUSTERS])
    cluster_means = (
        cluster_rng.standard_normal(
            (len(cfg.languages), cfg.clusters_per_language, cfg.feature_dim)
        )
        * cfg.cluster_spread
    )

    utterances = []  # (id, language, split, frames)
    for li, lang in enumerate(cfg.languages):
        splits = _split_assignment(cfg, cfg.utterances_per_language, li)
        for ui in range(cfg.utterances_per_language):
            frames = _utterance(cfg, li, ui, cluster_means, cfg.cluster_pool(splits[ui]))
            utterances.append((f"{lang}-{ui:04d}", lang, splits[ui], frames))

    train_frames = [frames for (_, _, split, frames) in utterances if split == "train"]
    if not train_frames:
        raise InvalidInputError("no train-split utterances; codebooks cannot be fit")

    codebooks = {}
    for spec in list(cfg.seen_codecs) + list(cfg.unseen_codecs):
        codebooks[spec.codec_id] = train_codebook(
            train_frames, spec.stages, spec.codewords, spec.seed, codec_id=spec.codec_id
        )
    seen_ids = [c.codec_id for c in cfg.seen_codecs]
    unseen_ids = [c.codec_id for c in cfg.unseen_codecs]

    rows: list[dataio.ManifestRow] = []
    e_w_rows: list[np.ndarray] = []
    e_t_rows: list[np.ndarray] = []

    def _append(rec_id, label, codec_id, language, split, frames):
        e_w, e_t = embed_views(frames, cfg.seed, cfg.d_w, cfg.d_t, cfg.mean_weight)
        rows.append(
            dataio.ManifestRow(
                id=rec_id,
                label=label,
                codec_id=codec_id,
                language=language,
                split=split,
                row_index=len(rows),
            )
        )
        e_w_rows.append(e_w)
        e_t_rows.append(e_t)

    for rec_id, lang, split, frames in utterances:
        _append(rec_id, "real", None, lang, split, frames)
        codec_ids = unseen_ids if split == "test_unseen" else seen_ids
        for cid in codec_ids:
            cb = codebooks[cid]
            fake = decode(encode(frames, cb), cb)
            _append(f"{rec_id}{dataio.FAKE_ID_SEP}{cid}", "fake", cid, lang, split, fake)

    dataio.write_corpus(out, rows, np.stack(e_w_rows), np.stack(e_t_rows))
    return dataio.CorpusManifest(records=rows, dims=(cfg.d_w, cfg.d_t))
