"""Metrics and the experiment harness.

EER follows the threshold-sweep convention: sweep every distinct score,
FAR(t) = fraction of real records scored >= t (falsely flagged fake),
FRR(t) = fraction of fake records scored < t (falsely passed as real),
and the equal error rate is read off at the FAR = FRR crossing by
linear interpolation between the two bracketing sweep points. Because
the interpolation uses only the (FAR, FRR) step values, the estimate is
invariant under strictly increasing score transforms.

All rates are reported in percent.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dataio
from .errors import InvalidInputError
from .model import ModelConfig, ModelParams, PromptSpec, predict_batch, prompt_spec

REPORT_VERSION = 1


@dataclass
class ScoredPrediction:
    id: str
    score: float
    decision: str
    truth: str


@dataclass
class EvalReport:
    variant: str
    seed: int
    split: str
    acc: float
    eer: float
    eer_threshold: float
    counts: dict[str, int]
    by_language: dict[str, dict] = field(default_factory=dict)
    by_codec: dict[str, dict] = field(default_factory=dict)
    codec_novelty_pct: float | None = None
    report_version: int = REPORT_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


#: Minimal JSON-schema for EvalReport round trips.
REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "report_version",
        "variant",
        "seed",
        "split",
        "acc",
        "eer",
        "eer_threshold",
        "counts",
        "by_language",
        "by_codec",
    ],
    "properties": {
        "report_version": {"const": REPORT_VERSION},
        "variant": {"type": "string"},
        "seed": {"type": "integer"},
        "split": {"type": "string"},
        "acc": {"type": "number", "minimum": 0, "maximum": 100},
        "eer": {"type": "number", "minimum": 0, "maximum": 100},
        "eer_threshold": {"type": "number"},
        "counts": {"type": "object"},
        "by_language": {"type": "object"},
        "by_codec": {"type": "object"},
        "codec_novelty_pct": {"type": ["number", "null"]},
    },
}


def compute_eer(scores, labels) -> tuple[float, float]:
    """Interpolated equal error rate, in percent, with its threshold.

    ``labels`` marks each score as "real" or "fake"; scores are the
    model's Fake probabilities (any monotone scoring works). Requires
    at least one record of each class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise InvalidInputError("scores and labels must be matching 1-D arrays")
    real = np.sort(scores[labels == "real"])
    fake = np.sort(scores[labels == "fake"])
    if real.size == 0 or fake.size == 0:
        raise InvalidInputError("EER needs at least one real and one fake record")

    thresholds = np.unique(scores)
    # Finite sentinels below/above every score play the role of -inf/+inf.
    t = np.concatenate([[thresholds[0] - 1.0], thresholds, [thresholds[-1] + 1.0]])
    far = 1.0 - np.searchsorted(real, t, side="left") / real.size
    frr = np.searchsorted(fake, t, side="left") / fake.size
    return _interp_crossing(t, far, frr)


def _interp_crossing(t, far, frr) -> tuple[float, float]:
    d = far - frr
    mask = (d[:-1] >= 0) & (d[1:] <= 0)
    i = int(np.argmax(mask))
    alpha = d[i] / (d[i] - d[i + 1])
    eer = far[i] + alpha * (far[i + 1] - far[i])
    threshold = t[i] + alpha * (t[i + 1] - t[i])
    return 100.0 * float(eer), float(threshold)


def accuracy(preds: list[ScoredPrediction]) -> float:
    if not preds:
        raise InvalidInputError("no predictions")
    return 100.0 * sum(p.decision == p.truth for p in preds) / len(preds)


def eer_from_preds(preds: list[ScoredPrediction]) -> tuple[float, float]:
    return compute_eer([p.score for p in preds], [p.truth for p in preds])


def score_split(
    corpus: dataio.Corpus,
    split: str,
    params: ModelParams,
    mcfg: ModelConfig,
    prompt: PromptSpec | None = None,
) -> list[ScoredPrediction]:
    """Score every record of a split in manifest order."""
    records = corpus.split_records(split)
    if not records:
        raise InvalidInputError(f"split {split!r} is empty")
    if prompt is None:
        prompt = prompt_spec(mcfg.prompt_id, mcfg.d)
    scores, decisions = predict_batch(records, params, mcfg, prompt)
    return [
        ScoredPrediction(id=r.id, score=float(s), decision=str(dec), truth=r.label)
        for r, s, dec in zip(records, scores, decisions)
    ]


def evaluate(
    params: ModelParams,
    mcfg: ModelConfig,
    corpus: dataio.Corpus,
    split: str,
    seed: int = 0,
    dims: tuple[int, int] | None = None,
    prompt: PromptSpec | None = None,
) -> tuple[EvalReport, list[ScoredPrediction]]:
    """Accuracy, EER and per-codec / per-language breakdowns for a split."""
    if dims is not None and tuple(dims) != corpus.dims:
        raise InvalidInputError(
            f"checkpoint was trained on dims {tuple(dims)} but corpus has {corpus.dims}"
        )
    preds = score_split(corpus, split, params, mcfg, prompt)
    records = corpus.split_records(split)
    acc = accuracy(preds)
    eer, threshold = eer_from_preds(preds)

    by_language: dict[str, dict] = {}
    for lang in sorted({r.language for r in records}):
        sub = [p for p, r in zip(preds, records) if r.language == lang]
        by_language[lang] = _subset_metrics(sub)
    by_codec: dict[str, dict] = {}
    real_preds = [p for p in preds if p.truth == "real"]
    for codec in sorted({r.codec_id for r in records if r.codec_id is not None}):
        fakes = [p for p, r in zip(preds, records) if r.codec_id == codec]
        by_codec[codec] = _subset_metrics(fakes + real_preds, n_fake=len(fakes))

    counts = {
        "n_total": len(records),
        "n_real": sum(r.label == "real" for r in records),
        "n_fake": sum(r.label == "fake" for r in records),
    }
    report = EvalReport(
        variant=mcfg.variant,
        seed=seed,
        split=split,
        acc=acc,
        eer=eer,
        eer_threshold=threshold,
        counts=counts,
        by_language=by_language,
        by_codec=by_codec,
    )
    return report, preds


def _subset_metrics(preds: list[ScoredPrediction], n_fake: int | None = None) -> dict:
    truths = {p.truth for p in preds}
    out = {
        "n": len(preds) if n_fake is None else n_fake,
        "acc": accuracy(preds) if preds else None,
    }
    if len(truths) == 2:
        out["eer"] = eer_from_preds(preds)[0]
    else:
        out["eer"] = None
    return out


def validate_report_json(text: str) -> dict:
    """Parse and schema-check a serialized EvalReport; returns the dict."""
    import jsonschema

    obj = json.loads(text)
    jsonschema.validate(obj, REPORT_SCHEMA)
    return obj


def cross_domain(
    train_dir,
    test_dir,
    mcfg: ModelConfig,
    tcfg,
    split: str = "test_seen",
):
    """Train on corpus A's train split, evaluate on corpus B's test split.

    The report carries ``codec_novelty_pct``: the share of B's test-split
    fakes whose codec never occurs in A's train split (100 means a fully
    disjoint codec family).
    """
    from . import trainer

    corpus_a = dataio.load_corpus(train_dir)
    corpus_b = dataio.load_corpus(test_dir)
    if corpus_a.dims != corpus_b.dims:
        raise InvalidInputError(
            f"embedding dims differ: {train_dir} has {corpus_a.dims}, {test_dir} has {corpus_b.dims}"
        )
    params, log = trainer.train(corpus_a, mcfg, tcfg)
    report, preds = evaluate(params, mcfg, corpus_b, split, seed=tcfg.seed)
    train_codecs = {
        r.codec_id for r in corpus_a.manifest.records if r.split == "train" and r.codec_id
    }
    test_fakes = [r for r in corpus_b.manifest.records if r.split == split and r.label == "fake"]
    if test_fakes:
        novel = sum(r.codec_id not in train_codecs for r in test_fakes)
        report = replace(report, codec_novelty_pct=100.0 * novel / len(test_fakes))
    return report, preds, params, log


def mcnemar(preds_a: list[ScoredPrediction], preds_b: list[ScoredPrediction]) -> tuple[float, float]:
    """Two-sided McNemar test on paired predictions.

    Uses the exact binomial tail when the discordant count b + c is at
    most 25, otherwise the continuity-corrected chi-square statistic
    (|b - c| - 1)^2 / (b + c). Returns (statistic, p_value); on the
    exact path the statistic is min(b, c).
    """
    a_by_id = {p.id: p for p in preds_a}
    b_by_id = {p.id: p for p in preds_b}
    if set(a_by_id) != set(b_by_id):
        raise InvalidInputError("prediction sets cover different ids")
    if len(a_by_id) != len(preds_a) or len(b_by_id) != len(preds_b):
        raise InvalidInputError("duplicate ids in predictions")
    b_count = 0
    c_count = 0
    for pid, pa in a_by_id.items():
        pb = b_by_id[pid]
        if pa.truth != pb.truth:
            raise InvalidInputError(f"record {pid}: truth labels disagree")
        a_right = pa.decision == pa.truth
        b_right = pb.decision == pb.truth
        if a_right and not b_right:
            b_count += 1
        elif b_right and not a_right:
            c_count += 1
    n = b_count + c_count
    if n == 0:
        return 0.0, 1.0
    if n <= 25:
        k = min(b_count, c_count)
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0**n
        return float(k), min(1.0, 2.0 * tail)
    stat = (abs(b_count - c_count) - 1.0) ** 2 / n
    # Chi-square survival with one degree of freedom.
    p = math.erfc(math.sqrt(stat / 2.0))
    return stat, p


def ablation_sweep(
    corpus: dataio.Corpus,
    variants: list[str],
    seeds: list[int],
    mcfg_base: ModelConfig,
    tcfg_base,
    out_dir,
    split: str = "test_seen",
) -> dict:
    """Train/evaluate every (variant, seed) pair and summarize.

    Writes ablation.csv (one row per run, fixed column order), an
    ablation.json summary with mean/std metrics and McNemar p-values
    against the satyam variant (pooled over seeds), and a deterministic
    SVG bar chart of mean EERs.
    """
    from . import trainer

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    preds_by_variant: dict[str, list[ScoredPrediction]] = {v: [] for v in variants}
    for variant in variants:
        mcfg = replace(mcfg_base, variant=variant)
        for seed in seeds:
            tcfg = replace(tcfg_base, seed=seed)
            params, _ = trainer.train(corpus, mcfg, tcfg)
            report, preds = evaluate(params, mcfg, corpus, split, seed=seed)
            runs.append(report)
            preds_by_variant[variant].extend(
                replace(p, id=f"{p.id}@{seed}") for p in preds
            )

    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "split", "acc", "eer", "eer_threshold"])
        for r in runs:
            writer.writerow([r.variant, r.seed, r.split, f"{r.acc:.6f}", f"{r.eer:.6f}", f"{r.eer_threshold:.9g}"])

    summary: dict = {"report_version": REPORT_VERSION, "split": split, "variants": {}}
    for variant in variants:
        accs = [r.acc for r in runs if r.variant == variant]
        eers = [r.eer for r in runs if r.variant == variant]
        summary["variants"][variant] = {
            "acc_mean": float(np.mean(accs)),
            "acc_std": float(np.std(accs)),
            "eer_mean": float(np.mean(eers)),
            "eer_std": float(np.std(eers)),
            "n_runs": len(accs),
        }
    if "satyam" in variants:
        for variant in variants:
            if variant == "satyam":
                continue
            stat, p = mcnemar(preds_by_variant["satyam"], preds_by_variant[variant])
            summary["variants"][variant]["mcnemar_vs_satyam"] = {"statistic": stat, "p_value": p}
    with open(out / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_eer_svg(out / "ablation_eer.svg", summary["variants"], variants)
    return summary


def _write_eer_svg(path, stats: dict, order: list[str]) -> None:
    """Hand-rolled bar chart so output bytes are fully deterministic."""
    width, height, margin = 640, 360, 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    eers = [stats[v]["eer_mean"] for v in order]
    top = max(5.0, max(eers) * 1.2)
    bar_w = plot_w / max(1, len(order)) * 0.7
    gap = plot_w / max(1, len(order))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{margin - 20}" font-size="14">mean EER (%) by variant</text>',
    ]
    for i, v in enumerate(order):
        h = plot_h * stats[v]["eer_mean"] / top
        x = margin + i * gap + (gap - bar_w) / 2
        y = height - margin - h
        parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" fill="#4477aa"/>')
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{height - margin + 16}" font-size="10" '
            f'text-anchor="middle">{v}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" font-size="10" '
            f'text-anchor="middle">{stats[v]["eer_mean"]:.2f}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def save_predictions(preds: list[ScoredPrediction], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(asdict(p), sort_keys=True) + "\n")


def load_predictions(path) -> list[ScoredPrediction]:
    preds = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                preds.append(
                    ScoredPrediction(
                        id=obj["id"],
                        score=float(obj["score"]),
                        decision=obj["decision"],
                        truth=obj["truth"],
                    )
                )
    return preds
