"""Command-line entry point.

One executable, seven subcommands: synth, validate, train, eval,
transfer, ablate, mcnemar. Configs are TOML; every value can be
overridden on the command line with --set dotted.key=value. Each
command writes a run_manifest.json (resolved config, tool version,
input digests) beside its outputs so any run is reproducible from the
manifest alone.

Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, dataio, evalsuite, trainer
from .codecsim import CodecSpec, SynthConfig, synth_corpus
from .errors import (
    CfdetError,
    CheckpointError,
    ConfigError,
    DataValidationError,
    FormatError,
    InvalidInputError,
)
from .model import VARIANTS, ModelConfig
from .trainer import TrainConfig

_USAGE_ERRORS = (
    ConfigError,
    InvalidInputError,
    DataValidationError,
    FormatError,
    CheckpointError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load_toml(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc


def _parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    path = key.strip().split(".")
    if any(not p for p in path):
        raise ConfigError(f"override key {key!r} is malformed")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def _apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    for item in overrides or []:
        path, value = _parse_override(item)
        node = cfg
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-table value")
        node[path[-1]] = value
    return cfg


def _take(table: dict, allowed: set[str], context: str) -> dict:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")
    return table


def _build_synth_config(cfg: dict, seed: int | None) -> SynthConfig:
    table = dict(cfg.get("corpus", {}))
    _take(
        dict(cfg), {"corpus"}, "config"
    )
    allowed = {f.name for f in fields(SynthConfig)} | {"seen_codecs", "unseen_codecs"}
    _take(table, allowed, "corpus")
    for side in ("seen_codecs", "unseen_codecs"):
        if side in table:
            table[side] = [
                CodecSpec(
                    stages=int(c["stages"]), codewords=int(c["codewords"]), seed=int(c["seed"])
                )
                for c in table[side]
            ]
    if "split_fractions" in table:
        table["split_fractions"] = {k: float(v) for k, v in table["split_fractions"].items()}
    if seed is not None:
        table["seed"] = seed
    return SynthConfig(**table)


def _build_model_config(cfg: dict, variant: str | None) -> ModelConfig:
    table = dict(cfg.get("model", {}))
    _take(table, {f.name for f in fields(ModelConfig)}, "model")
    if variant is not None:
        table["variant"] = variant
    return ModelConfig(**table)


def _build_train_config(cfg: dict, seed: int | None) -> TrainConfig:
    table = dict(cfg.get("train", {}))
    _take(table, {f.name for f in fields(TrainConfig)}, "train")
    if seed is not None:
        table["seed"] = seed
    return TrainConfig(**table)


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _corpus_digests(data_dir: Path) -> dict[str, str]:
    out = {}
    for name in (dataio.MANIFEST_NAME, dataio.SEMANTIC_NAME, dataio.PARALINGUISTIC_NAME):
        p = data_dir / name
        if p.exists():
            out[str(p)] = _digest(p)
    return out


def _write_run_manifest(out_dir: Path, subcommand: str, config: dict, inputs: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "cfdet",
        "version": __version__,
        "subcommand": subcommand,
        "resolved_config": config,
        "input_digests": inputs,
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_synth(args) -> int:
    cfg = _apply_overrides(_load_toml(args.config), args.set)
    scfg = _build_synth_config(cfg, args.seed)
    synth_corpus(scfg, args.out)
    out = Path(args.out)
    resolved = asdict(scfg)
    _write_run_manifest(out, "synth", resolved, {})
    report = dataio.validate_corpus(out)
    if not report.ok:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return 1
    n = len(dataio.read_manifest(out / dataio.MANIFEST_NAME))
    print(f"wrote corpus with {n} records to {out}")
    return 0


def _cmd_validate(args) -> int:
    report = dataio.validate_corpus(args.data)
    if report.ok:
        print(f"{args.data}: ok")
        return 0
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    return 1


def _cmd_train(args) -> int:
    cfg = _apply_overrides(_load_toml(args.config), args.set)
    mcfg = _build_model_config(cfg, args.variant)
    tcfg = _build_train_config(cfg, args.seed)
    corpus = dataio.load_corpus(args.data)
    report = dataio.validate_corpus(args.data)
    if not report.ok:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return 1
    params, log = trainer.train(corpus, mcfg, tcfg)
    out = Path(args.out)
    trainer.save_checkpoint(params, mcfg, out, corpus.dims, train_seed=tcfg.seed)
    log.save_jsonl(out / "train_log.jsonl")
    _write_run_manifest(
        out,
        "train",
        {"model": asdict(mcfg), "train": asdict(tcfg)},
        _corpus_digests(Path(args.data)),
    )
    last = log.epochs[-1]
    eer_txt = "n/a" if last.val_eer is None else f"{last.val_eer:.2f}"
    print(
        f"trained {mcfg.variant} for {tcfg.epochs} epochs "
        f"({len(log.steps)} steps); valid acc {last.val_acc:.2f}%, eer {eer_txt}%"
    )
    return 0


def _cmd_eval(args) -> int:
    params, mcfg, dims = trainer.load_checkpoint(args.ckpt)
    corpus = dataio.load_corpus(args.data)
    report, preds = evalsuite.evaluate(
        params, mcfg, corpus, args.split, seed=args.seed or 0, dims=dims
    )
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json(), encoding="utf-8")
    preds_path = report_path.with_suffix(".preds.jsonl")
    evalsuite.save_predictions(preds, preds_path)
    _write_run_manifest(
        report_path.parent,
        "eval",
        {"ckpt": str(args.ckpt), "split": args.split},
        _corpus_digests(Path(args.data)),
    )
    print(f"{args.split}: acc {report.acc:.2f}%, eer {report.eer:.2f}% -> {report_path}")
    return 0


def _cmd_transfer(args) -> int:
    cfg = _apply_overrides(_load_toml(args.config), args.set)
    mcfg = _build_model_config(cfg, args.variant)
    tcfg = _build_train_config(cfg, args.seed)
    report, preds, params, _log = evalsuite.cross_domain(
        args.train_data, args.test_data, mcfg, tcfg, split=args.split
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "transfer_report.json").write_text(report.to_json(), encoding="utf-8")
    evalsuite.save_predictions(preds, out / "transfer_report.preds.jsonl")
    inputs = _corpus_digests(Path(args.train_data))
    inputs.update(_corpus_digests(Path(args.test_data)))
    _write_run_manifest(out, "transfer", {"model": asdict(mcfg), "train": asdict(tcfg)}, inputs)
    novelty = "n/a" if report.codec_novelty_pct is None else f"{report.codec_novelty_pct:.0f}%"
    print(
        f"transfer {args.train_data} -> {args.test_data} [{args.split}]: "
        f"acc {report.acc:.2f}%, eer {report.eer:.2f}%, codec novelty {novelty}"
    )
    return 0


def _cmd_ablate(args) -> int:
    cfg = _apply_overrides(_load_toml(args.config), args.set)
    mcfg = _build_model_config(cfg, None)
    tcfg = _build_train_config(cfg, None)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variants {unknown}; expected subset of {VARIANTS}")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not variants or not seeds:
        raise ConfigError("ablate needs at least one variant and one seed")
    corpus = dataio.load_corpus(args.data)
    summary = evalsuite.ablation_sweep(
        corpus, variants, seeds, mcfg, tcfg, args.out, split=args.split
    )
    _write_run_manifest(
        Path(args.out),
        "ablate",
        {"model": asdict(mcfg), "train": asdict(tcfg), "variants": variants, "seeds": seeds},
        _corpus_digests(Path(args.data)),
    )
    for variant in variants:
        s = summary["variants"][variant]
        print(
            f"{variant}: acc {s['acc_mean']:.2f}+-{s['acc_std']:.2f}%, "
            f"eer {s['eer_mean']:.2f}+-{s['eer_std']:.2f}%"
        )
    return 0


def _cmd_mcnemar(args) -> int:
    preds_a = evalsuite.load_predictions(args.preds_a)
    preds_b = evalsuite.load_predictions(args.preds_b)
    stat, p = evalsuite.mcnemar(preds_a, preds_b)
    result = {"statistic": stat, "p_value": p}
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cfdet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cfdet {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired corpus")
    p.add_argument("--config", help="SynthConfig TOML ([corpus] table)")
    p.add_argument("--out", required=True, help="output corpus directory (must be empty)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="check a corpus directory")
    p.add_argument("data", help="corpus directory")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("train", help="train one variant on a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--config", help="TOML with [model] and [train] tables")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True, choices=dataio.SPLITS)
    p.add_argument("--report", required=True, help="report JSON output path")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("transfer", help="train on corpus A, test on corpus B")
    p.add_argument("--train-data", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--split", default="test_seen", choices=dataio.SPLITS)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("ablate", help="train/evaluate a variant x seed grid")
    p.add_argument("--data", required=True)
    p.add_argument("--variants", required=True, help="comma-separated variant list")
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--split", default="test_seen", choices=dataio.SPLITS)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("mcnemar", help="paired significance test on two prediction files")
    p.add_argument("--preds-a", required=True)
    p.add_argument("--preds-b", required=True)
    p.add_argument("--report", help="optional JSON output path")
    p.set_defaults(func=_cmd_mcnemar)
    return parser


def main(argv=None) -> int:
    try:
        import torch

        torch.set_num_threads(max(1, int(os.environ.get("ICF_THREADS", "1"))))
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CfdetError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
