"""Command-line entry point: ``pelspeech <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .audio import Manifest, SynthConfig, log_mel, read_wav, write_synthetic_dataset
from .labelmap import random_map
from .model import ModelConfig, TransformerModel
from .pel import ScopeSelector, base_param_count, count_params
from .persistence import CheckpointError, ConfigError, RunConfig, load_model, save_model, spectrogram_of
from .saliency import SaliencyConfig, mask_diff, model_prob_fn, occlusion_map, save_csv, save_pgm
from .train import (ClipDataset, EvalReport, Head, derive_rng, evaluate_accuracy, fingerprint,
                    lr_sweep, prepare_model, pretrain_backbone, train, trainable_ratio, utility_score,
                    write_report)

log = logging.getLogger("pelspeech")


class CliError(Exception):
    pass


def provenance(command: str, argv: list[str], payload: dict, seed: int | None) -> dict:
    return {
        "command": command,
        "argv": argv,
        "config_fingerprint": fingerprint(payload),
        "seed": seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
    }


def emit_provenance(block: dict, out_dir: Path | None) -> None:
    if out_dir is None:
        print("provenance: " + json.dumps(block, sort_keys=True), file=sys.stderr)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "provenance.json").write_text(json.dumps(block, indent=2, sort_keys=True) + "\n")


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}")
    return p


def _resolve(base: Path, p: str | None) -> Path | None:
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() else base / q


def _dataset(manifest_path: Path | None, spec, what: str) -> ClipDataset | None:
    if manifest_path is None:
        return None
    return ClipDataset.from_manifest(Manifest.load(_existing(manifest_path, f"{what} manifest")), spec)


def _manifest_in(path: Path) -> Path:
    if path.is_file():
        return path
    for split in ("test", "dev", "train"):
        cand = path / f"{split}_manifest.json"
        if cand.exists():
            return cand
    raise CliError(f"no *_manifest.json in {path}")


def _load_run(path: str) -> tuple[RunConfig, Path]:
    p = _existing(path, "config")
    return RunConfig.load(p), p.parent


def _backbone(run: RunConfig, base: Path) -> TransformerModel:
    if run.backbone == "random":
        return TransformerModel.init(run.model, derive_rng(run.seed, "model"))
    if run.backbone == "pretrained":
        return pretrain_backbone(run.model, seed=run.seed, spec=run.spectrogram)
    model, _, _ = load_model(_existing(_resolve(base, run.backbone), "backbone checkpoint"))
    for name in model.registry:
        model.registry.set_trainable(name, True)
    return model


def _prepare(model: TransformerModel, run: RunConfig, n_classes: int) -> Head:
    head = prepare_model(model, run.train, n_classes)
    if run.label_map is not None:
        if run.train.head.mode != "map":
            raise CliError("label_map is only meaningful with the map head")
        if run.label_map.n_dialects != n_classes:
            raise CliError(f"label_map has {run.label_map.n_dialects} groups for {n_classes} classes")
        head = Head("map", run.label_map)
    return head


# -- subcommands ----------------------------------------------------------------------------


def cmd_synth_data(args) -> None:
    cfg = SynthConfig(n_classes=args.classes, layout=args.layout)
    out = Path(args.out)
    splits = [("train", args.per_class), ("dev", args.dev_per_class), ("test", args.test_per_class)]
    for split, n in splits:
        if n > 0:
            m = write_synthetic_dataset(out, n, derive_rng(args.seed, f"synth-{split}"), cfg,
                                        duration=args.duration, split=split)
            print(f"{split}: {len(m.entries)} clips -> {out / (split + '_manifest.json')}")
    payload = {"synth": asdict(cfg), "splits": splits, "duration": args.duration}
    emit_provenance(provenance("synth-data", args.argv, payload, args.seed), out)


def _train_once(run: RunConfig, base: Path, out: Path, argv: list[str]) -> EvalReport:
    spec = run.spectrogram
    data = _dataset(_resolve(base, run.data.train), spec, "train")
    if data is None:
        raise CliError("config has no data.train manifest")
    dev = _dataset(_resolve(base, run.data.dev), spec, "dev")
    test = _dataset(_resolve(base, run.data.test), spec, "test") or dev or data
    n_classes = len(data.by_class())
    model = _backbone(run, base)
    base_total = base_param_count(model)
    head = _prepare(model, run, n_classes)
    result = train(model, run.train, head, data, dev)
    dev_acc = evaluate_accuracy(model, head, dev) if dev is not None else float("nan")
    test_acc = evaluate_accuracy(model, head, test)
    count = model.registry.trainable_count()
    report = EvalReport(dev_acc, test_acc, count, trainable_ratio(count, base_total),
                        utility_score(test_acc, count) if count >= 2 else None, run.fingerprint(),
                        label=str(run.train.selector), base_lr=run.train.base_lr)
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance("train", argv, run.to_dict(), run.seed)
    prov.update(epochs_completed=len(result.loss_curve), best_dev=result.best_dev,
                best_epoch=result.best_epoch)
    save_model(model, out / "model.ckpt", head, spec, prov)
    write_report(report, out)
    (out / "loss.csv").write_text(result.loss_csv())
    run.save(out / "config.json")
    emit_provenance(prov, out)
    return report


def cmd_train(args) -> None:
    run, base = _load_run(args.config)
    out = Path(args.out) if args.out else _resolve(base, run.output_dir)
    print(_train_once(run, base, out, args.argv).table_line())


def cmd_eval(args) -> None:
    model, head, manifest = load_model(_existing(args.ckpt, "checkpoint"))
    if head is None:
        raise CliError("checkpoint has no dialect head; nothing to evaluate")
    spec = spectrogram_of(manifest)
    data = _dataset(_manifest_in(_existing(args.data, "data")), spec, "eval")
    acc = evaluate_accuracy(model, head, data)
    count = model.registry.trainable_count()
    prov = manifest.get("provenance", {})
    report = EvalReport(acc, acc, count, trainable_ratio(count, base_param_count(model)),
                        utility_score(acc, count) if count >= 2 else None,
                        prov.get("config_fingerprint", ""), label="eval")
    out = Path(args.out) if args.out else None
    if out is not None:
        write_report(report, out, stem="eval")
    print(report.table_line())
    emit_provenance(provenance("eval", args.argv, {"ckpt": prov, "data": str(args.data)}, prov.get("seed")), out)


def cmd_sweep(args) -> None:
    run, base = _load_run(args.config)
    try:
        lrs = [float(x) for x in args.lrs.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(f"bad --lrs value {args.lrs!r}") from exc
    if not lrs:
        raise CliError("--lrs is empty")
    spec = run.spectrogram
    data = _dataset(_resolve(base, run.data.train), spec, "train")
    dev = _dataset(_resolve(base, run.data.dev), spec, "dev")
    if data is None or dev is None:
        raise CliError("sweep needs data.train and data.dev manifests")
    test = _dataset(_resolve(base, run.data.test), spec, "test") or dev
    backbone = _backbone(run, base)
    sweep, runs = lr_sweep(backbone.clone, run.train, data, dev, test, lrs, label=str(run.train.selector))
    out = Path(args.out) if args.out else _resolve(base, run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [EvalReport.csv_header()]
    for lr, rep in zip(lrs, sweep.reports):
        write_report(rep, out, stem=f"report_lr{lr:g}")
        lines.append(rep.csv_row())
        print(rep.table_line() + f" (lr {lr:g})")
    (out / "sweep.csv").write_text("".join(lines))
    print(sweep.winner_line())
    (out / "winner.txt").write_text(sweep.winner_line() + "\n")
    prov = provenance("sweep", args.argv, {**run.to_dict(), "lrs": lrs}, run.seed)
    prov["winner_lr"] = lrs[sweep.winner]
    model, head = runs[sweep.winner]
    save_model(model, out / "model.ckpt", head, spec, prov)
    emit_provenance(prov, out)


def cmd_count_params(args) -> None:
    try:
        selector = ScopeSelector.parse(args.scope)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    model, _, manifest = load_model(_existing(args.ckpt, "checkpoint"))
    count = count_params(model, selector)
    total = base_param_count(model)
    print(f"{selector}: {count:,} trainable of {total:,} ({trainable_ratio(count, total):.2f}%)")
    emit_provenance(provenance("count-params", args.argv, {"scope": str(selector)},
                               manifest.get("provenance", {}).get("seed")), None)


def cmd_saliency(args) -> None:
    model, head, manifest = load_model(_existing(args.ckpt, "checkpoint"))
    if head is None:
        raise CliError("checkpoint has no dialect head")
    spec = spectrogram_of(manifest)
    mel = log_mel(read_wav(_existing(args.wav, "wav")), spec)
    fill = args.fill if args.fill == "median" else float(args.fill if args.fill is not None else spec.silence_value)
    cfg = SaliencyConfig(args.patch_mels, args.patch_frames, fill_value=fill)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    smap = occlusion_map(model_prob_fn(model, head), mel, cfg)
    save_csv(out / "saliency.csv", smap.values)
    save_pgm(out / "saliency.pgm", smap.values, 0.0, 1.0)
    print(f"class {smap.target} p={smap.baseline_prob:.4f} -> {out / 'saliency.csv'}")
    if args.diff:
        other, other_head, _ = load_model(_existing(args.diff, "checkpoint"))
        if other_head is None:
            raise CliError("--diff checkpoint has no dialect head")
        omap = occlusion_map(model_prob_fn(other, other_head), mel, cfg)
        diff = mask_diff(smap, omap)
        save_csv(out / "saliency_other.csv", omap.values)
        save_csv(out / "diff.csv", diff)
        save_pgm(out / "diff.pgm", diff, -1.0, 1.0)
        print(f"mean |diff| {np.abs(diff).mean():.4f} -> {out / 'diff.csv'}")
    payload = {"ckpt": str(args.ckpt), "wav": str(args.wav), "diff": args.diff, "cfg": asdict(cfg)}
    emit_provenance(provenance("saliency", args.argv, payload, None), out)


def cmd_map_labels(args) -> None:
    pool = ModelConfig().language_tokens if args.pool is None else _parse_pool(args.pool)
    try:
        lmap = random_map(args.dialects, args.per_dialect, pool, np.random.default_rng(args.seed))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    print(json.dumps(lmap.to_dict()))
    emit_provenance(provenance("map-labels", args.argv, {"dialects": args.dialects,
                                                         "per_dialect": args.per_dialect,
                                                         "pool": list(pool)}, args.seed), None)


def _parse_pool(text: str) -> list[int]:
    """``"1-99"`` or ``"3,5,8"``."""
    try:
        if "-" in text:
            lo, hi = text.split("-")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise CliError(f"bad --pool {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pelspeech", description="Parameter-efficient dialect classification toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="write synthetic dialect clips and manifests")
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dev-per-class", type=int, default=0)
    s.add_argument("--test-per-class", type=int, default=0)
    s.add_argument("--duration", type=float, default=30.0)
    s.add_argument("--layout", choices=["bands", "pairs"], default="bands")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train", help="train one configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True, help="manifest file or directory holding one")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="learning-rate sweep with best-dev selection")
    s.add_argument("--config", required=True)
    s.add_argument("--lrs", default="1e-2,1e-3,1e-4")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("count-params", help="trainable count and ratio for a scope")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--scope", required=True, help="region[:kind], e.g. encoder:bias_only")
    s.set_defaults(func=cmd_count_params)

    s = sub.add_parser("saliency", help="occlusion map of one clip (optionally diffed against a second model)")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--wav", required=True)
    s.add_argument("--diff")
    s.add_argument("--out", default="saliency")
    s.add_argument("--patch-mels", type=int, default=8)
    s.add_argument("--patch-frames", type=int, default=50)
    s.add_argument("--fill", help="scalar fill or 'median' (default: silence floor)")
    s.set_defaults(func=cmd_saliency)

    s = sub.add_parser("map-labels", help="draw and print a random label map")
    s.add_argument("--dialects", type=int, required=True)
    s.add_argument("--per-dialect", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pool", help="token ids, '1-99' or '3,5,8' (default: the language tokens)")
    s.set_defaults(func=cmd_map_labels)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ConfigError, CheckpointError, OSError, ValueError) as exc:
        print(f"pelspeech {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
