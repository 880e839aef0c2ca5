"""Command-line surface: data generation, gradient checks, training, evaluation,
prediction, and heatmap export.

Exit codes: 0 success, 1 check or validation failure, 2 bad usage, 3 I/O or
format error. Config precedence is flag > config file > built-in default, and
every command prints its resolved configuration before acting.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .errors import ConfigError, FormatError, InputError, MetricError
from .evaluate import (CenterBaseline, FixedBiasBaseline, ModelPredictor,
                       RandomBaseline, run_eval)
from .learning import (GRADCHECK_TOLERANCES, TrainConfig, build_model,
                       gradcheck, gradcheck_all, train, write_metrics_csv)
from .model import load_model
from .scenes import GenConfig, make_dataset


def _resolve_config(cls, config_path, overrides: dict):
    cfg = cls()
    if config_path:
        gio.apply_config_values(cfg, gio.read_config_text(config_path))
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _echo_config(cfg, extra: dict | None = None):
    print("resolved configuration:")
    for f in dataclasses.fields(cfg):
        print(f"  {f.name} = {getattr(cfg, f.name)}")
    for key, value in (extra or {}).items():
        print(f"  {key} = {value}")


def _cmd_gen_data(args) -> int:
    cfg = _resolve_config(GenConfig, args.config, {
        "n_samples": args.count, "mixed_scenes": args.mixed_scenes,
    })
    _echo_config(cfg, {"seed": args.seed, "out": args.out})
    samples = make_dataset(cfg, args.seed)
    gio.write_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    print(f"resolved configuration:\n  component = {args.component}\n  seed = {args.seed}")
    reports = gradcheck_all(args.seed) if args.component == "all" else [
        gradcheck(args.component, args.seed)]
    ok = True
    for report in reports:
        print(f"[{report.component}]")
        print(report.table())
        ok = ok and report.passed
    return 0 if ok else 1


def _cmd_train(args) -> int:
    cfg = _resolve_config(TrainConfig, args.config, {
        "seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr,
        "family": args.family, "extension": args.extension,
        "optimizer": args.optimizer,
    })
    _echo_config(cfg, {"data": args.data, "out": args.out})
    samples = gio.read_dataset(args.data)
    model = build_model(cfg)
    history = train(model, samples, cfg)
    model.save(args.out)
    log_path = Path(args.out).with_suffix(".metrics.csv")
    write_metrics_csv(log_path, history)
    final = history[-1]
    print(f"saved checkpoint to {args.out}; metrics log {log_path}")
    print(f"final: epoch {final.epoch} {final.split} loss {final.loss:.4f} "
          f"auc {final.auc:.4f} l2 {final.l2:.4f}")
    return 0


def _parse_ablations(spec: str | None):
    pairs = []
    if spec:
        for part in spec.split(","):
            if "=" not in part:
                raise ConfigError(f"--ablations expects name=path pairs, got {part!r}")
            name, _, path = part.partition("=")
            pairs.append((name.strip(), path.strip()))
    return pairs


def _cmd_eval(args) -> int:
    print(f"resolved configuration:\n  model = {args.model}\n  data = {args.data}\n"
          f"  baselines = {args.baselines}\n  ablations = {args.ablations}\n"
          f"  train_data = {args.train_data}\n  out = {args.out}")
    samples = gio.read_dataset(args.data)
    predictors = {"model": ModelPredictor(load_model(args.model))}
    for name, path in _parse_ablations(args.ablations):
        predictors[name] = ModelPredictor(load_model(path))
    if args.baselines:
        predictors["center"] = CenterBaseline()
        predictors["random"] = RandomBaseline(seed=0)
        if args.train_data:
            predictors["fixed_bias"] = FixedBiasBaseline().fit(gio.read_dataset(args.train_data))
        else:
            print("note: fixed_bias baseline skipped (no --train-data given)", file=sys.stderr)
    report = run_eval(predictors, samples)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_csv())
        sweep_path = Path(args.out).with_suffix(".sweep.csv")
        sweep_path.write_text(report.sweep_to_csv())
        print(f"wrote {args.out} and {sweep_path}")
    return 0


def _export_sample_heatmap(model_path, data_path, index, out_path) -> int:
    model = load_model(model_path)
    samples = gio.read_dataset(data_path)
    if not 0 <= index < len(samples):
        raise InputError(f"--index {index} out of range for {len(samples)} samples")
    pred = model.predict(samples[index])
    csv_path = gio.export_heatmap(out_path, pred.density)
    print(f"prediction: point ({pred.point[0]:.4f}, {pred.point[1]:.4f}) "
          f"gamma {pred.gamma:.4f} no_gaze {pred.no_gaze_score:.4f}")
    print(f"wrote {out_path} and {csv_path}")
    return 0


def _cmd_predict(args) -> int:
    print(f"resolved configuration:\n  model = {args.model}\n  data = {args.data}\n"
          f"  index = {args.index}\n  out = {args.out}")
    return _export_sample_heatmap(args.model, args.data, args.index, args.out)


def _cmd_export_heatmap(args) -> int:
    return _cmd_predict(args)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossgaze",
        description="Cross-view gaze following on synthetic two-view scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="key=value generator config file")
    p.add_argument("--out", required=True, help="output .gzds path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=None, help="override n_samples")
    p.add_argument("--mixed-scenes", dest="mixed_scenes", action="store_const",
                   const=True, default=None, help="include different-scene pairs")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--component", default="all",
                   choices=sorted(GRADCHECK_TOLERANCES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.gzc)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--family", default=None)
    p.add_argument("--optimizer", default=None)
    p.add_argument("--extension", action="store_const", const=True, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate models and baselines")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--baselines", action="store_true")
    p.add_argument("--ablations", default=None, help="comma list of name=path checkpoints")
    p.add_argument("--train-data", dest="train_data", default=None,
                   help="training dataset for the fixed-bias baseline")
    p.add_argument("--out", default=None, help="CSV report path")
    p.set_defaults(func=_cmd_eval)

    for name in ("predict", "export-heatmap"):
        p = sub.add_parser(name, help="export one sample's predicted density as PGM + CSV")
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--index", type=int, default=0)
        p.add_argument("--out", required=True, help="output .pgm path")
        p.set_defaults(func=_cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, InputError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
