"""Command-line harness: data generation, training, sweeps, verification.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numeric failure,
5 verification failure. Every command overwrites its outputs with identical
bytes when re-run on identical inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import config as config_mod
from . import report as report_mod
from .checkpoint import load_checkpoint
from .dataio import load_task
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    DataFormatError,
    NumericError,
    VerificationError,
)
from .model import PromptCounts
from .synth import canonical_splits, generate
from .train import finetune, pretrain
from .verify import run_verification

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_VERIFY = 5


def _load_config(args):
    if args.config is None:
        return config_mod.reference_config()
    return config_mod.load_config(args.config)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _checkpoint_path(out_dir, seed):
    return Path(out_dir) / "checkpoints" / f"pretrain-seed{seed}.vapf"


def _finetune_checkpoint_path(out_dir, strategy, seed):
    return Path(out_dir) / "checkpoints" / f"finetune-{strategy}-seed{seed}.vapf"


def cmd_gen_data(args):
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = generate(cfg.data, out)
    print(f"wrote dataset ({len(manifest['checksums'])} files) to {out}")
    return EXIT_OK


def _run_pretrain(cfg, data_dir, out_dir, seed):
    dataset = load_task(data_dir, "A")
    splits = canonical_splits(dataset, cfg.data)
    report = pretrain(
        cfg.model, dataset.schema, dataset, splits, cfg.train, seed,
        config_echo=config_mod.to_dict(cfg),
    )
    path = _checkpoint_path(out_dir, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(report.checkpoint)
    report_mod.write_metrics(Path(out_dir) / "metrics.csv", [report])
    return report, path


def cmd_pretrain(args):
    cfg = _load_config(args)
    report, path = _run_pretrain(cfg, args.data, args.out, args.seed)
    m = report.metrics["test"]
    print(f"{report.run_id}: auc={m['auc']:.4f} bacc={m['bacc']:.4f} -> {path}")
    return EXIT_OK


def _run_finetune(cfg, data_dir, out_dir, strategy, seed, checkpoint_path=None, corrupt=None):
    dataset = load_task(data_dir, "B")
    splits = canonical_splits(dataset, cfg.data)
    ckpt_path = Path(checkpoint_path) if checkpoint_path else _checkpoint_path(out_dir, seed)
    if not ckpt_path.exists():
        raise DataFormatError(f"missing pretrain checkpoint {ckpt_path}; run the pretrain command first")
    pretrained = load_checkpoint(ckpt_path)
    report = finetune(
        cfg.model, dataset.schema, pretrained, dataset, splits, cfg.train, strategy, seed,
        config_echo=config_mod.to_dict(cfg), corrupt_frozen=corrupt,
    )
    path = _finetune_checkpoint_path(out_dir, strategy, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(report.checkpoint)
    report_mod.write_metrics(Path(out_dir) / "metrics.csv", [report])
    return report, path


def cmd_finetune(args):
    cfg = _load_config(args)
    report, path = _run_finetune(cfg, args.data, args.out, args.strategy, args.seed, args.checkpoint)
    m = report.metrics["test"]
    frozen = "" if report.freeze_ok is None else f" freeze_ok={report.freeze_ok}"
    print(
        f"{report.run_id}: auc={m['auc']:.4f} bacc={m['bacc']:.4f} "
        f"trainable={report.trainable_params}/{report.total_params}{frozen} -> {path}"
    )
    if report.freeze_ok is False:
        raise VerificationError("frozen tensors changed during fine-tuning", failed=["freeze"])
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    out_dir = Path(args.out)
    axis = args.prompt_axis
    dataset = load_task(args.data, "B")
    splits = canonical_splits(dataset, cfg.data)
    rows = []
    for seed in args.seeds:
        ckpt_path = _checkpoint_path(out_dir, seed)
        if not ckpt_path.exists():
            _run_pretrain(cfg, args.data, out_dir, seed)
        pretrained = load_checkpoint(ckpt_path)
        for count in args.counts:
            if axis == "visual":
                prompts = PromptCounts(visual=count, tabular=cfg.model.prompts.tabular)
            else:
                prompts = PromptCounts(visual=cfg.model.prompts.visual, tabular=count)
            model_cfg = dataclasses.replace(cfg.model, prompts=prompts)
            row = {"axis": axis, "count": count, "seed": seed}
            for strategy, column in (("pt", "auc_pt"), ("vistab", "auc_vistab")):
                rep = finetune(
                    model_cfg, dataset.schema, pretrained, dataset, splits, cfg.train,
                    strategy, seed, config_echo=config_mod.to_dict(cfg),
                )
                row[column] = rep.metrics["test"]["auc"]
            rows.append(row)
            print(f"sweep {axis} count={count} seed={seed}: pt={row['auc_pt']:.4f} vistab={row['auc_vistab']:.4f}")
    report_mod.write_sweep(out_dir / "sweep.csv", rows)
    report_mod.render_sweep_figure(out_dir / "sweep.svg", rows, axis)
    print(f"wrote {out_dir / 'sweep.csv'} and {out_dir / 'sweep.svg'}")
    return EXIT_OK


def cmd_verify(args):
    which = {"gradcheck": args.gradcheck, "freeze": args.freeze, "oracles": args.oracles}
    if not any(which.values()):
        which = {k: True for k in which}
    results = run_verification(
        gradcheck=which["gradcheck"],
        freeze=which["freeze"],
        oracles=which["oracles"],
        tolerance=args.tolerance,
        corrupt=args.corrupt_frozen,
    )
    failed = [r.name for r in results if not r.ok]
    for r in results:
        print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
    if failed:
        raise VerificationError(f"failing checks: {', '.join(failed)}", failed=failed)
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="vapformer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic two-task dataset")
    p.add_argument("--config", help="experiment config JSON (defaults to the built-in reference)")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="stage one: full training on task A")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="stage two: adapt to task B")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=["ft", "pt", "vis", "tab", "vistab"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="pretrain checkpoint (default: <out>/checkpoints/pretrain-seed<S>.vapf)")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("sweep", help="prompt-count sweep with per-count seed bands")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-axis", choices=["visual", "tabular"], required=True)
    p.add_argument("--counts", type=_int_list, required=True, help="comma-separated prompt counts")
    p.add_argument("--seeds", type=_int_list, required=True, help="comma-separated seeds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the self-verification suite")
    p.add_argument("--gradcheck", action="store_true")
    p.add_argument("--freeze", action="store_true")
    p.add_argument("--oracles", action="store_true")
    p.add_argument("--tolerance", type=float, default=1e-4, help="gradient-check tolerance")
    p.add_argument("--corrupt-frozen", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.func(args)
    except (ConfigError, CheckpointMismatchError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except VerificationError as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
