"""Experiment configuration: one JSON document describing a full run.

Loading is strict: unknown keys are rejected by their dotted path and every
value is type-checked. The reference desk-scale configuration doubles as the
default for any omitted section.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import FusionDims, ModelConfig, PromptCounts, TabularDims
from .synth import SynthConfig
from .train import SchedulerConfig, TrainConfig
from .visual import VisualConfig


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SynthConfig = field(default_factory=SynthConfig)
    seeds: tuple = (0, 1, 2)


def reference_config() -> ExperimentConfig:
    """The desk-scale reference configuration used throughout the test suite."""
    return ExperimentConfig()


def _expect(d, path, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {path + '.' if path else ''}{key}")


def _get(d, key, kind, default, path):
    if key not in d:
        return default
    value = d[key]
    where = f"{path}.{key}" if path else key
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(f"{where} must be {kind.__name__}, got {value!r}")
    return value


def _get_int_list(d, key, default, path):
    if key not in d:
        return default
    value = d[key]
    where = f"{path}.{key}" if path else key
    if not isinstance(value, list) or not value or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"{where} must be a non-empty list of integers, got {value!r}")
    return tuple(value)


def _parse_tabular(d, path):
    _expect(d, path, {"width", "depth", "heads", "ffn_mult"})
    base = TabularDims()
    return TabularDims(
        width=_get(d, "width", int, base.width, path),
        depth=_get(d, "depth", int, base.depth, path),
        heads=_get(d, "heads", int, base.heads, path),
        ffn_mult=_get(d, "ffn_mult", int, base.ffn_mult, path),
    )


def _parse_visual(d, path, volume_shape):
    _expect(d, path, {"patch_size", "stage_widths", "stage_blocks", "downsample_factors", "ffn_mult"})
    base = VisualConfig()
    cfg = VisualConfig(
        volume_shape=volume_shape,
        patch_size=_get(d, "patch_size", int, base.patch_size, path),
        stage_widths=_get_int_list(d, "stage_widths", base.stage_widths, path),
        stage_blocks=_get_int_list(d, "stage_blocks", base.stage_blocks, path),
        downsample_factors=_get_int_list(d, "downsample_factors", base.downsample_factors, path),
        ffn_mult=_get(d, "ffn_mult", int, base.ffn_mult, path),
    )
    cfg.validate()
    return cfg


def _parse_fusion(d, path):
    _expect(d, path, {"width", "depth", "heads", "ffn_mult", "head_hidden"})
    base = FusionDims()
    return FusionDims(
        width=_get(d, "width", int, base.width, path),
        depth=_get(d, "depth", int, base.depth, path),
        heads=_get(d, "heads", int, base.heads, path),
        ffn_mult=_get(d, "ffn_mult", int, base.ffn_mult, path),
        head_hidden=_get(d, "head_hidden", int, base.head_hidden, path),
    )


def _parse_prompts(d, path):
    _expect(d, path, {"visual", "tabular"})
    base = PromptCounts()
    counts = PromptCounts(
        visual=_get(d, "visual", int, base.visual, path),
        tabular=_get(d, "tabular", int, base.tabular, path),
    )
    if counts.visual % 2 != 0 or counts.visual < 0:
        raise ConfigError(f"{path}.visual must be a non-negative even integer")
    if counts.tabular < 0:
        raise ConfigError(f"{path}.tabular must be non-negative")
    return counts


def _parse_scheduler(d, path):
    _expect(d, path, {"factor", "patience", "floor", "min_delta"})
    base = SchedulerConfig()
    return SchedulerConfig(
        factor=_get(d, "factor", float, base.factor, path),
        patience=_get(d, "patience", int, base.patience, path),
        floor=_get(d, "floor", float, base.floor, path),
        min_delta=_get(d, "min_delta", float, base.min_delta, path),
    )


def _parse_train(d, path):
    _expect(
        d,
        path,
        {"epochs_pretrain", "epochs_finetune", "batch_size", "lr", "weight_decay", "scheduler"},
    )
    base = TrainConfig()
    return TrainConfig(
        epochs_pretrain=_get(d, "epochs_pretrain", int, base.epochs_pretrain, path),
        epochs_finetune=_get(d, "epochs_finetune", int, base.epochs_finetune, path),
        batch_size=_get(d, "batch_size", int, base.batch_size, path),
        lr=_get(d, "lr", float, base.lr, path),
        weight_decay=_get(d, "weight_decay", float, base.weight_decay, path),
        scheduler=_parse_scheduler(d.get("scheduler", {}), f"{path}.scheduler"),
    )


def _parse_data(d, path):
    _expect(
        d,
        path,
        {"volume_shape", "train", "val", "test", "seed", "noise_std", "visual_effect", "tabular_effect", "task_b_shift"},
    )
    base = SynthConfig()
    shape = _get_int_list(d, "volume_shape", base.volume_shape, path)
    if len(shape) != 3:
        raise ConfigError(f"{path}.volume_shape must have three extents")
    return SynthConfig(
        volume_shape=shape,
        train=_get(d, "train", int, base.train, path),
        val=_get(d, "val", int, base.val, path),
        test=_get(d, "test", int, base.test, path),
        seed=_get(d, "seed", int, base.seed, path),
        noise_std=_get(d, "noise_std", float, base.noise_std, path),
        visual_effect=_get(d, "visual_effect", float, base.visual_effect, path),
        tabular_effect=_get(d, "tabular_effect", float, base.tabular_effect, path),
        task_b_shift=_get(d, "task_b_shift", float, base.task_b_shift, path),
    )


def from_dict(d) -> ExperimentConfig:
    _expect(d, "", {"model", "train", "data", "seeds"})
    data = _parse_data(d.get("data", {}), "data")
    model_section = d.get("model", {})
    _expect(model_section, "model", {"tabular", "visual", "fusion", "prompts"})
    model = ModelConfig(
        tabular=_parse_tabular(model_section.get("tabular", {}), "model.tabular"),
        visual=_parse_visual(model_section.get("visual", {}), "model.visual", data.volume_shape),
        fusion=_parse_fusion(model_section.get("fusion", {}), "model.fusion"),
        prompts=_parse_prompts(model_section.get("prompts", {}), "model.prompts"),
    )
    train = _parse_train(d.get("train", {}), "train")
    seeds = _get_int_list(d, "seeds", (0, 1, 2), "")
    return ExperimentConfig(model=model, train=train, data=data, seeds=seeds)


def to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "model": {
            "tabular": {
                "width": cfg.model.tabular.width,
                "depth": cfg.model.tabular.depth,
                "heads": cfg.model.tabular.heads,
                "ffn_mult": cfg.model.tabular.ffn_mult,
            },
            "visual": {
                "patch_size": cfg.model.visual.patch_size,
                "stage_widths": list(cfg.model.visual.stage_widths),
                "stage_blocks": list(cfg.model.visual.stage_blocks),
                "downsample_factors": list(cfg.model.visual.downsample_factors),
                "ffn_mult": cfg.model.visual.ffn_mult,
            },
            "fusion": {
                "width": cfg.model.fusion.width,
                "depth": cfg.model.fusion.depth,
                "heads": cfg.model.fusion.heads,
                "ffn_mult": cfg.model.fusion.ffn_mult,
                "head_hidden": cfg.model.fusion.head_hidden,
            },
            "prompts": {"visual": cfg.model.prompts.visual, "tabular": cfg.model.prompts.tabular},
        },
        "train": {
            "epochs_pretrain": cfg.train.epochs_pretrain,
            "epochs_finetune": cfg.train.epochs_finetune,
            "batch_size": cfg.train.batch_size,
            "lr": cfg.train.lr,
            "weight_decay": cfg.train.weight_decay,
            "scheduler": {
                "factor": cfg.train.scheduler.factor,
                "patience": cfg.train.scheduler.patience,
                "floor": cfg.train.scheduler.floor,
                "min_delta": cfg.train.scheduler.min_delta,
            },
        },
        "data": {
            "volume_shape": list(cfg.data.volume_shape),
            "train": cfg.data.train,
            "val": cfg.data.val,
            "test": cfg.data.test,
            "seed": cfg.data.seed,
            "noise_std": cfg.data.noise_std,
            "visual_effect": cfg.data.visual_effect,
            "tabular_effect": cfg.data.tabular_effect,
            "task_b_shift": cfg.data.task_b_shift,
        },
        "seeds": list(cfg.seeds),
    }


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from None
    return from_dict(raw)
