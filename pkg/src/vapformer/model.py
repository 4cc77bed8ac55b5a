"""Full model assembly: encoders + fusion, built per tuning strategy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .fusion import FusionHead
from .optim import Initializer, ParameterStore
from .tabular import TabularEncoder
from .visual import VisualConfig, VisualEncoder


@dataclass(frozen=True)
class TabularDims:
    width: int = 32
    depth: int = 2
    heads: int = 4
    ffn_mult: int = 4


@dataclass(frozen=True)
class FusionDims:
    width: int = 192
    depth: int = 3
    heads: int = 4
    ffn_mult: int = 4
    head_hidden: int = 32


@dataclass(frozen=True)
class PromptCounts:
    visual: int = 10
    tabular: int = 5


@dataclass(frozen=True)
class ModelConfig:
    tabular: TabularDims = field(default_factory=TabularDims)
    visual: VisualConfig = field(default_factory=VisualConfig)
    fusion: FusionDims = field(default_factory=FusionDims)
    prompts: PromptCounts = field(default_factory=PromptCounts)


@dataclass(frozen=True)
class TuningStrategy:
    """Which prompt families exist and what stays trainable when fine-tuning."""

    name: str
    visual_prompts: bool
    tabular_prompts: bool
    global_prompt: bool
    freeze_backbone: bool


STRATEGIES = {
    "ft": TuningStrategy("ft", False, False, False, freeze_backbone=False),
    "vis": TuningStrategy("vis", True, False, False, freeze_backbone=True),
    "tab": TuningStrategy("tab", False, True, False, freeze_backbone=True),
    "vistab": TuningStrategy("vistab", True, True, False, freeze_backbone=True),
    "pt": TuningStrategy("pt", True, True, True, freeze_backbone=True),
}


def get_strategy(name):
    try:
        return STRATEGIES[name]
    except KeyError:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}") from None


def is_prompt_param(name):
    return ".prompt" in name and ".global_prompt" not in name


def is_global_transform_param(name):
    return ".global_prompt." in name


def is_head_param(name):
    return name.startswith("fusion.head.")


def is_prompt_apparatus(name):
    """Parameters that exist only in prompted configurations (fresh at fine-tune)."""
    return is_prompt_param(name) or is_global_transform_param(name)


class Model:
    """Visual + tabular encoders fused into one logit per sample."""

    def __init__(self, cfg: ModelConfig, schema, strategy: TuningStrategy, seed: int):
        self.cfg = cfg
        self.schema = schema
        self.strategy = strategy
        self.store = ParameterStore()
        init = Initializer(seed)
        self.visual = VisualEncoder(
            self.store,
            cfg.visual,
            init,
            prompt_count=cfg.prompts.visual if strategy.visual_prompts else 0,
            global_transform=strategy.global_prompt,
        )
        self.tabular = TabularEncoder(
            self.store,
            schema,
            cfg.tabular.width,
            cfg.tabular.depth,
            cfg.tabular.heads,
            cfg.tabular.ffn_mult,
            cfg.prompts.tabular if strategy.tabular_prompts else 0,
            init,
        )
        self.fusion = FusionHead(
            self.store,
            self.visual.output_shape[1],
            cfg.tabular.width,
            cfg.fusion.width,
            cfg.fusion.depth,
            cfg.fusion.heads,
            cfg.fusion.ffn_mult,
            cfg.fusion.head_hidden,
            init,
        )

    def logit(self, sample):
        vis = self.visual(sample.volume)
        tab = self.tabular(sample.record)
        return self.fusion(vis, tab)

    def batch_loss(self, samples):
        logits = ad.concat([self.logit(s) for s in samples], axis=0)
        labels = np.array([s.label for s in samples], dtype=np.float64)
        return ad.bce_with_logits(logits, labels)

    def score(self, sample):
        """Sigmoid probability of the positive class, off the tape."""
        with ad.no_grad():
            z = float(self.logit(sample).data[0])
        return float(ad.sigmoid_value(z))


def build_model(cfg, schema, strategy, seed):
    if isinstance(strategy, str):
        strategy = get_strategy(strategy)
    return Model(cfg, schema, strategy, seed)
