"""Two-stage training: full pretraining on task A, then fine-tuning on task B
with either full fine-tuning or prompt tuning over a frozen backbone."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt_io
from .errors import ConfigError, NumericError
from .metrics import EvalResult, auc, bacc, f1
from .model import (
    build_model,
    get_strategy,
    is_global_transform_param,
    is_head_param,
    is_prompt_apparatus,
    is_prompt_param,
)
from .optim import AdamW


@dataclass(frozen=True)
class SchedulerConfig:
    factor: float = 0.1
    patience: int = 3
    floor: float = 1e-8
    min_delta: float = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    epochs_pretrain: int = 8
    epochs_finetune: int = 8
    batch_size: int = 4
    lr: float = 3e-4
    weight_decay: float = 0.01
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")


class PlateauScheduler:
    """Multiply the learning rate by `factor` after `patience` epochs without
    improvement beyond `min_delta` on a maximized metric; never below `floor`."""

    def __init__(self, optimizer, cfg: SchedulerConfig):
        self.opt = optimizer
        self.cfg = cfg
        self.best = -math.inf
        self.bad_epochs = 0

    def update(self, metric):
        if metric > self.best + self.cfg.min_delta:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.cfg.patience:
                self.opt.lr = max(self.opt.lr * self.cfg.factor, self.cfg.floor)
                self.bad_epochs = 0
        return self.opt.lr


def build_freeze_mask(strategy, store):
    """Names to freeze for a fine-tuning strategy.

    Full fine-tuning freezes nothing. Prompt strategies freeze everything
    except prompt tokens, the global prompt transform, and the classifier
    head; the class token stays frozen.
    """
    if isinstance(strategy, str):
        strategy = get_strategy(strategy)
    names = store.names()
    if not strategy.freeze_backbone:
        return set()
    if strategy.visual_prompts and not any(is_prompt_param(n) and n.startswith("visual.") for n in names):
        raise ConfigError(f"strategy {strategy.name} needs visual prompts but the model has none")
    if strategy.tabular_prompts and not any(is_prompt_param(n) and n.startswith("tabular.") for n in names):
        raise ConfigError(f"strategy {strategy.name} needs tabular prompts but the model has none")
    if strategy.global_prompt and not any(is_global_transform_param(n) for n in names):
        raise ConfigError(f"strategy {strategy.name} needs a global prompt transform but the model has none")
    return {
        n
        for n in names
        if not (is_prompt_param(n) or is_global_transform_param(n) or is_head_param(n))
    }


def _eval_threads():
    try:
        return max(1, int(os.environ.get("VAPF_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(model, samples) -> EvalResult:
    """Score samples (optionally fanned out over threads), reduce in index order."""
    threads = _eval_threads()
    if threads == 1:
        scores = [model.score(s) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(model.score, samples))
    labels = [s.label for s in samples]
    return EvalResult(np.array(scores), np.array(labels))


def metric_summary(result: EvalResult) -> dict:
    return {"bacc": bacc(result), "f1": f1(result), "auc": auc(result)}


@dataclass
class RunReport:
    run_id: str
    strategy: str
    seed: int
    metrics: dict
    trainable_params: int
    total_params: int
    val_history: list
    checkpoint: bytes
    freeze_ok: bool | None = None


def _train_loop(model, train_samples, val_samples, epochs, cfg, seed, corrupt_frozen=None):
    """Optimize, track the best validation AUC, return that state's bytes."""
    opt = AdamW(model.store, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(opt, cfg.scheduler)
    rng = np.random.default_rng(np.random.Philox(key=(int(seed) << 64) + 0xE9))
    best_auc = -math.inf
    best_blob = ckpt_io.serialize(model.store)
    history = []
    n = len(train_samples)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [train_samples[i] for i in order[start:start + cfg.batch_size]]
            loss = model.batch_loss(batch)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, step {start // cfg.batch_size}")
            loss.backward()
            opt.step()
        if corrupt_frozen is not None and epoch == 0:
            # test hook: damages a frozen tensor so the freeze audit must fail
            model.store[corrupt_frozen].data += 1.0
        val_auc = auc(evaluate(model, val_samples))
        history.append(val_auc)
        sched.update(val_auc)
        if val_auc > best_auc:
            best_auc = val_auc
            best_blob = ckpt_io.serialize(model.store)
    return best_blob, history


def _finalize(model, blob, val_samples, test_samples, config_echo):
    """Load the best state back (float32 rounding applied), then measure it."""
    ckpt_io.load_into_store(model.store, ckpt_io.parse(blob))
    val_metrics = metric_summary(evaluate(model, val_samples))
    test_metrics = metric_summary(evaluate(model, test_samples))
    metrics = {"val": val_metrics, "test": test_metrics}
    final_blob = ckpt_io.serialize(model.store, config=config_echo, metrics=metrics)
    return final_blob, metrics


def pretrain(model_cfg, schema, dataset, splits, cfg: TrainConfig, seed, config_echo=None) -> RunReport:
    """Stage one: train the prompt-free model on task A, keep the best-val state."""
    model = build_model(model_cfg, schema, "ft", seed)
    train_idx, val_idx, test_idx = splits
    train_s = [dataset.samples[i] for i in train_idx]
    val_s = [dataset.samples[i] for i in val_idx]
    test_s = [dataset.samples[i] for i in test_idx]
    blob, history = _train_loop(model, train_s, val_s, cfg.epochs_pretrain, cfg, seed)
    echo = dict(config_echo or {}, stage="pretrain", seed=seed)
    final_blob, metrics = _finalize(model, blob, val_s, test_s, echo)
    return RunReport(
        run_id=f"pretrain-seed{seed}",
        strategy="pretrain",
        seed=seed,
        metrics=metrics,
        trainable_params=model.store.trainable_params(),
        total_params=model.store.total_params(),
        val_history=history,
        checkpoint=final_blob,
    )


def finetune(
    model_cfg,
    schema,
    pretrained: ckpt_io.Checkpoint,
    dataset,
    splits,
    cfg: TrainConfig,
    strategy,
    seed,
    config_echo=None,
    corrupt_frozen=None,
) -> RunReport:
    """Stage two: adapt to task B under the given tuning strategy.

    Prompt-apparatus parameters are fresh; everything else must match the
    checkpoint by name. For frozen-backbone strategies the report carries a
    byte-level audit of every frozen tensor against its loaded value.
    """
    strategy = get_strategy(strategy) if isinstance(strategy, str) else strategy
    model = build_model(model_cfg, schema, strategy, seed)
    ckpt_io.load_into_store(model.store, pretrained, allow_fresh=is_prompt_apparatus)
    mask = build_freeze_mask(strategy, model.store)
    model.store.freeze(mask)
    frozen_before = {n: ckpt_io.tensor_bytes(model.store[n].data) for n in mask}

    train_idx, val_idx, test_idx = splits
    train_s = [dataset.samples[i] for i in train_idx]
    val_s = [dataset.samples[i] for i in val_idx]
    test_s = [dataset.samples[i] for i in test_idx]
    if corrupt_frozen is True:
        corrupt_frozen = sorted(mask)[0] if mask else None
    blob, history = _train_loop(
        model, train_s, val_s, cfg.epochs_finetune, cfg, seed, corrupt_frozen=corrupt_frozen
    )
    echo = dict(config_echo or {}, stage="finetune", strategy=strategy.name, seed=seed)
    final_blob, metrics = _finalize(model, blob, val_s, test_s, echo)
    freeze_ok = None
    if mask:
        freeze_ok = all(
            ckpt_io.tensor_bytes(model.store[n].data) == frozen_before[n] for n in mask
        )
    return RunReport(
        run_id=f"finetune-{strategy.name}-seed{seed}",
        strategy=strategy.name,
        seed=seed,
        metrics=metrics,
        trainable_params=model.store.trainable_params(),
        total_params=model.store.total_params(),
        val_history=history,
        checkpoint=final_blob,
        freeze_ok=freeze_ok,
    )
