import math

import numpy as np
import pytest

from vapformer.checkpoint import parse
from vapformer.errors import ConfigError
from vapformer.metrics import auc
from vapformer.model import build_model, is_global_transform_param, is_head_param, is_prompt_param
from vapformer.optim import AdamW, ParameterStore
from vapformer.train import (
    PlateauScheduler,
    SchedulerConfig,
    TrainConfig,
    build_freeze_mask,
    evaluate,
    finetune,
    pretrain,
)
import vapformer.autodiff as ad


# ---------------------------------------------------------------- freeze masks

def test_ft_freezes_nothing(probe_cfg, schema):
    model = build_model(probe_cfg, schema, "ft", 0)
    assert build_freeze_mask("ft", model.store) == set()


def test_pt_mask_covers_everything_but_prompt_apparatus_and_head(probe_cfg, schema):
    model = build_model(probe_cfg, schema, "pt", 0)
    mask = build_freeze_mask("pt", model.store)
    names = set(model.store.names())
    unfrozen = names - mask
    assert unfrozen == {
        n for n in names if is_prompt_param(n) or is_global_transform_param(n) or is_head_param(n)
    }
    assert "fusion.cls" in mask  # the class token stays frozen
    assert mask | unfrozen == names


def test_pt_trainable_fraction_below_two_percent_at_reference():
    from vapformer.config import reference_config
    from vapformer.synth import make_schema

    cfg = reference_config()
    model = build_model(cfg.model, make_schema(), "pt", 0)
    model.store.freeze(build_freeze_mask("pt", model.store))
    fraction = model.store.trainable_params() / model.store.total_params()
    assert fraction < 0.02


def test_vistab_has_no_global_transform(probe_cfg, schema):
    model = build_model(probe_cfg, schema, "vistab", 0)
    assert not any(is_global_transform_param(n) for n in model.store.names())
    mask = build_freeze_mask("vistab", model.store)
    unfrozen = set(model.store.names()) - mask
    assert all(is_prompt_param(n) or is_head_param(n) for n in unfrozen)


def test_strategy_without_prompts_on_promptless_model_errors(probe_cfg, schema):
    model = build_model(probe_cfg, schema, "ft", 0)
    with pytest.raises(ConfigError):
        build_freeze_mask("pt", model.store)


# ---------------------------------------------------------------- scheduler

def make_sched(**kw):
    store = ParameterStore()
    store.add("w", ad.Tensor(np.zeros(1), requires_grad=True))
    opt = AdamW(store, lr=kw.pop("lr", 1e-5))
    return opt, PlateauScheduler(opt, SchedulerConfig(**kw))


def test_scheduler_keeps_lr_while_improving():
    opt, sched = make_sched(lr=1e-5)
    for metric in (0.5, 0.6, 0.7, 0.8):
        sched.update(metric)
    assert opt.lr == 1e-5


def test_scheduler_decays_after_patience_epochs_flat():
    opt, sched = make_sched(lr=1e-5, factor=0.1, patience=3)
    sched.update(0.8)
    for _ in range(3):
        sched.update(0.8)  # no improvement beyond min_delta
    assert math.isclose(opt.lr, 1e-6)


def test_scheduler_respects_floor():
    opt, sched = make_sched(lr=1e-8, factor=0.1, patience=1, floor=1e-8)
    sched.update(0.5)
    sched.update(0.5)
    assert opt.lr == 1e-8


def test_scheduler_min_delta_counts_tiny_gains_as_flat():
    opt, sched = make_sched(lr=1e-5, factor=0.1, patience=2, min_delta=1e-4)
    sched.update(0.5)
    sched.update(0.50005)
    sched.update(0.50008)
    assert math.isclose(opt.lr, 1e-6)


# ---------------------------------------------------------------- training loops

@pytest.fixture(scope="module")
def quick_pretrain(probe_task_a):
    dataset, splits = probe_task_a
    from vapformer.verify import probe_model_config, probe_train_config

    cfg = probe_model_config()
    report = pretrain(cfg, dataset.schema, dataset, splits, probe_train_config(epochs=2), seed=0)
    return cfg, dataset, splits, report


def test_pretrain_smoke_finite_loss_and_metrics(quick_pretrain):
    _, _, _, report = quick_pretrain
    for value in report.metrics["test"].values():
        assert math.isfinite(value)
    assert len(report.val_history) == 2
    assert report.trainable_params == report.total_params  # nothing frozen in stage one


def test_training_loss_decreases_on_separable_data(probe_cfg, probe_task_a):
    dataset, splits = probe_task_a
    from vapformer.model import build_model
    from vapformer.optim import AdamW as Opt

    model = build_model(probe_cfg, dataset.schema, "ft", 3)
    train = [dataset.samples[i] for i in splits[0]]
    opt = Opt(model.store, lr=1e-3)
    losses = []
    for _ in range(5):
        total = 0.0
        for start in range(0, len(train), 4):
            loss = model.batch_loss(train[start:start + 4])
            total += float(loss.data)
            loss.backward()
            opt.step()
        losses.append(total)
    assert losses[-1] < losses[0]


def test_checkpoint_roundtrip_reproduces_validation_metric(quick_pretrain):
    cfg, dataset, splits, report = quick_pretrain
    ckpt = parse(report.checkpoint)
    model = build_model(cfg, dataset.schema, "ft", 99)
    from vapformer.checkpoint import load_into_store

    load_into_store(model.store, ckpt)
    val = [dataset.samples[i] for i in splits[1]]
    assert auc(evaluate(model, val)) == ckpt.metrics["val"]["auc"]


def test_finetune_freeze_audit_and_param_accounting(quick_pretrain, probe_task_b, probe_train):
    cfg, _, _, pre = quick_pretrain
    dataset, splits = probe_task_b
    report = finetune(cfg, dataset.schema, parse(pre.checkpoint), dataset, splits, probe_train, "pt", seed=0)
    assert report.freeze_ok is True
    assert 0 < report.trainable_params < report.total_params
    ckpt = parse(report.checkpoint)
    assert len(ckpt.freeze_mask) > 0
    # frozen tensors in the output equal the pretrained input, byte for byte
    pre_ckpt = parse(pre.checkpoint)
    for name in ckpt.freeze_mask:
        assert ckpt.tensors[name].tobytes() == pre_ckpt.tensors[name].tobytes()


def test_finetune_with_corruption_hook_fails_audit(quick_pretrain, probe_task_b, probe_train):
    cfg, _, _, pre = quick_pretrain
    dataset, splits = probe_task_b
    report = finetune(
        cfg, dataset.schema, parse(pre.checkpoint), dataset, splits, probe_train, "pt", seed=0,
        corrupt_frozen=True,
    )
    assert report.freeze_ok is False


def test_zero_lr_finetune_equals_zero_shot_evaluation(quick_pretrain, probe_task_b):
    cfg, _, _, pre = quick_pretrain
    dataset, splits = probe_task_b
    train_cfg = TrainConfig(epochs_finetune=2, lr=0.0, weight_decay=0.0)
    report = finetune(cfg, dataset.schema, parse(pre.checkpoint), dataset, splits, train_cfg, "pt", seed=5)

    from vapformer.checkpoint import load_into_store
    from vapformer.model import is_prompt_apparatus

    model = build_model(cfg, dataset.schema, "pt", 5)
    load_into_store(model.store, parse(pre.checkpoint), allow_fresh=is_prompt_apparatus)
    # mimic the float32 rounding a checkpointed run goes through
    load_into_store(model.store, parse(__import__("vapformer.checkpoint", fromlist=["serialize"]).serialize(model.store)))
    test = [dataset.samples[i] for i in splits[2]]
    zero_shot = evaluate(model, test)
    assert report.metrics["test"]["auc"] == auc(zero_shot)


def test_determinism_same_seed_same_metrics(quick_pretrain, probe_task_b, probe_train):
    cfg, _, _, pre = quick_pretrain
    dataset, splits = probe_task_b
    reports = [
        finetune(cfg, dataset.schema, parse(pre.checkpoint), dataset, splits, probe_train, "pt", seed=7)
        for _ in range(2)
    ]
    assert reports[0].metrics == reports[1].metrics
    assert reports[0].checkpoint == reports[1].checkpoint


def test_parallel_evaluation_matches_sequential(quick_pretrain, probe_task_a, monkeypatch):
    cfg, dataset, splits, _ = quick_pretrain
    model = build_model(cfg, dataset.schema, "ft", 0)
    samples = [dataset.samples[i] for i in splits[2]]
    sequential = evaluate(model, samples)
    monkeypatch.setenv("VAPF_THREADS", "4")
    parallel = evaluate(model, samples)
    assert np.array_equal(sequential.scores, parallel.scores)
    # concurrent no_grad scoring must not leak into this thread's grad mode
    assert ad.grad_enabled()


def test_nonfinite_loss_aborts_with_numeric_error(probe_cfg, probe_task_a):
    from vapformer.errors import NumericError
    from vapformer.train import _train_loop

    dataset, splits = probe_task_a
    model = build_model(probe_cfg, dataset.schema, "ft", 0)
    # overflow the head so the first batch loss is non-finite
    model.store["fusion.head.fc1.weight"].data[:] = 1e200
    model.store["fusion.head.fc2.weight"].data[:] = 1e200
    train = [dataset.samples[i] for i in splits[0]]
    val = [dataset.samples[i] for i in splits[1]]
    with pytest.raises(NumericError, match="epoch 0"):
        _train_loop(model, train, val, 1, TrainConfig(), seed=0)
