"""Self-verification suite: gradient fidelity, freeze bit-exactness, oracles.

Each check returns (name, ok, detail); the CLI turns any failure into exit
code 5. Checks run on a compact probe configuration so the whole suite stays
fast while still covering every parameter family.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import reference as ref
from .metrics import EvalResult, auc, bacc, f1
from .model import ModelConfig, FusionDims, PromptCounts, TabularDims, build_model
from .optim import grad_check
from .synth import SynthConfig, canonical_splits, generate_task_samples, make_schema, resolve_task
from .dataio import Dataset
from .train import TrainConfig, SchedulerConfig, finetune, pretrain
from .checkpoint import parse
from .visual import VisualConfig


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def probe_model_config():
    return ModelConfig(
        tabular=TabularDims(width=16, depth=1, heads=2, ffn_mult=2),
        visual=VisualConfig(
            volume_shape=(8, 8, 8),
            patch_size=2,
            stage_widths=(8, 8),
            stage_blocks=(1, 1),
            downsample_factors=(2,),
            ffn_mult=2,
        ),
        fusion=FusionDims(width=16, depth=1, heads=2, ffn_mult=2, head_hidden=8),
        prompts=PromptCounts(visual=4, tabular=2),
    )


def probe_data_config(seed=0):
    return SynthConfig(volume_shape=(8, 8, 8), train=12, val=6, test=6, seed=seed)


def probe_dataset(task="A", seed=0):
    cfg = probe_data_config(seed)
    dataset = Dataset(task, make_schema(), generate_task_samples(resolve_task(cfg, task)))
    return dataset, canonical_splits(dataset, cfg)


def probe_train_config(epochs=2):
    return TrainConfig(
        epochs_pretrain=epochs,
        epochs_finetune=epochs,
        batch_size=4,
        lr=1e-3,
        weight_decay=0.01,
        scheduler=SchedulerConfig(),
    )


def _family_names(store):
    names = store.names()
    return {
        "tabular prompts": [n for n in names if n.startswith("tabular.") and ".prompt" in n],
        "visual prompts": [n for n in names if n.startswith("visual.") and ".prompt" in n and ".global_prompt" not in n],
        "global transform": [n for n in names if ".global_prompt." in n],
        "attention weights": [
            n for n in names if n.endswith("wq.weight") or n.endswith("wk.weight") or n.endswith("wv.weight")
        ],
        "classifier head": [n for n in names if n.startswith("fusion.head.")],
    }


def check_gradients(tolerance=1e-4, n_coords=120, seed=0):
    """Finite-difference audit of the full model across all parameter families."""
    dataset, _ = probe_dataset(seed=seed)
    model = build_model(probe_model_config(), dataset.schema, "pt", seed)
    batch = dataset.samples[:2]

    def f(store):
        return model.batch_loss(batch)

    families = _family_names(model.store)
    subset = sorted(set(itertools.chain.from_iterable(families.values())))
    missing = [fam for fam, names in families.items() if not names]
    if missing:
        return [CheckResult("gradcheck", False, f"families without parameters: {missing}")]
    err = grad_check(f, model.store, h=1e-5, subset=subset, n_coords=n_coords, seed=seed)
    ok = err < tolerance
    return [CheckResult("gradcheck", ok, f"max relative error {err:.3e} (tolerance {tolerance:g})")]


def check_freeze(corrupt=False, seed=0):
    """Short two-stage run; every frozen tensor must match its loaded bytes."""
    dataset_a, splits_a = probe_dataset("A", seed)
    dataset_b, splits_b = probe_dataset("B", seed)
    cfg = probe_train_config()
    pre = pretrain(probe_model_config(), dataset_a.schema, dataset_a, splits_a, cfg, seed)
    report = finetune(
        probe_model_config(),
        dataset_b.schema,
        parse(pre.checkpoint),
        dataset_b,
        splits_b,
        cfg,
        "pt",
        seed,
        corrupt_frozen=True if corrupt else None,
    )
    detail = "frozen tensors byte-identical to checkpoint" if report.freeze_ok else "frozen tensor bytes changed"
    return [CheckResult("freeze", bool(report.freeze_ok), detail)]


def _check_metric_oracles(rng):
    results = []
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 200))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.random(n), 2)  # rounding forces score ties
        res = EvalResult(scores, labels)
        worst = max(worst, abs(auc(res) - ref.trapezoid_auc(scores, labels)))
    results.append(
        CheckResult("auc-trapezoid", worst < 1e-12, f"max |pairwise - trapezoid| = {worst:.2e}")
    )

    ok = True
    for n in range(2, 7):
        for labels in itertools.product((0, 1), repeat=n):
            for preds in itertools.product((0, 1), repeat=n):
                scores = np.array(preds, dtype=float)
                res = EvalResult(scores, np.array(labels))
                ob, of = ref.confusion_metrics_loop(labels, preds)
                if ob is not None and abs(bacc(res) - ob) > 0:
                    ok = False
                if of is not None and abs(f1(res) - of) > 0:
                    ok = False
    results.append(CheckResult("bacc-f1-exhaustive", ok, "confusion-count oracle over all instances, n <= 6"))
    return results


def _check_engine_oracles(rng):
    results = []
    x = rng.standard_normal((17, 9)) * 5
    s = ad.softmax(ad.Tensor(x), axis=1)
    sums = s.data.sum(axis=1)
    results.append(
        CheckResult("softmax-normalized", bool(np.all(np.abs(sums - 1.0) < 1e-12)), "rows sum to 1 +/- 1e-12")
    )
    a = ad.Tensor(rng.standard_normal((5, 4)))
    b = ad.Tensor(rng.standard_normal((7, 4)))
    joined = ad.concat([a, b], axis=0)
    pa, pb = ad.split(joined, [5, 7], axis=0)
    roundtrip = np.array_equal(pa.data, a.data) and np.array_equal(pb.data, b.data)
    results.append(CheckResult("concat-split-roundtrip", roundtrip, "bitwise inverse pair"))
    return results


def _check_global_scale_reduction(seed=1):
    results = []
    cfg = probe_model_config()
    model = build_model(cfg, make_schema(), "pt", seed)
    block = model.visual.stages[0][0]
    n_tokens = int(np.prod(cfg.visual.stage_grids()[0]))
    rng = np.random.default_rng(seed)
    tokens = ad.Tensor(rng.standard_normal((n_tokens, block.width)))

    gt = block.global_transform
    gt.w.data[:] = 0.0
    gt.b.data[:] = 1.0
    with ad.no_grad():
        with_unit_scale = block(tokens).data
        block.global_transform = None
        without_transform = block(tokens).data
        block.global_transform = gt
    results.append(
        CheckResult(
            "unit-scale-reduction",
            np.array_equal(with_unit_scale, without_transform),
            "unit global scale equals the scale-free path bitwise",
        )
    )

    gt.b.data[:] = 0.0
    with ad.no_grad():
        with_zero_scale = block(tokens).data
        ffn_only = block.ffn_sublayer(tokens).data
    results.append(
        CheckResult(
            "zero-scale-annihilation",
            np.array_equal(with_zero_scale, ffn_only),
            "zero global scale leaves only the feed-forward path",
        )
    )
    return results


def _check_vanilla_equivalence(seed=2):
    dataset, _ = probe_dataset(seed=seed)
    model = build_model(probe_model_config(), dataset.schema, "ft", seed)
    sample = dataset.samples[0]
    with ad.no_grad():
        vis_engine = model.visual(sample.volume).data
        tab_engine = model.tabular(sample.record).data
    vis_ref = ref.visual_forward_np(model.visual, sample.volume)
    tab_ref = ref.tabular_forward_np(model.tabular, sample.record)
    return [
        CheckResult(
            "vanilla-visual-oracle",
            np.array_equal(vis_engine, vis_ref),
            "prompt-free visual encoder matches the dense reference bitwise",
        ),
        CheckResult(
            "vanilla-tabular-oracle",
            np.array_equal(tab_engine, tab_ref),
            "prompt-free tabular encoder matches the dense reference bitwise",
        ),
    ]


def check_oracles(seed=0):
    rng = np.random.default_rng(seed)
    results = []
    results.extend(_check_metric_oracles(rng))
    results.extend(_check_engine_oracles(rng))
    results.extend(_check_global_scale_reduction())
    results.extend(_check_vanilla_equivalence())
    return results


def run_verification(gradcheck=True, freeze=True, oracles=True, tolerance=1e-4, corrupt=False):
    results = []
    if gradcheck:
        results.extend(check_gradients(tolerance=tolerance))
    if freeze:
        results.extend(check_freeze(corrupt=corrupt))
    if oracles:
        results.extend(check_oracles())
    return results
