"""Deterministic synthetic dataset with a planted cross-modal signal.

Each sample pairs a noisy 3D volume with a 7-attribute record. Positive
samples carry a Gaussian intensity blob with class-shifted center and
amplitude; three of the seven attributes (two numerical markers and one
categorical genotype) carry label-correlated shifts. Effect sizes are tuned so
that neither modality alone separates the classes and combining them helps.

Task B reuses task A's machinery with perturbed signal parameters (scaled by
`task_b_shift`); at shift 0 the two tasks have identical distributions. Every
sample draws from its own counter-keyed RNG stream, so generation order is
free to change without changing output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataio import (
    Sample,
    Dataset,
    sha256_file,
    write_labels_csv,
    write_tabular_csv,
    write_volume,
)
from .errors import ConfigError
from .tabular import Attribute, AttributeSchema

MANIFEST_FORMAT = "synth-v1"


def make_schema():
    return AttributeSchema(
        [
            Attribute("age", "numerical", vmin=55.0, vmax=90.0),
            Attribute("sex", "categorical", levels=("f", "m")),
            Attribute("education", "numerical", vmin=6.0, vmax=22.0),
            Attribute("genotype", "categorical", levels=("e0", "e1", "e2")),
            Attribute("marker_a", "numerical", vmin=-5.0, vmax=6.0),
            Attribute("marker_b", "numerical", vmin=-5.0, vmax=6.0),
            Attribute("marker_c", "numerical", vmin=-5.0, vmax=6.0),
        ]
    )


@dataclass(frozen=True)
class SynthConfig:
    volume_shape: tuple = (32, 32, 32)
    train: int = 256
    val: int = 64
    test: int = 64
    seed: int = 0
    noise_std: float = 1.0
    visual_effect: float = 1.0
    tabular_effect: float = 1.0
    task_b_shift: float = 1.0

    @property
    def total(self):
        return self.train + self.val + self.test

    def fractions(self):
        n = self.total
        return (self.train / n, self.val / n, self.test / n)


@dataclass(frozen=True)
class TaskParams:
    """Fully resolved signal parameters for one task."""

    task: str
    seed: int
    volume_shape: tuple
    n_samples: int
    noise_std: float
    center0: tuple
    center1: tuple
    center_jitter: float
    amp0: float
    amp1: float
    amp_jitter: float
    blob_sigma_frac: float
    marker_a_shift: float
    marker_b_shift: float
    genotype_probs0: tuple
    genotype_probs1: tuple


def resolve_task(cfg: SynthConfig, task: str) -> TaskParams:
    if task not in ("A", "B"):
        raise ConfigError(f"task must be 'A' or 'B', got {task!r}")
    s = cfg.task_b_shift if task == "B" else 0.0
    ve, te = cfg.visual_effect, cfg.tabular_effect
    mix = min(max(0.25 * s, 0.0), 1.0)
    p1 = tuple((1 - mix) * np.array((0.30, 0.40, 0.30)) + mix * np.array((0.45, 0.35, 0.20)))
    return TaskParams(
        task=task,
        seed=cfg.seed,
        volume_shape=tuple(cfg.volume_shape),
        n_samples=cfg.total,
        noise_std=cfg.noise_std,
        center0=(0.42 + 0.05 * s, 0.46, 0.56 - 0.04 * s),
        center1=(0.58 + 0.05 * s, 0.55, 0.44 - 0.04 * s),
        center_jitter=0.05,
        amp0=2.0 + 0.25 * s,
        amp1=2.0 + 0.9 * ve + 0.1 * s,
        amp_jitter=0.8,
        blob_sigma_frac=0.14,
        marker_a_shift=1.0 * te * (1.0 - 0.25 * s),
        marker_b_shift=0.8 * te * (1.0 + 0.25 * s),
        genotype_probs0=(0.55, 0.30, 0.15),
        genotype_probs1=p1,
    )


def _sample_rng(seed, index):
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(index)))


def _pick_level(rng, levels, probs):
    u = rng.random()
    acc = 0.0
    for level, p in zip(levels, probs):
        acc += p
        if u < acc:
            return level
    return levels[-1]


def generate_sample(params: TaskParams, index: int) -> Sample:
    """One (volume, record, label) triple from its own counter-keyed stream."""
    rng = _sample_rng(params.seed, index)
    label = index % 2
    amp = rng.normal(params.amp1 if label else params.amp0, params.amp_jitter)
    center = np.array(params.center1 if label else params.center0)
    center = center + rng.normal(0.0, params.center_jitter, size=3)

    shape = params.volume_shape
    vol = rng.standard_normal(shape) * params.noise_std
    sigma = params.blob_sigma_frac * min(shape)
    axes = [np.arange(n, dtype=np.float64) for n in shape]
    zz, yy, xx = np.meshgrid(*axes, indexing="ij")
    cz, cy, cx = (c * n for c, n in zip(center, shape))
    dist2 = (zz - cz) ** 2 + (yy - cy) ** 2 + (xx - cx) ** 2
    vol += amp * np.exp(-dist2 / (2.0 * sigma ** 2))

    probs = params.genotype_probs1 if label else params.genotype_probs0
    record = {
        "age": rng.uniform(55.0, 90.0),
        "sex": ("f", "m")[int(rng.integers(0, 2))],
        "education": rng.uniform(6.0, 22.0),
        "genotype": _pick_level(rng, ("e0", "e1", "e2"), probs),
        "marker_a": rng.standard_normal() + label * params.marker_a_shift,
        "marker_b": rng.standard_normal() + label * params.marker_b_shift,
        "marker_c": rng.standard_normal(),
    }
    return Sample(index, vol.astype("<f4"), record, label)


def generate_task_samples(params: TaskParams):
    return [generate_sample(params, i) for i in range(params.n_samples)]


def generate(cfg: SynthConfig, out_dir) -> dict:
    """Write both tasks plus schema and checksum manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = make_schema()
    schema.save(out_dir / "schema.json")
    manifest = {"format": MANIFEST_FORMAT, "tasks": {}, "checksums": {}}
    for task in ("A", "B"):
        params = resolve_task(cfg, task)
        task_dir = out_dir / f"task_{task}"
        task_dir.mkdir(exist_ok=True)
        samples = generate_task_samples(params)
        for s in samples:
            write_volume(task_dir, s.index, s.volume)
        write_tabular_csv(task_dir / "tabular.csv", schema, [s.record for s in samples], [s.label for s in samples])
        write_labels_csv(task_dir / "labels.csv", [s.label for s in samples])
        manifest["tasks"][task] = asdict(params)
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest["checksums"][str(path.relative_to(out_dir))] = sha256_file(path)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def stratified_split(labels, fractions, seed):
    """Disjoint per-class index lists covering everything, deterministic by seed.

    Within each class, counts follow largest-remainder rounding of the
    fractions, so exact fractions give exact counts.
    """
    fractions = tuple(float(f) for f in fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions {fractions} must sum to 1")
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.Philox(key=seed))
    parts = [[] for _ in fractions]
    for cls in sorted(np.unique(labels).tolist()):
        idx = np.flatnonzero(labels == cls)
        if idx.size < sum(1 for f in fractions if f > 0):
            raise ConfigError(f"class {cls} has {idx.size} samples, too few to stratify")
        idx = idx[rng.permutation(idx.size)]
        exact = [f * idx.size for f in fractions]
        counts = [int(np.floor(e)) for e in exact]
        remainders = [e - c for e, c in zip(exact, counts)]
        shortfall = idx.size - sum(counts)
        for j in sorted(range(len(fractions)), key=lambda j: -remainders[j])[:shortfall]:
            counts[j] += 1
        lo = 0
        for j, c in enumerate(counts):
            parts[j].extend(idx[lo:lo + c].tolist())
            lo += c
    return tuple(sorted(p) for p in parts)


def canonical_splits(dataset: Dataset, cfg: SynthConfig):
    """The train/val/test partition used by the training harness."""
    labels = [s.label for s in dataset.samples]
    return stratified_split(labels, cfg.fractions(), cfg.seed)
