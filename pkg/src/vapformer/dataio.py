"""On-disk dataset formats: raw f32 volumes with text headers, CSV tables.

Volume format `vol-f32-v1`: `vol_%05d.f32` holds raw little-endian float32
voxels in row-major (D, H, W) order; the sidecar `header_%05d.txt` carries the
format tag on line one and `D H W` on line two.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .tabular import AttributeSchema

VOLUME_FORMAT = "vol-f32-v1"


@dataclass
class Sample:
    index: int
    volume: np.ndarray
    record: dict
    label: int


@dataclass
class Dataset:
    task: str
    schema: AttributeSchema
    samples: list


def write_volume(directory, index, volume):
    directory = Path(directory)
    data = np.asarray(volume, dtype="<f4")
    (directory / f"vol_{index:05d}.f32").write_bytes(data.tobytes(order="C"))
    d, h, w = data.shape
    (directory / f"header_{index:05d}.txt").write_text(f"{VOLUME_FORMAT}\n{d} {h} {w}\n")


def read_volume(directory, index):
    directory = Path(directory)
    header_path = directory / f"header_{index:05d}.txt"
    if not header_path.exists():
        raise DataFormatError(f"missing volume header {header_path}")
    lines = header_path.read_text().splitlines()
    if not lines or lines[0].strip() != VOLUME_FORMAT:
        raise DataFormatError(f"{header_path}: expected format tag {VOLUME_FORMAT!r}")
    try:
        d, h, w = (int(x) for x in lines[1].split())
    except (IndexError, ValueError):
        raise DataFormatError(f"{header_path}: malformed extent line") from None
    raw = (directory / f"vol_{index:05d}.f32").read_bytes()
    expected = d * h * w * 4
    if len(raw) != expected:
        raise DataFormatError(f"vol_{index:05d}.f32: {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(d, h, w)


def _format_value(v):
    return repr(float(v)) if isinstance(v, (int, float, np.floating)) else str(v)


def write_tabular_csv(path, schema, records, labels):
    names = schema.names()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["label"])
        for record, label in zip(records, labels):
            writer.writerow([_format_value(record[n]) for n in names] + [int(label)])


def read_tabular_csv(path, schema):
    names = schema.names()
    kinds = {a.name: a.kind for a in schema.attributes}
    records, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != names + ["label"]:
            raise DataFormatError(f"{path}: header {header} does not match schema columns")
        for row in reader:
            record = {}
            for name, value in zip(names, row):
                record[name] = float(value) if kinds[name] == "numerical" else value
            records.append(record)
            labels.append(int(row[-1]))
    return records, labels


def write_labels_csv(path, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, label in enumerate(labels):
            writer.writerow([i, int(label)])


def load_task(dataset_dir, task):
    """Load one task directory into memory (volumes stay float32)."""
    dataset_dir = Path(dataset_dir)
    schema = AttributeSchema.load(dataset_dir / "schema.json")
    task_dir = dataset_dir / f"task_{task}"
    if not task_dir.is_dir():
        raise DataFormatError(f"missing task directory {task_dir}")
    records, labels = read_tabular_csv(task_dir / "tabular.csv", schema)
    samples = [
        Sample(i, read_volume(task_dir, i), record, label)
        for i, (record, label) in enumerate(zip(records, labels))
    ]
    return Dataset(task, schema, samples)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
