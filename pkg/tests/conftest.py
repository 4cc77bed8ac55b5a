import numpy as np
import pytest

from vapformer.dataio import Dataset
from vapformer.synth import canonical_splits, generate_task_samples, make_schema, resolve_task
from vapformer.verify import probe_data_config, probe_model_config, probe_train_config


@pytest.fixture(scope="session")
def probe_cfg():
    return probe_model_config()


@pytest.fixture(scope="session")
def schema():
    return make_schema()


def _probe_dataset(task):
    cfg = probe_data_config()
    dataset = Dataset(task, make_schema(), generate_task_samples(resolve_task(cfg, task)))
    return dataset, canonical_splits(dataset, cfg)


@pytest.fixture(scope="session")
def probe_task_a():
    return _probe_dataset("A")


@pytest.fixture(scope="session")
def probe_task_b():
    return _probe_dataset("B")


@pytest.fixture(scope="session")
def probe_train():
    return probe_train_config()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
