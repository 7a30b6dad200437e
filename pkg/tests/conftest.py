"""Session fixtures for the acceptance suite.

The expensive piece is one full training run at the shipped default
configuration; it is built lazily on first use and shared by every
test that scores the trained model, so the suite trains exactly once.
"""

import copy
import time

import numpy as np
import pytest

from gaf.cli import DEFAULT_CONFIG
from gaf.data import make_dataset
from gaf.metrics import energy_distance, fit_centroids
from gaf.model import GafConfig, build_model
from gaf.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def desk_config():
    return copy.deepcopy(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def desk_data(desk_config):
    """Training and held-out splits plus the per-class baseline distance.

    The baseline (held-out vs train, per class) is computed before any
    model exists; generation quality is judged against twice this value.
    """
    dc = desk_config["data"]
    train_ds = make_dataset(dc["kind"], dc["num_classes"], dc["samples_per_class"], dc["seed"])
    held_ds = make_dataset(dc["kind"], dc["num_classes"], dc["samples_per_class"],
                           dc["heldout_seed"], stats=train_ds.stats)
    baseline = np.array([energy_distance(train_ds.class_points(c), held_ds.class_points(c))
                         for c in range(train_ds.num_classes)])
    return {"train": train_ds, "held": held_ds, "baseline": baseline}


@pytest.fixture(scope="session")
def desk_run(desk_config, desk_data):
    """The default-config model trained to completion, with wall time."""
    model = build_model(GafConfig(**desk_config["model"]))
    train_cfg = TrainConfig(**desk_config["train"])
    t0 = time.perf_counter()
    train(model, desk_data["train"], train_cfg, verbose=True)
    seconds = time.perf_counter() - t0
    return {"model": model, "train_seconds": seconds, "train_cfg": train_cfg}


@pytest.fixture(scope="session")
def desk_centroids(desk_data):
    ds = desk_data["train"]
    return fit_centroids(ds.points, ds.labels, ds.num_classes)
