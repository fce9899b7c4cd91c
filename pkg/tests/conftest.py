"""Shared fixtures: the conv benchmark sweeps are expensive, so they are
computed once per session and shared by every test that needs them."""

import numpy as np
import pytest

from fusionrobust.corruption import (
    CorruptionSpec,
    SyntheticTask,
    default_tau,
    evaluate_robustness,
    make_task,
)
from fusionrobust.models import build_conv_model
from fusionrobust.training import TrainConfig, train

CONV_SEEDS = (0, 1, 2, 3, 4)
CONV_EXTRA_SEEDS = (5, 6, 7, 8, 9)

CONV_TASK = SyntheticTask(
    kind="conv_classification",
    source_shapes=((8, 8, 4), (8, 8, 6)),
    n_train=4000,
    n_val=1000,
    seed=100,
)

DEPTHS = {"mean": (4, 4), "lel": (4, 6)}


def _eval_specs(sources, kind):
    if kind == "gaussian":
        return [
            CorruptionSpec(kind="gaussian", tau=default_tau(s), factor=0.75)
            for s in sources
        ]
    return [
        CorruptionSpec(kind="downsample", tau=default_tau(s), keep_ratio=0.25, axis=1)
        for s in sources
    ]


def run_conv_benchmark(fusion, algorithm, seed, corruption_kind, datasets):
    """Train one conv model and return its robustness report."""
    train_set, val_set = datasets
    specs = _eval_specs(train_set.sources, corruption_kind)
    graph = build_conv_model(
        CONV_TASK.source_shapes,
        DEPTHS[fusion],
        np.random.default_rng(seed),
        fusion=fusion,
    )
    config = TrainConfig(iterations=4000, batch_size=64, lr=1e-3, seed=seed)
    train(graph, train_set, config, algorithm=algorithm, corruption=specs)
    return evaluate_robustness(graph, val_set, specs, trials=5)


@pytest.fixture(scope="session")
def conv_datasets():
    return make_task(CONV_TASK)


@pytest.fixture(scope="session")
def gaussian_sweep(conv_datasets):
    """Reports per (fusion, algorithm) under Gaussian corruption, 5 seeds."""
    out = {}
    for algorithm in ("clean", "asn", "ssn", "ssn_alt"):
        out[("mean", algorithm)] = [
            run_conv_benchmark("mean", algorithm, s, "gaussian", conv_datasets)
            for s in CONV_SEEDS
        ]
    out[("lel", "clean")] = [
        run_conv_benchmark("lel", "clean", s, "gaussian", conv_datasets)
        for s in CONV_SEEDS
    ]
    return out


@pytest.fixture(scope="session")
def downsample_sweep(conv_datasets):
    """Reports per algorithm (mean fusion) under downsampling, 5 seeds."""
    return {
        algorithm: [
            run_conv_benchmark("mean", algorithm, s, "downsample", conv_datasets)
            for s in CONV_SEEDS
        ]
        for algorithm in ("clean", "asn", "ssn", "ssn_alt")
    }
