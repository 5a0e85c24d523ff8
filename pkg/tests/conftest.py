"""Shared helpers for the test suite."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from adaptmatch.config import (
    BatchSizes,
    ContrastConfig,
    DatasetConfig,
    OptimizerConfig,
    TrainConfig,
)


def tiny_config(**overrides) -> TrainConfig:
    """A fast two-moons config for end-to-end tests (fractions of a second).

    The relation cutoffs are lowered to suit 23-candidate batches: softmax
    mass spreads across all candidates, so cutoffs calibrated for very sharp
    distributions would leave the contrastive term permanently idle.
    """
    cfg = TrainConfig(
        seed=0,
        iterations=40,
        mode="full",
        eval_interval=20,
        batch=BatchSizes(labeled=8, mu=3),
        dataset=DatasetConfig(size=200, eval_size=100, labels_per_class=4),
        optimizer=OptimizerConfig(lr=0.05),
        contrastive=ContrastConfig(eps_weak=0.2, eps_strong=0.15, negatives=8),
    )
    return dataclasses.replace(cfg, **overrides)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
