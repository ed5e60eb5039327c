"""End-to-end task-function training on synthetic p-tools.

Mirrors the full learning pipeline: label an initial population with
the task oracle, train a first model, upsample by interpolation,
balance the enlarged pool to a uniform category distribution under the
first model, re-label the balanced set with the oracle, and train the
final (optionally pruned) model.
"""

from __future__ import annotations

import logging

import numpy as np

from .ptool import PTool, features
from .synthetic import random_ptools
from .taskfn import (
    LabeledSet,
    TaskFunctionModel,
    balance,
    interpolation_sample,
    train,
    train_with_pruning,
)
from .tasks import TaskSpec, categorize, oracle_score

logger = logging.getLogger(__name__)


def label_ptools(ptools: list[PTool], task: TaskSpec) -> LabeledSet:
    """Oracle-label a p-tool population."""
    feats = [features(pt) for pt in ptools]
    raw = np.array([oracle_score(f, task) for f in feats])
    cats = np.array([categorize(r, task.thresholds) for r in raw])
    return LabeledSet(features=feats, raw_scores=raw, categories=cats)


def learn_task_function(task: TaskSpec, rng_seed: int = 0,
                        n_initial: int = 200, target_n: int = 400,
                        prune: bool = True,
                        pool_cap_factor: int = 6) -> TaskFunctionModel:
    """Train a task function on a synthetic population (desk-scale counts).

    The interpolant pool is randomly capped at pool_cap_factor x
    target_n before balancing (excess p-tools are discarded anyway).
    Falls back to uncapped originals if a predicted category is
    missing, and to the initial labeled set if balancing is impossible.
    """
    rng = np.random.default_rng(rng_seed)
    initial = random_ptools(n_initial, int(rng.integers(2 ** 31)))
    labeled = label_ptools(initial, task)
    first = train(labeled, int(rng.integers(2 ** 31)), task_name=task.name)

    interpolants = interpolation_sample(initial, int(rng.integers(2 ** 31)))
    pool = list(initial) + interpolants
    cap = pool_cap_factor * target_n
    if len(pool) > cap:
        keep = rng.choice(len(pool), size=cap, replace=False)
        pool = [pool[i] for i in sorted(keep)]

    try:
        balanced = balance(pool, first, task, target_n, int(rng.integers(2 ** 31)))
    except ValueError as exc:
        logger.warning("balancing failed (%s); training on the initial set", exc)
        balanced = initial

    final_set = label_ptools(balanced, task)
    seed = int(rng.integers(2 ** 31))
    if prune:
        return train_with_pruning(final_set, seed, task_name=task.name)
    return train(final_set, seed, task_name=task.name)
