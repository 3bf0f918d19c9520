"""Hash-based splitting of a master seed into named substreams.

A derived seed is addressed by a path ``(replication_id, role[, grid_index])``
and produced by ``numpy.random.SeedSequence(master, spawn_key=path)``. Paths
are distinct tuples of non-negative integers, so the SeedSequence entropy
pools differ for every (replication, lambda, role) triple.
"""
from __future__ import annotations

import numpy as np

ROLES = {
    "data-inputs": 0,
    "data-noise": 1,
    "split": 2,
    "train": 3,  # split again into init / shuffle by the trainer
    "replication": 4,
}
TRAIN_SUBROLES = ("init", "shuffle")


def seed_path(replication_id, role, grid_index=None):
    path = (int(replication_id), ROLES[role])
    if grid_index is not None:
        path += (int(grid_index),)
    if min(path) < 0:
        raise ValueError("seed path entries must be non-negative")
    return path


def derive_seed(master_seed, replication_id, role, grid_index=None) -> int:
    """64-bit unsigned seed for one substream."""
    ss = np.random.SeedSequence(int(master_seed),
                                spawn_key=seed_path(replication_id, role, grid_index))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_rng(master_seed, replication_id, role, grid_index=None):
    return np.random.default_rng(derive_seed(master_seed, replication_id, role, grid_index))
