"""Reproducible counter-based random streams.

Every worker stream is derived from (master seed, task name, replica,
window) through a SeedSequence, so ensembles can run concurrently without
stream coordination and rerunning with the same master seed is
bit-identical.
"""

import hashlib

import numpy as np

GENERATOR_NAME = "philox4x64"


def _task_key(task):
    digest = hashlib.sha256(task.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed, task, replica=0, window=0):
    return np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=(_task_key(task), int(replica), int(window)),
    )


def stream(master_seed, task, replica=0, window=0):
    """Philox generator for one (task, replica, window) cell."""
    return np.random.Generator(
        np.random.Philox(seed_sequence(master_seed, task, replica, window))
    )
