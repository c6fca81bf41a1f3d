"""Counter-based random substreams.

Every random draw in the package comes from a generator keyed by
``(master_seed, purpose, *index)``, so signals, matrices, noise, topologies
and mini-batch draws can each be regenerated without replaying the others.
"""

import numpy as np

PURPOSES = {
    "signal": 1,
    "matrix": 2,
    "noise": 3,
    "topology": 4,
    "minibatch": 5,
    "run": 6,
    "theorem": 7,
}


def _key(purpose, index):
    if purpose not in PURPOSES:
        raise ValueError(f"unknown random purpose {purpose!r}")
    return (PURPOSES[purpose],) + tuple(int(i) for i in index)


def substream(master_seed, purpose, *index):
    """Independent generator for ``(master_seed, purpose, *index)``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=_key(purpose, index))
    return np.random.default_rng(seq)


def derive_seed(master_seed, purpose, *index):
    """Unsigned 63-bit child seed, stable under adding more indices later."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=_key(purpose, index))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
