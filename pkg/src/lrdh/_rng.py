"""Seed derivation for reproducible, thread-count-independent ensembles.

Every unit of Monte Carlo work owns a counter-based generator derived from
the master seed plus integer role/index keys.  Results therefore do not
depend on scheduling order or worker count.
"""

from __future__ import annotations

import numpy as np

# role keys used when deriving sub-streams; values are arbitrary but frozen
ROLE_FIELD = 11
ROLE_FBM_POS = 12
ROLE_FBM_NEG = 13
ROLE_PATHS = 21
ROLE_ENV = 22
ROLE_INNER = 23
ROLE_SUBSAMPLE = 31
ROLE_BOOTSTRAP = 32


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a Philox generator for the (seed, key...) slot."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key...) into a single 63-bit integer seed."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1),
                                spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)
