"""Counter-based random streams: one reproducible generator per (master seed, index)."""
from __future__ import annotations

import numpy as np

TRIAL_DOMAIN = 1
CAMPAIGN_DOMAIN = 0


def derive_seed(master_seed: int, index: int, domain: int = TRIAL_DOMAIN) -> int:
    """64-bit seed hashed from ``(master_seed, domain, index)``."""
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(domain), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def seed_stream(master_seed: int, trial_index: int, domain: int = TRIAL_DOMAIN) -> np.random.Generator:
    """Independent generator for one trial; same arguments give the same stream."""
    return np.random.default_rng(derive_seed(master_seed, trial_index, domain))
