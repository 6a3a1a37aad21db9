"""Deterministic per-stage RNG derivation.

All randomness flows from one root seed. Each pipeline stage draws from
default_rng(SeedSequence([root, STAGE_IDS[stage], *extra])), where `extra`
indexes sub-streams (environment number, corpus index, epoch, ...). The stage
id table below is the documented counter scheme; changing it changes every
derived stream.
"""

from __future__ import annotations

import numpy as np

STAGE_IDS = {
    "world": 1,
    "clip": 2,
    "backbone": 3,
    "backbone2": 4,
    "labels": 5,
    "tune": 6,
    "agent_baseline": 7,
    "agent_dap": 8,
    "eval": 9,
    "ablate": 10,
    "compare": 11,
    "pilot": 12,
}


def stage_rng(root_seed: int, stage: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), STAGE_IDS[stage], *map(int, extra)]))


def substream_seed(root_seed: int, stage: str, *extra: int) -> int:
    """A stable 63-bit integer seed for storing alongside artifacts."""
    ss = np.random.SeedSequence([int(root_seed), STAGE_IDS[stage], *map(int, extra)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
