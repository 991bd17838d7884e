"""Counter-based random streams.

Every stochastic object in a run draws from a Philox stream derived from the
master seed and a fixed role key, so replaying a seed reproduces the run
bit-for-bit no matter how replicas are scheduled.
"""
from __future__ import annotations

import numpy as np

# Role prefixes for the spawn key. Agents get (AGENT, i); the field resampler
# and the initializer get singleton keys so no stream is ever shared.
_AGENT = 0
_FIELD = 1
_INIT = 2


def _stream(seed: int, spawn_key: tuple[int, ...]) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def agent_streams(seed: int, n_agents: int) -> list[np.random.Generator]:
    """One independent generator per agent, keyed by agent index."""
    return [_stream(seed, (_AGENT, i)) for i in range(n_agents)]


def field_stream(seed: int) -> np.random.Generator:
    """Generator reserved for field resampling draws."""
    return _stream(seed, (_FIELD, 0))


def init_stream(seed: int) -> np.random.Generator:
    """Generator reserved for drawing initial agent positions."""
    return _stream(seed, (_INIT, 0))
