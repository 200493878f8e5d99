"""Counter-based random numbers keyed by (seed, shot, site, draw).

Every random decision in the simulators is a pure function of its key, so
results do not depend on execution order, batching or parallelism.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def splitmix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def keyed_u64(seed, shot, site, draw):
    h = splitmix64(np.uint64(seed) ^ _SEED_SALT)
    h = splitmix64(h ^ np.uint64(shot))
    h = splitmix64(h ^ np.uint64(site))
    return splitmix64(h ^ np.uint64(draw))


@njit(cache=True, inline="always")
def keyed_uniform(seed, shot, site, draw):
    return np.float64(keyed_u64(seed, shot, site, draw) >> np.uint64(11)) * _INV53


@njit(cache=True)
def uniform_block(seed, shot_start, n_shots, site_start, n_sites, draw):
    out = np.empty((n_shots, n_sites))
    for i in range(n_shots):
        for j in range(n_sites):
            out[i, j] = keyed_uniform(seed, shot_start + i, site_start + j, draw)
    return out


def derive_seed(*parts: int) -> int:
    """Combine integers into one 63-bit seed (used for independent sub-streams)."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
