"""Deterministic stream addressing on top of numpy's Philox generator.

Every random draw in this package comes from a Philox-4x64-10 counter-based
generator whose 64-bit key is derived from a master seed and a short integer
path (replica index, stream purpose).  Both the generator and the key
derivation (a SplitMix64 chain) use fixed published constants, so a seed
written into a manifest identifies the same streams everywhere.

Key derivation: k0 = mix64(master_seed), k_{j+1} = mix64(k_j XOR (path_j + PHI)),
with mix64 the SplitMix64 finalizer and PHI = 0x9E3779B97F4A7C15.  The Philox
key is the pair (k_final, 0).
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_PHI = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

# Stream purpose tags.  These are part of the public seeding contract and are
# recorded in run manifests.
GC_STREAM = 1          # graphical construction (recovery marks + arrows)
CLOCK_STREAM = 2       # walker clock, primary copy
AUX_CLOCK_STREAM = 3   # walker clock, auxiliary copy used by the coupling splice
INIT_STREAM = 4        # random initial configurations
SCRATCH_STREAM = 5     # anything else (diagnostics, shuffles)


def mix64(z: int) -> int:
    """SplitMix64 finalizer (Steele-Lea-Flood constants)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_key(master_seed: int, *path: int) -> int:
    """Fold ``path`` into a 64-bit stream key."""
    k = mix64(int(master_seed))
    for p in path:
        k = mix64(k ^ ((int(p) + _PHI) & _MASK64))
    return k


def generator_from_key(key: int) -> np.random.Generator:
    """Philox generator keyed directly by an already-derived 64-bit key."""
    bitgen = np.random.Philox(key=np.array([int(key) & _MASK64, 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


def generator(master_seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the stream addressed by (master_seed, *path)."""
    return generator_from_key(derive_key(master_seed, *path))


def replica_key(master_seed: int, replica: int, stream: int) -> int:
    """Key of one purpose stream inside one replica, as written to manifests."""
    return derive_key(master_seed, replica, stream)


def replica_generator(master_seed: int, replica: int, stream: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=np.array([replica_key(master_seed, replica, stream), 0],
                                           dtype=np.uint64))
    return np.random.Generator(bitgen)
