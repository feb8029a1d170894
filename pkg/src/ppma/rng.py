"""Deterministic random-number plumbing shared by splitting, simulation and
the noisy-oracle predictor.

All randomness in the package flows through these helpers so that a run is
fully reproducible from the seeds recorded in its manifest.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 sequence; used to derive substream seeds."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def substream_seed(base_seed: int, index: int) -> int:
    """Seed for substream ``index``: splitmix64(base_seed XOR index)."""
    return splitmix64((int(base_seed) ^ int(index)) & _MASK64)


def generator(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream); streams never overlap."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def row_hash_normals(seed: int, X: np.ndarray) -> np.ndarray:
    """One standard normal draw per row of ``X``, a pure function of
    (seed, row values).

    Rows with identical values always receive identical draws, so a
    stateless predictor can assign i.i.d. noise to labeled and unlabeled
    rows without storing anything.  The hash -> uniform -> inverse-CDF path
    avoids any dependence on a generator's internal state.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    seed_bytes = (int(seed) & _MASK64).to_bytes(8, "little")
    n = X.shape[0]
    h = np.empty(n, dtype=np.uint64)
    for i in range(n):
        digest = hashlib.blake2b(seed_bytes + X[i].tobytes(), digest_size=8).digest()
        h[i] = int.from_bytes(digest, "little")
    # 53-bit mantissa, offset by half a step: u is strictly inside (0, 1).
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)
