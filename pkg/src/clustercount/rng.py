"""Portable random number primitives.

Everything whose output is part of a stored artifact (encoder weights,
derived seeds) goes through splitmix64 so the byte streams are reproducible
across platforms and numpy versions.  splitmix64 is the mixing function from
Steele, Lea & Flood's SplitMix generator; its output for a given 64-bit seed
is fully specified by the constants below, with all arithmetic mod 2**64.

Components that only need in-process determinism (k-means++ sampling, agent
epsilon draws, noise frames) use numpy Generators seeded through
``derive_seed`` instead.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(state: int) -> tuple[int, int]:
    """Advance one splitmix64 step.  Returns ``(output, next_state)``."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31), state


def splitmix64_array(seed: int, n: int) -> np.ndarray:
    """The first ``n`` outputs of the splitmix64 stream for ``seed``.

    Vectorised form of repeated :func:`splitmix64` calls: output k is the mix
    of ``seed + (k+1) * golden`` because the state walk is a plain increment.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(seed & _MASK64) + k * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def uniform01(bits: np.ndarray) -> np.ndarray:
    """Map raw 64-bit outputs to float64 in [0, 1) using the top 53 bits."""
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _fnv1a64(tag: str) -> int:
    h = _FNV_OFFSET
    for b in tag.encode("utf-8"):
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(master: int, tag: str) -> int:
    """Deterministic child seed for a named component.

    Splitting rule: hash the tag with FNV-1a, xor into the master seed, take
    the first splitmix64 output.  Distinct tags give statistically independent
    streams; the same (master, tag) pair always maps to the same child.
    """
    out, _ = splitmix64((master ^ _fnv1a64(tag)) & _MASK64)
    return out


def np_generator(master: int, tag: str) -> np.random.Generator:
    """numpy Generator seeded from the documented splitting rule."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, tag)))
