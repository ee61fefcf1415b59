"""Seed derivation.

Child seeds come from a splitmix64 hash of (master seed, stream index), so
adding a new stream never perturbs an existing one.
"""

_MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *streams: int) -> int:
    """Return a 63-bit child seed for the given stream path."""
    state = splitmix64(seed & _MASK)
    for s in streams:
        state = splitmix64(state ^ (s & _MASK))
    return state >> 1


# named stream indices, fixed forever
SOURCE_SAMPLE = 1
TARGET_SAMPLE = 2
SOURCE_TEST = 3
TARGET_TEST = 4
PSEUDO_LABEL = 10
SOURCE_ONLY_CLF = 11
GAN = 12
FINAL_CLF = 13
AGNOSTIC_CLF = 14
GENERATE = 15
SOURCE_GRID = 20
TARGET_GRID = 21
VERIFY = 30
GRADCHECK = 31
