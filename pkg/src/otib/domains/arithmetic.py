"""Integer factorization domain: multiply by one of the primes 2, 3, 5, 7.

Observations are non-negative integers with at most six decimal digits.
All primitives commute, so the canonical class is the ascending factor list.
"""

from __future__ import annotations

import math

import numpy as np

PRIMITIVE_NAMES = ("x2", "x3", "x5", "x7")

FACTORS = (2, 3, 5, 7)

DIGITS = 6
LIMIT = 10**DIGITS  # values must stay strictly below this


def step(obs: int, index: int) -> int:
    from . import DomainError

    value = int(obs)
    if not 0 <= value < LIMIT:
        raise ValueError(f"observation {value} outside [0, {LIMIT})")
    out = value * FACTORS[index]
    if out >= LIMIT:
        raise DomainError(f"{value} * {FACTORS[index]} exceeds {DIGITS} digits")
    return out


def multiset_valid(indices: list[int]) -> bool:
    return True  # multiplication never cancels


def sample_source(prog, rng: np.random.Generator) -> int:
    from . import InfeasibleProgramError

    product = math.prod(FACTORS[i] for i in prog.indices)
    hi = (LIMIT - 1) // product
    if hi < 1:
        raise InfeasibleProgramError(
            f"no nonzero source admits arithmetic program {prog.name}"
        )
    # zero is excluded: every program fixes it, so (0, 0) pairs carry no signal
    return int(rng.integers(1, hi + 1))


def to_digits(value: int) -> np.ndarray:
    """Most-significant-first digit vector of length six."""
    if not 0 <= value < LIMIT:
        raise ValueError(f"value {value} outside [0, {LIMIT})")
    return np.array([(value // 10**p) % 10 for p in range(DIGITS - 1, -1, -1)], dtype=np.int64)


def from_digits(digits: np.ndarray) -> int:
    digits = np.asarray(digits)
    return int(sum(int(d) * 10 ** (DIGITS - 1 - i) for i, d in enumerate(digits)))
