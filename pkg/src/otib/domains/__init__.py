"""Ground-truth primitive oracles and program algebra for the three domains.

A *program class* is the canonical representative of an equivalence class of
primitive sequences.  Canonical form is "sorted by primitive table index" in
every domain; each domain additionally rejects sequences that are not valid
class representatives (e.g. mutually canceling grid moves).  All operations
here are pure functions of their inputs plus an explicit RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence, Union

import numpy as np

from . import arithmetic, grid, image

GRID = "grid"
ARITHMETIC = "arithmetic"
IMAGE = "image"

DOMAINS = (GRID, ARITHMETIC, IMAGE)

_MODULES = {GRID: grid, ARITHMETIC: arithmetic, IMAGE: image}

# Observation is domain-dependent: a (10, 10) uint8 occupancy grid, a
# non-negative int below 10**6, or an (H, W, 3) float32 array in [0, 1].
Observation = Union[np.ndarray, int]


class DomainError(ValueError):
    """A primitive application violated a domain constraint."""


class InfeasibleProgramError(ValueError):
    """No source observation admits the full program."""


def _check_domain(domain: str) -> None:
    if domain not in _MODULES:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")


@dataclass(frozen=True, order=True)
class PrimitiveId:
    """One atomic ground-truth transformation, identified by table position."""

    domain: str
    index: int

    def __post_init__(self) -> None:
        _check_domain(self.domain)
        count = primitive_count(self.domain)
        if not 0 <= self.index < count:
            raise ValueError(f"primitive index {self.index} out of range for {self.domain}")

    @property
    def name(self) -> str:
        return _MODULES[self.domain].PRIMITIVE_NAMES[self.index]


@dataclass(frozen=True)
class ProgramClass:
    """Canonical representative of a program equivalence class."""

    domain: str
    ops: tuple[PrimitiveId, ...] = field(compare=True)

    def __post_init__(self) -> None:
        _check_domain(self.domain)
        if len(self.ops) < 1:
            raise ValueError("a program class has length >= 1")
        if any(op.domain != self.domain for op in self.ops):
            raise ValueError("mixed-domain program")
        indices = list(self.indices)
        if sorted(indices) != indices or not _MODULES[self.domain].multiset_valid(indices):
            raise ValueError(f"ops {tuple(indices)} are not a canonical class representative")

    @property
    def length(self) -> int:
        return len(self.ops)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(op.index for op in self.ops)

    @property
    def name(self) -> str:
        return "+".join(op.name for op in self.ops)

    def sort_key(self) -> tuple:
        return (self.length, self.indices)


class _Rejected:
    """Distinguished non-error outcome of :func:`canonicalize`."""

    def __repr__(self) -> str:  # pragma: no cover
        return "REJECTED"

    def __bool__(self) -> bool:
        return False


REJECTED = _Rejected()


def primitive_count(domain: str) -> int:
    _check_domain(domain)
    return len(_MODULES[domain].PRIMITIVE_NAMES)


def primitive_set(domain: str) -> list[PrimitiveId]:
    """All primitives of a domain in fixed table order."""
    _check_domain(domain)
    return [PrimitiveId(domain, i) for i in range(primitive_count(domain))]


def primitive_names(domain: str) -> tuple[str, ...]:
    _check_domain(domain)
    return tuple(_MODULES[domain].PRIMITIVE_NAMES)


def oracle_step(obs: Observation, prim: PrimitiveId) -> Observation:
    """Apply one primitive; raises :class:`DomainError` on constraint violation."""
    return _MODULES[prim.domain].step(obs, prim.index)


def oracle_execute(obs: Observation, prog: ProgramClass | Sequence[PrimitiveId]) -> Observation:
    """Left-to-right fold of :func:`oracle_step` over the program's ops."""
    ops = prog.ops if isinstance(prog, ProgramClass) else tuple(prog)
    out = obs
    for k, op in enumerate(ops):
        try:
            out = oracle_step(out, op)
        except DomainError as exc:
            raise DomainError(f"step {k} ({op.name}): {exc}") from exc
    return out


def canonicalize(domain: str, seq: Sequence[PrimitiveId]) -> ProgramClass | _Rejected:
    """Map a primitive sequence to its canonical class, or reject it.

    Canonical order is ascending primitive-table index.  Rejection means the
    sequence is not a valid class representative (it contains a canceling or
    redundant combination), not that it is malformed.
    """
    _check_domain(domain)
    ops = tuple(seq)
    if not ops:
        raise ValueError("empty sequence")
    if any(op.domain != domain for op in ops):
        raise ValueError("sequence domain does not match requested domain")
    indices = sorted(op.index for op in ops)
    if not _MODULES[domain].multiset_valid(indices):
        return REJECTED
    canon_ops = tuple(PrimitiveId(domain, i) for i in indices)
    return ProgramClass(domain, canon_ops)


def enumerate_classes(domain: str, len_min: int, len_max: int) -> set[ProgramClass]:
    """Exhaustive, duplicate-free set of canonical classes with lengths in range."""
    if not 1 <= len_min <= len_max:
        raise ValueError(f"invalid length range [{len_min}, {len_max}]")
    _check_domain(domain)
    prims = primitive_set(domain)
    out: set[ProgramClass] = set()
    for n in range(len_min, len_max + 1):
        for combo in combinations_with_replacement(prims, n):
            cls = canonicalize(domain, combo)
            if cls is not REJECTED:
                out.add(cls)
    return out


def sample_source(
    domain: str,
    prog: ProgramClass,
    rng: np.random.Generator,
    **domain_opts,
) -> Observation:
    """Sample a source observation for which the full program executes.

    Deterministic given the RNG state.  Domain options: the image domain
    accepts ``image_size``, ``image_source`` (a callable ``(rng, size) ->
    array``) and ``retention_threshold``.
    """
    _check_domain(domain)
    if prog.domain != domain:
        raise ValueError("program domain mismatch")
    return _MODULES[domain].sample_source(prog, rng, **domain_opts)


def observations_equal(domain: str, a: Observation, b: Observation) -> bool:
    """Exact equality for grid/arithmetic; bitwise array equality for image."""
    _check_domain(domain)
    if domain == ARITHMETIC:
        return int(a) == int(b)
    return np.array_equal(a, b)


def parse_program(domain: str, indices: Sequence[int]) -> ProgramClass:
    """Build a ProgramClass from raw primitive indices (must be canonical)."""
    return ProgramClass(domain, tuple(PrimitiveId(domain, int(i)) for i in indices))
