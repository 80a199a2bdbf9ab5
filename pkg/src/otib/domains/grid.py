"""10x10 single-object grid with four unit-translation primitives.

Observations are (10, 10) uint8 arrays with exactly one occupied cell.  Moves
that would leave the grid raise instead of clamping, so every primitive is an
exact, invertible translation; infeasible trajectories are rejected at
sampling time instead.
"""

from __future__ import annotations

import numpy as np

SIZE = 10

PRIMITIVE_NAMES = ("up", "right", "down", "left")

# (drow, dcol) per primitive, in table order.
DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))

LETTERS = {"U": 0, "R": 1, "D": 2, "L": 3}


def _domain_error(msg: str):
    from . import DomainError

    return DomainError(msg)


def object_position(obs: np.ndarray) -> tuple[int, int]:
    arr = np.asarray(obs)
    if arr.shape != (SIZE, SIZE):
        raise ValueError(f"grid observation must be ({SIZE}, {SIZE}), got {arr.shape}")
    rows, cols = np.nonzero(arr)
    if len(rows) != 1:
        raise ValueError(f"grid observation must contain exactly one object, found {len(rows)}")
    return int(rows[0]), int(cols[0])


def make_observation(row: int, col: int) -> np.ndarray:
    if not (0 <= row < SIZE and 0 <= col < SIZE):
        raise ValueError(f"position ({row}, {col}) outside the {SIZE}x{SIZE} grid")
    obs = np.zeros((SIZE, SIZE), dtype=np.uint8)
    obs[row, col] = 1
    return obs


def step(obs: np.ndarray, index: int) -> np.ndarray:
    row, col = object_position(obs)
    drow, dcol = DELTAS[index]
    nrow, ncol = row + drow, col + dcol
    if not (0 <= nrow < SIZE and 0 <= ncol < SIZE):
        raise _domain_error(
            f"{PRIMITIVE_NAMES[index]} from ({row}, {col}) leaves the grid"
        )
    return make_observation(nrow, ncol)


def multiset_valid(indices: list[int]) -> bool:
    """A class may not contain a mutually canceling pair (net-zero axis)."""
    counts = [indices.count(i) for i in range(4)]
    if counts[0] and counts[2]:  # up with down
        return False
    if counts[1] and counts[3]:  # right with left
        return False
    return True


def net_displacement(indices) -> tuple[int, int]:
    drow = dcol = 0
    for i in indices:
        dr, dc = DELTAS[i]
        drow += dr
        dcol += dc
    return drow, dcol


def feasible_positions(prog) -> list[tuple[int, int]]:
    """Start positions whose full canonical-order trajectory stays in bounds."""
    deltas = [DELTAS[i] for i in prog.indices]
    rows = np.cumsum([0] + [d[0] for d in deltas])
    cols = np.cumsum([0] + [d[1] for d in deltas])
    row_lo, row_hi = -int(rows.min()), SIZE - 1 - int(rows.max())
    col_lo, col_hi = -int(cols.min()), SIZE - 1 - int(cols.max())
    return [
        (r, c)
        for r in range(max(0, row_lo), min(SIZE - 1, row_hi) + 1)
        for c in range(max(0, col_lo), min(SIZE - 1, col_hi) + 1)
    ]


def sample_source(prog, rng: np.random.Generator) -> np.ndarray:
    from . import InfeasibleProgramError

    feasible = feasible_positions(prog)
    if not feasible:
        raise InfeasibleProgramError(f"no feasible source for grid program {prog.name}")
    row, col = feasible[int(rng.integers(len(feasible)))]
    return make_observation(row, col)
