"""Test-time theory induction and reuse.

Phase one extracts a program from a support pair by greedy code selection
with description-length truncation; phase two replays the extracted codes on
a fresh query input.  Sampling-based search draws a budget of candidate
programs at temperature T, keeps those that reproduce the support target,
and returns the modal survivor.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from .codec import decode, encode
from .domains import ARITHMETIC, GRID
from .metrics import domain_distance
from .neo import NeoModel, select_length
from .quantizer import MODE_ARGMAX, MODE_SAMPLE, select_primitive

# Default acceptance thresholds on the evaluation distance: discrete domains
# demand an exact decoded match, images tolerate a small mean-L1 residual.
DEFAULT_EPSILON = {GRID: 0.0, ARITHMETIC: 0.0, "image": 0.05}


@dataclass(frozen=True, order=True)
class Program:
    codes: tuple[int, ...] = ()

    @property
    def length(self) -> int:
        return len(self.codes)


@dataclass
class SearchConfig:
    budget: int = 64
    temperature: float = 1.0
    k_max: int = 4
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class InferenceRecord:
    """Per-instance trace summary emitted alongside predictions."""

    codes: list[int]
    selected_length: int
    losses: list[float]
    eval_distances: list[float]
    residual: float
    decoded: Optional[list] = None
    vote_counts: Optional[dict] = None
    failed: Optional[bool] = None

    def to_json_dict(self) -> dict:
        out = {
            "codes": self.codes,
            "selected_length": self.selected_length,
            "losses": self.losses,
            "eval_distances": self.eval_distances,
            "residual": self.residual,
        }
        if self.vote_counts is not None:
            out["vote_counts"] = {",".join(map(str, k)): v for k, v in self.vote_counts.items()}
        if self.failed is not None:
            out["failed"] = self.failed
        return out


def _eval_distance_batch(domain: str, preds: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-instance distance where 0 always means a perfect prediction."""
    out = np.empty(len(preds), dtype=np.float64)
    for i in range(len(preds)):
        d = domain_distance(domain, preds[i], target[i])
        out[i] = (1.0 - d) if domain in (GRID, ARITHMETIC) else d
    return out


@torch.no_grad()
def infer_programs_batch(
    model: NeoModel,
    codec,
    xs: np.ndarray,
    ys: np.ndarray,
    k_max: int,
    epsilon: float,
    lambda_mdl: float,
) -> tuple[list[Program], list[InferenceRecord]]:
    """Greedy program extraction for a batch of support pairs.

    Selection is argmax at every step; an instance stops unrolling early once
    its decoded state is within epsilon of the support target, and the
    program length is then chosen by MDL over the states actually produced.
    A failing program is still returned, with its residual.
    """
    model.eval()
    n = len(xs)
    s = encode(codec, xs)
    s_goal = encode(codec, ys)
    y_t = codec.obs_to_tensor(ys)

    losses = [codec.recon_loss(codec.decode_t(s), y_t).cpu().numpy()]
    dists = [_eval_distance_batch(model.domain, decode(codec, s), ys)]
    codes = np.zeros((n, k_max), dtype=np.int64)
    trace_len = np.zeros(n, dtype=np.int64)  # number of executed steps per instance
    # a non-finite epsilon disables early exit: the full trace is unrolled
    binding = np.isfinite(epsilon)
    active = (dists[0] > epsilon) if binding else np.ones(n, dtype=bool)
    states = s
    for k in range(k_max):
        if not active.any():
            break
        idx_active = np.nonzero(active)[0]
        sub = states[idx_active]
        u = model.propose(sub, s_goal[idx_active])
        idx, emb, _ = select_primitive(u, model.codebook, MODE_ARGMAX)
        nxt = model.execute_step(sub, emb)
        states = states.clone()
        states[idx_active] = nxt
        codes[idx_active, k] = idx.cpu().numpy()
        trace_len[idx_active] += 1

        step_loss = np.zeros(n, dtype=np.float64)
        step_dist = np.zeros(n, dtype=np.float64)
        step_loss[idx_active] = codec.recon_loss(codec.decode_t(nxt), y_t[idx_active]).cpu().numpy()
        step_dist[idx_active] = _eval_distance_batch(model.domain, decode(codec, nxt), ys[idx_active])
        losses.append(step_loss)
        dists.append(step_dist)
        if binding:
            active = active & (step_dist > epsilon)

    loss_mat = np.stack(losses, axis=1)
    dist_mat = np.stack(dists, axis=1)
    programs, records = [], []
    for i in range(n):
        upto = int(trace_len[i]) + 1
        k_star = select_length(loss_mat[i, :upto], lambda_mdl)
        prog = Program(tuple(int(c) for c in codes[i, : k_star - 1]))
        programs.append(prog)
        records.append(
            InferenceRecord(
                codes=list(prog.codes),
                selected_length=prog.length,
                losses=[float(v) for v in loss_mat[i, :upto]],
                eval_distances=[float(v) for v in dist_mat[i, :upto]],
                residual=float(dist_mat[i, k_star - 1]),
            )
        )
    return programs, records


def infer_program(
    model: NeoModel,
    codec,
    x,
    y,
    k_max: int,
    epsilon: float,
    lambda_mdl: float,
) -> tuple[Program, InferenceRecord]:
    xs = _as_batch(model.domain, x)
    ys = _as_batch(model.domain, y)
    programs, records = infer_programs_batch(model, codec, xs, ys, k_max, epsilon, lambda_mdl)
    return programs[0], records[0]


def _as_batch(domain: str, obs) -> np.ndarray:
    if domain == ARITHMETIC:
        return np.atleast_1d(np.asarray(obs, dtype=np.int64))
    arr = np.asarray(obs)
    expected = 2 if domain == GRID else 3
    return arr[None] if arr.ndim == expected else arr


@torch.no_grad()
def apply_programs_batch(
    model: NeoModel, codec, programs: Sequence[Program], xq: np.ndarray
) -> np.ndarray:
    """Replay stored code sequences on query inputs; decode the final state."""
    model.eval()
    states = encode(codec, xq)
    lengths = np.array([p.length for p in programs], dtype=np.int64)
    max_len = int(lengths.max()) if len(lengths) else 0
    for t in range(max_len):
        run = np.nonzero(lengths > t)[0]
        code_t = torch.tensor([programs[i].codes[t] for i in run], dtype=torch.long)
        sub = model.execute_step(states[run], model.codebook.embed(code_t))
        states = states.clone()
        states[run] = sub
    return decode(codec, states)


def apply_program(model: NeoModel, codec, prog: Program, x_query) -> np.ndarray:
    preds = apply_programs_batch(model, codec, [prog], _as_batch(model.domain, x_query))
    return preds[0] if model.domain != ARITHMETIC else preds[0]


@dataclass
class SearchResult:
    program: Program
    failed: bool
    survivors: int
    vote_counts: dict
    record: InferenceRecord


def majority_vote(
    candidates: Sequence[tuple[Program, float]], epsilon: float
) -> tuple[Program, float, bool, dict]:
    """Modal program among candidates whose residual passes the filter.

    Ties break toward the shortest program, then lexicographic code order.
    With no survivor the vote fails and the minimum-residual candidate is
    returned as a flagged best effort.
    """
    survivors = [prog for prog, residual in candidates if residual <= epsilon]
    votes = Counter(prog.codes for prog in survivors)
    if survivors:
        winner_codes = min(votes, key=lambda c: (-votes[c], len(c), c))
        winner = Program(winner_codes)
        residual = min(r for p, r in candidates if p.codes == winner_codes)
        return winner, residual, False, dict(votes)
    winner, residual = min(candidates, key=lambda pr: (pr[1], pr[0].length, pr[0].codes))
    return winner, residual, True, dict(votes)


@torch.no_grad()
def select_at_b(
    model: NeoModel,
    codec,
    x,
    y,
    search: SearchConfig,
    lambda_mdl: float,
) -> SearchResult:
    """Budgeted temperature sampling with exact-reproduction filtering.

    Draws ``budget`` programs, keeps candidates whose decoded support
    prediction reproduces the target within ``epsilon``, and majority-votes
    among survivors (ties: shortest program, then lexicographic codes).
    When no candidate survives, the result is flagged failed and carries the
    minimum-residual candidate so callers can still score a best effort.
    """
    model.eval()
    b = search.budget
    xs = np.repeat(_as_batch(model.domain, x), b, axis=0)
    ys = np.repeat(_as_batch(model.domain, y), b, axis=0)
    gen = torch.Generator().manual_seed(search.seed)

    s = encode(codec, xs)
    s_goal = encode(codec, ys)
    y_t = codec.obs_to_tensor(ys)
    losses = [codec.recon_loss(codec.decode_t(s), y_t).cpu().numpy()]
    dists = [_eval_distance_batch(model.domain, decode(codec, s), ys)]
    codes = np.zeros((b, search.k_max), dtype=np.int64)
    states = s
    for k in range(search.k_max):
        u = model.propose(states, s_goal)
        idx, emb, _ = select_primitive(
            u, model.codebook, MODE_SAMPLE, temperature=search.temperature, generator=gen
        )
        states = model.execute_step(states, emb)
        codes[:, k] = idx.cpu().numpy()
        losses.append(codec.recon_loss(codec.decode_t(states), y_t).cpu().numpy())
        dists.append(_eval_distance_batch(model.domain, decode(codec, states), ys))
    loss_mat = np.stack(losses, axis=1)
    dist_mat = np.stack(dists, axis=1)

    candidates: list[tuple[Program, float]] = []
    for i in range(b):
        k_star = select_length(loss_mat[i], lambda_mdl)
        prog = Program(tuple(int(c) for c in codes[i, : k_star - 1]))
        candidates.append((prog, float(dist_mat[i, k_star - 1])))
    winner, residual, failed, votes = majority_vote(candidates, search.epsilon)
    record = InferenceRecord(
        codes=list(winner.codes),
        selected_length=winner.length,
        losses=[],
        eval_distances=[],
        residual=residual,
        vote_counts=dict(votes),
        failed=failed,
    )
    return SearchResult(
        program=winner, failed=failed, survivors=sum(votes.values()), vote_counts=votes, record=record
    )


@torch.no_grad()
def intervene(
    model: NeoModel,
    codec,
    x,
    forced_prefix: Program,
    continue_steps: int = 0,
    goal=None,
) -> InferenceRecord:
    """Execute forced codes, then optionally continue greedily toward a goal.

    Returns the counterfactual trace with every intermediate state decoded.
    An empty prefix with a goal is exactly the greedy extraction rollout.
    """
    model.eval()
    xs = _as_batch(model.domain, x)
    states = encode(codec, xs)
    decoded = [decode(codec, states)[0]]
    codes: list[int] = []
    for code in forced_prefix.codes:
        emb = model.codebook.embed(torch.tensor([code], dtype=torch.long))
        states = model.execute_step(states, emb)
        decoded.append(decode(codec, states)[0])
        codes.append(int(code))
    if continue_steps > 0:
        if goal is None:
            raise ValueError("greedy continuation requires a goal observation")
        s_goal = encode(codec, _as_batch(model.domain, goal))
        for _ in range(continue_steps):
            u = model.propose(states, s_goal)
            idx, emb, _ = select_primitive(u, model.codebook, MODE_ARGMAX)
            states = model.execute_step(states, emb)
            decoded.append(decode(codec, states)[0])
            codes.append(int(idx[0]))
    return InferenceRecord(
        codes=codes,
        selected_length=len(codes),
        losses=[],
        eval_distances=[],
        residual=float("nan"),
        decoded=decoded,
    )
