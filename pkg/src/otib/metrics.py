"""Evaluation quantities.

Scores follow the benchmark conventions: grid and arithmetic report
exact-match accuracy (higher is better), images report mean absolute pixel
distance (lower is better).  Every report labels which convention it uses.
Self-explainability grades the induced theory's prediction on the support
input; transferability grades the same theory's prediction on the query
input.  Both always come from a single induction per instance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import domains
from .domains import ARITHMETIC, GRID, IMAGE
from .splits import EvalSet

SCORE_ACCURACY = "accuracy"
SCORE_L1 = "l1_distance"


def score_kind(domain: str) -> str:
    return SCORE_L1 if domain == IMAGE else SCORE_ACCURACY


def domain_distance(domain: str, pred, target) -> float:
    """Evaluation metric d: match indicator (grid/arith) or mean L1 (image)."""
    if domain == ARITHMETIC:
        return float(int(pred) == int(target))
    a, b = np.asarray(pred), np.asarray(target)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if domain == GRID:
        return float(np.array_equal(a, b))
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


@dataclass
class EvalReport:
    regime: str
    score_kind: str
    self_explainability: float
    transferability: float
    n_instances: int
    per_length: dict = field(default_factory=dict)
    mean_explanation_length: Optional[float] = None
    search_failures: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(adapter, eval_set: EvalSet, regime: str, chunk_size: int = 256) -> EvalReport:
    """Induce on each support pair, grade support and query predictions."""
    n = len(eval_set)
    self_scores = np.empty(n, dtype=np.float64)
    transfer_scores = np.empty(n, dtype=np.float64)
    lengths = eval_set.truth_lengths()
    explanation_lengths: list[int] = []
    failures = 0
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        xs, ys = eval_set.xs[start:stop], eval_set.ys[start:stop]
        xq, yq = eval_set.xq[start:stop], eval_set.yq[start:stop]
        theories, records = adapter.induce(xs, ys, start_index=start)
        pred_s = adapter.predict(theories, xs)
        pred_q = adapter.predict(theories, xq)
        for i in range(stop - start):
            self_scores[start + i] = domain_distance(eval_set.domain, pred_s[i], ys[i])
            transfer_scores[start + i] = domain_distance(eval_set.domain, pred_q[i], yq[i])
        for rec in records or []:
            if rec is not None:
                explanation_lengths.append(rec.selected_length)
                if rec.failed:
                    failures += 1
    per_length = {}
    for ell in sorted(set(int(v) for v in lengths)):
        mask = lengths == ell
        per_length[int(ell)] = {
            "n": int(mask.sum()),
            "self": float(self_scores[mask].mean()),
            "transfer": float(transfer_scores[mask].mean()),
        }
    return EvalReport(
        regime=regime,
        score_kind=score_kind(eval_set.domain),
        self_explainability=float(self_scores.mean()),
        transferability=float(transfer_scores.mean()),
        n_instances=n,
        per_length=per_length,
        mean_explanation_length=(
            float(np.mean(explanation_lengths)) if explanation_lengths else None
        ),
        search_failures=failures if explanation_lengths else None,
    )


NOOP_COLUMN = "no_op"


@dataclass
class AlignmentMatrix:
    counts: np.ndarray  # codes x primitives (+ no-op column for images)
    columns: list[str]
    provenance: dict

    def to_csv_rows(self) -> list[list]:
        rows = [["code"] + self.columns]
        for i, row in enumerate(self.counts):
            rows.append([i] + [int(v) for v in row])
        return rows


def _feasible_probes(domain: str, prim_index: int, n: int, rng, **domain_opts) -> np.ndarray:
    prog = domains.parse_program(domain, [prim_index])
    obs = [domains.sample_source(domain, prog, child, **domain_opts) for child in rng.spawn(n)]
    if domain == ARITHMETIC:
        return np.array(obs, dtype=np.int64)
    return np.stack(obs)


def alignment_matrix(
    adapter, domain: str, n_probes: int = 500, seed: int = 0, **domain_opts
) -> AlignmentMatrix:
    """Count how often each learned code's one-step effect matches each primitive.

    Discrete domains count exact decoded matches per primitive over probe
    inputs feasible for that primitive.  Images assign each (code, probe)
    pair to the minimum-loss column among all primitives plus a no-op.
    """
    if adapter.n_codes is None:
        raise ValueError("alignment requires a model with discrete codes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    prims = domains.primitive_set(domain)
    names = [p.name for p in prims]
    if domain == IMAGE:
        columns = names + [NOOP_COLUMN]
        counts = np.zeros((adapter.n_codes, len(columns)), dtype=np.int64)
        probes = _feasible_probes(domain, 0, n_probes, rng, **domain_opts)
        targets = []
        for prim in prims:
            targets.append(np.stack([domains.oracle_step(x, prim) for x in probes]))
        targets.append(probes.copy())  # no-op column
        for code in range(adapter.n_codes):
            preds = adapter.one_step(probes, code)
            dists = np.stack(
                [np.abs(preds - t).mean(axis=(1, 2, 3)) for t in targets], axis=1
            )
            for j in dists.argmin(axis=1):
                counts[code, j] += 1
    else:
        columns = names
        counts = np.zeros((adapter.n_codes, len(columns)), dtype=np.int64)
        for j, prim in enumerate(prims):
            probes = _feasible_probes(domain, j, n_probes, rng, **domain_opts)
            targets = [domains.oracle_step(x, prim) for x in probes]
            for code in range(adapter.n_codes):
                preds = adapter.one_step(probes, code)
                counts[code, j] += sum(
                    domain_distance(domain, preds[i], targets[i]) == 1.0
                    for i in range(len(probes))
                )
    return AlignmentMatrix(
        counts=counts,
        columns=columns,
        provenance={"domain": domain, "n_probes": n_probes, "seed": seed},
    )


def primitiveness(
    adapter,
    domain: str,
    n_probes: int = 500,
    seed: int = 0,
    epsilon: float = 0.05,
    **domain_opts,
) -> float:
    """Fraction of primitive applications some learned code reproduces exactly.

    Builds a probe set with every ground-truth primitive applied once per
    input and checks, per pair, whether at least one code's one-step output
    matches the target (exactly, or within mean-L1 epsilon for images).
    """
    if adapter.n_codes is None:
        raise ValueError("primitiveness requires a model with discrete codes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB11]))
    hits = 0
    total = 0
    for j, prim in enumerate(domains.primitive_set(domain)):
        probes = _feasible_probes(domain, j, n_probes, rng, **domain_opts)
        targets = [domains.oracle_step(x, prim) for x in probes]
        matched = np.zeros(len(probes), dtype=bool)
        for code in range(adapter.n_codes):
            preds = adapter.one_step(probes, code)
            for i in range(len(probes)):
                if matched[i]:
                    continue
                if domain == IMAGE:
                    ok = domain_distance(domain, preds[i], targets[i]) <= epsilon
                else:
                    ok = domain_distance(domain, preds[i], targets[i]) == 1.0
                matched[i] = ok
        hits += int(matched.sum())
        total += len(probes)
    return hits / total


def mean_explanation_length(adapter, eval_set: EvalSet, chunk_size: int = 256) -> float:
    """Average induced program length over an evaluation set."""
    lengths: list[int] = []
    for start in range(0, len(eval_set), chunk_size):
        stop = min(start + chunk_size, len(eval_set))
        _, records = adapter.induce(
            eval_set.xs[start:stop], eval_set.ys[start:stop], start_index=start
        )
        lengths.extend(rec.selected_length for rec in records)
    return float(np.mean(lengths))


def ground_truth_mean_length(eval_set: EvalSet) -> float:
    return float(eval_set.truth_lengths().mean())
