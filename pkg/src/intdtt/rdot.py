"""Rate-distortion machinery and RDOT design.

Blocks are ``(h, w)`` arrays; a separable transform is described by its two
analysis matrices, coefficients being ``C = A_c X A_r^T``.  The RD cost of
coding a block with transform ``T`` at quantizer step ``D`` is

    ||x - x_hat||^2 + lagrangian * (sum |levels| + signaling_bits)

with distortion measured in the pixel domain after the inverse transform.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .base_transforms import EigenSystem, gft
from .graph_learning import LearningError, LearningProblem, solve
from .graph_model import DttPlusParams, GeneralizedLaplacian, path_laplacian, rank_one_update

__all__ = [
    "QuantizerSpec",
    "RdotState",
    "SeparableTransform",
    "deadzone_quantize",
    "dtt_plus_transform",
    "entropy_bits",
    "tie_argmin",
    "learn_dtt_plus",
    "rate_proxy",
    "rd_costs",
    "rd_select",
    "rdot_design",
]

logger = logging.getLogger(__name__)

DEFAULT_DEADZONE_OFFSET = 1.0 / 6.0
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class QuantizerSpec:
    step: float
    deadzone_offset: float = DEFAULT_DEADZONE_OFFSET

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("quantizer step must be positive")
        if not 0 <= self.deadzone_offset <= 0.5:
            raise ValueError("deadzone offset must lie in [0, 0.5]")


def deadzone_quantize(coeffs, spec: QuantizerSpec):
    """``level = sign(c) floor(|c| / step + offset)``, ``recon = level * step``."""
    c = np.asarray(coeffs, dtype=float)
    levels = (np.sign(c) * np.floor(np.abs(c) / spec.step + spec.deadzone_offset)).astype(np.int64)
    return levels, levels * spec.step


def rate_proxy(levels, axis=None):
    """l1 norm of the quantized levels."""
    return np.abs(np.asarray(levels)).sum(axis=axis)


def entropy_bits(levels, per_position: bool = True) -> float:
    """Empirical zero-order entropy of ``levels`` in bits, summed over all symbols.

    ``levels`` is ``(num_blocks, ...)``; with ``per_position`` each coefficient
    position gets its own histogram.
    """
    lv = np.asarray(levels, dtype=np.int64)
    if lv.size == 0:
        return 0.0
    lv = lv.reshape(lv.shape[0], -1) if per_position else lv.reshape(-1, 1)
    total = 0.0
    for col in lv.T:
        _, counts = np.unique(col, return_counts=True)
        p = counts / counts.sum()
        total += float(-(counts * np.log2(p)).sum())
    return total


@dataclass(frozen=True, eq=False)
class SeparableTransform:
    """Analysis matrices for rows (``w x w``) and columns (``h x h``)."""

    name: str
    row_analysis: np.ndarray
    col_analysis: np.ndarray

    @classmethod
    def from_eigs(cls, name: str, u_r: EigenSystem, u_c: EigenSystem) -> "SeparableTransform":
        return cls(name, u_r.analysis, u_c.analysis)

    @property
    def shape(self) -> tuple[int, int]:
        return self.col_analysis.shape[0], self.row_analysis.shape[0]

    def forward(self, blocks) -> np.ndarray:
        return self.col_analysis @ np.asarray(blocks, dtype=float) @ self.row_analysis.T

    def inverse(self, coeffs) -> np.ndarray:
        return self.col_analysis.T @ np.asarray(coeffs, dtype=float) @ self.row_analysis


def dtt_plus_transform(phi: DttPlusParams, n_rows: int, n_cols: int | None = None, name: str = "dtt+",
                       base_r: GeneralizedLaplacian | None = None, base_c: GeneralizedLaplacian | None = None):
    n_cols = n_rows if n_cols is None else n_cols
    base_r = base_r if base_r is not None else path_laplacian(n_cols)
    base_c = base_c if base_c is not None else path_laplacian(n_rows)
    u_r = gft(rank_one_update(base_r, phi.alpha_r, phi.beta_r, phi.i_r))
    u_c = gft(rank_one_update(base_c, phi.alpha_c, phi.beta_c, phi.i_c))
    return SeparableTransform.from_eigs(name, u_r, u_c)


def _as_blocks(blocks) -> np.ndarray:
    arr = np.asarray(blocks, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    return arr


def rd_costs(blocks, transforms: Sequence[SeparableTransform], spec: QuantizerSpec, lagrangian: float,
             signaling_bits: float | None = None):
    """Per-block, per-transform RD costs.

    Returns ``(cost, distortion, rate)`` arrays of shape ``(m, len(transforms))``.
    ``signaling_bits`` defaults to ``log2(len(transforms))``.
    """
    x = _as_blocks(blocks)
    if not transforms:
        raise ValueError("need at least one transform")
    if signaling_bits is None:
        signaling_bits = math.log2(len(transforms))
    m = x.shape[0]
    dist = np.empty((m, len(transforms)))
    rate = np.empty((m, len(transforms)))
    for t, tr in enumerate(transforms):
        levels, recon = deadzone_quantize(tr.forward(x), spec)
        err = x - tr.inverse(recon)
        dist[:, t] = np.einsum("mij,mij->m", err, err)
        rate[:, t] = rate_proxy(levels, axis=(1, 2)) + signaling_bits
    return dist + lagrangian * rate, dist, rate


def tie_argmin(cost, rtol: float = TIE_RTOL, keep=None) -> np.ndarray:
    """Row-wise argmin treating costs within roundoff of the minimum as ties.

    Ties go to the lowest index, or to ``keep[row]`` when that entry is itself
    within the tie band (used to keep a reassignment from moving by noise).
    """
    c = np.atleast_2d(np.asarray(cost, dtype=float))
    lo = c.min(axis=1, keepdims=True)
    band = c <= lo + rtol * np.maximum(np.abs(lo), 1.0)
    idx = np.argmax(band, axis=1)
    if keep is not None:
        keep = np.asarray(keep)
        stay = band[np.arange(c.shape[0]), keep]
        idx = np.where(stay, keep, idx)
    return idx


def rd_select(block, transforms: Sequence[SeparableTransform], spec: QuantizerSpec, lagrangian: float):
    """Index of the RD-optimal transform for one block (lowest index on ties) and its cost."""
    cost, _, _ = rd_costs(block, transforms, spec, lagrangian)
    idx = int(tie_argmin(cost)[0])
    return idx, float(cost[0, idx])


def learn_dtt_plus(blocks, previous: DttPlusParams | None = None, ridge: float | None = None):
    """Learner for :func:`rdot_design`: graph learning on the cluster's blocks."""
    arr = _as_blocks(blocks)
    problem = LearningProblem.from_blocks(arr, ridge=ridge)
    sol = solve(problem, init=previous)
    h, w = arr.shape[1:]
    return dtt_plus_transform(sol.params, h, w), sol.params


@dataclass(eq=False)
class RdotState:
    fixed_transforms: list
    learned_transforms: list
    learned_params: list
    assignments: np.ndarray
    lagrangian: float
    step: float
    cost_trace: list = field(default_factory=list)
    pre_assign_costs: list = field(default_factory=list)
    converged: bool = False

    @property
    def transforms(self) -> list:
        return list(self.fixed_transforms) + list(self.learned_transforms)

    @property
    def iterations(self) -> int:
        return len(self.cost_trace)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == j)

    def to_dict(self) -> dict:
        return {
            "format": "rdot-state",
            "version": 1,
            "fixed": [t.name for t in self.fixed_transforms],
            "learned": [t.name for t in self.learned_transforms],
            "learned_params": [p.to_dict() if isinstance(p, DttPlusParams) else None for p in self.learned_params],
            "assignments": [int(a) for a in self.assignments],
            "lagrangian": float(self.lagrangian),
            "step": float(self.step),
            "cost_trace": [float(c) for c in self.cost_trace],
            "pre_assign_costs": [float(c) for c in self.pre_assign_costs],
            "converged": bool(self.converged),
        }


def _split_hyperplane(x: np.ndarray, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``idx`` on the positive side of a random hyperplane through their mean."""
    v = x[idx].reshape(idx.size, -1)
    normal = rng.standard_normal(v.shape[1])
    side = (v - v.mean(axis=0)) @ normal > 0
    if not side.any() or side.all():
        side = np.arange(idx.size) < idx.size // 2
    return idx[side]


def rdot_design(blocks, n_learned: int, fixed: Sequence[SeparableTransform], lagrangian: float,
                spec: QuantizerSpec, tol: float = 0.01, seed: int = 0, max_iter: int = 20,
                learner: Callable | None = None, min_cluster: int | None = None) -> RdotState:
    """Lloyd alternation between per-cluster learning and RD reassignment.

    Clusters start from a seeded random partition over the learned slots.
    A relearned transform replaces the previous one only if the total RD
    cost after reassignment does not rise, which makes the cost trace
    non-increasing.  A learned cluster with fewer than ``min_cluster``
    examples is re-seeded for learning from a random-hyperplane split of the
    largest cluster.  Iteration stops when the relative decrease falls below
    ``tol``; the first iteration is measured against the cost of the initial
    partition.
    """
    x = _as_blocks(blocks)
    m = x.shape[0]
    if m == 0:
        raise ValueError("no blocks")
    if n_learned < 1:
        raise ValueError("n_learned must be >= 1")
    learner = learner if learner is not None else learn_dtt_plus
    min_cluster = min_cluster if min_cluster is not None else 2 * max(x.shape[1:])
    rng = np.random.default_rng(seed)
    n_fixed = len(fixed)
    n_total = n_fixed + n_learned
    sig = math.log2(n_total)
    rows = np.arange(m)

    assignments = n_fixed + rng.permutation(np.arange(m) % n_learned)
    learned: list = [None] * n_learned
    params: list = [None] * n_learned
    state = RdotState(list(fixed), learned, params, assignments, lagrangian, spec.step)
    cost = np.full((m, n_total), np.inf)
    if n_fixed:
        cost[:, :n_fixed] = rd_costs(x, fixed, spec, lagrangian, sig)[0]
    prev_cost = None

    def total(c, keep):
        return float(c[rows, tie_argmin(c, keep=keep)].sum())

    for it in range(max_iter):
        counts = np.bincount(assignments, minlength=n_total)
        learn_sets = [np.flatnonzero(assignments == n_fixed + j) for j in range(n_learned)]
        for j in range(n_learned):
            if learn_sets[j].size < min_cluster:
                all_sizes = counts[:n_fixed].tolist() + [s.size for s in learn_sets]
                donor = int(np.argmax(all_sizes))
                donor_idx = np.flatnonzero(assignments == donor) if donor < n_fixed else learn_sets[donor - n_fixed]
                moved = _split_hyperplane(x, donor_idx, rng)
                learn_sets[j] = np.union1d(learn_sets[j], moved)
                if donor >= n_fixed:
                    learn_sets[donor - n_fixed] = np.setdiff1d(learn_sets[donor - n_fixed], moved)
                logger.debug("iteration %d: re-seeded learned cluster %d with %d examples", it, j, moved.size)

        first = prev_cost is None
        for j in range(n_learned):
            try:
                cand, cand_params = learner(x[learn_sets[j]], params[j])
            except (LearningError, np.linalg.LinAlgError, ValueError) as exc:
                logger.warning("learning failed for cluster %d: %s", j, exc)
                continue
            col = rd_costs(x, [cand], spec, lagrangian, sig)[0][:, 0]
            if learned[j] is not None and not first:
                trial = cost.copy()
                trial[:, n_fixed + j] = col
                if total(trial, assignments) > total(cost, assignments):
                    continue
            learned[j] = SeparableTransform(f"learned{j}", cand.row_analysis, cand.col_analysis)
            params[j] = cand_params
            cost[:, n_fixed + j] = col

        usable = [j for j in range(n_learned) if learned[j] is not None]
        if not usable:
            raise LearningError("no learned transform could be built")
        for j in range(n_learned):
            if learned[j] is None:
                # unlearnable slot: duplicate a usable transform so it never wins a tie
                learned[j] = learned[usable[0]]
                cost[:, n_fixed + j] = cost[:, n_fixed + usable[0]]
        pre = float(cost[rows, assignments].sum())
        assignments = tie_argmin(cost, keep=assignments)
        post = float(cost[rows, assignments].sum())
        state.pre_assign_costs.append(pre)
        state.cost_trace.append(post)
        state.assignments = assignments
        reference = pre if prev_cost is None else prev_cost
        decrease = (reference - post) / reference if reference > 0 else 0.0
        prev_cost = post
        if decrease < tol:
            state.converged = True
            break
    return state
