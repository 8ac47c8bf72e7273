"""Grouping per-mode DTT+ parameters with k-means, and kernel memory accounting.

Memory layout assumed for stored kernels (bits):

* sep-KLT, per 2-D kernel: ``2 * n**2 * bit_depth`` (one dense row and one
  dense column matrix).
* INT-DTT+, per axis: ``n * bit_depth_d`` for the diagonal, plus
  ``nnz(F) * (bit_depth_f + 2 * ceil(log2 n))`` for the sparse factor stored
  as (row, col, value) triples, plus 1 header bit selecting the base DTT.
* dense fallback axis: ``n**2 * bit_depth``.

A 2-D INT-DTT+ kernel is the sum of its row and column axes.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base_transforms import IntegerKernel
from .graph_model import DttPlusParams
from .integer_kernel import AxisKernel, IntegerTransitionKernel

__all__ = [
    "ClusterResult",
    "angle_bin_groups",
    "axis_bits",
    "cluster_weights",
    "memory_bits",
    "sep_klt_bits",
    "write_groups_csv",
]

HEADER_BITS = 1
FEATURES = ("alpha_r", "beta_r", "alpha_c", "beta_c")


@dataclass(frozen=True, eq=False)
class ClusterResult:
    assignment: np.ndarray  # cluster index per mode
    centroids: list  # DttPlusParams per cluster
    objective_trace: list  # within-cluster sum of squares (standardized), per Lloyd iteration

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def _features(params_list) -> np.ndarray:
    return np.array([[getattr(p, f) for f in FEATURES] for p in params_list], dtype=float)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.shape[0])]]
    for _ in range(1, k):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a center
            centers.append(x[rng.integers(x.shape[0])])
            continue
        centers.append(x[rng.choice(x.shape[0], p=d2 / total)])
    return np.array(centers)


def _assign(x, centers):
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(x.shape[0]), labels].sum())


def cluster_weights(params_list, k: int, seed: int = 0, max_iter: int = 100) -> ClusterResult:
    """k-means over z-scored ``(alpha_r, beta_r, alpha_c, beta_c)``.

    Seeded k-means++ initialization, then Lloyd iterations until the labels
    stop changing.  An emptied cluster keeps its previous center.  Centroids
    are mapped back to model space; the self-loop positions of a centroid are
    the most frequent positions among its members (lowest on ties).
    """
    params_list = list(params_list)
    m = len(params_list)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > m:
        raise ValueError(f"cannot form {k} clusters from {m} modes")
    raw = _features(params_list)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std[std == 0] = 1.0
    x = (raw - mean) / std
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    labels, obj = _assign(x, centers)
    trace = [obj]
    for _ in range(max_iter):
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = x[members].mean(axis=0)
        new_labels, new_obj = _assign(x, new_centers)
        centers = new_centers
        trace.append(new_obj)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    centroids = []
    for j in range(k):
        members = [p for p, lab in zip(params_list, labels) if lab == j]
        c = centers[j] * std + mean
        tiny = np.finfo(float).tiny
        if members:
            i_r = _modal([p.i_r for p in members])
            i_c = _modal([p.i_c for p in members])
        else:
            i_r = i_c = 1
        centroids.append(DttPlusParams(max(c[0], 0.0), max(c[1], tiny), i_r, max(c[2], 0.0), max(c[3], tiny), i_c))
    return ClusterResult(labels, centroids, trace)


def _modal(values) -> int:
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def angle_bin_groups(n_modes: int, k: int) -> np.ndarray:
    """Baseline grouping: ``k`` contiguous bins over the ordered mode list."""
    if not 1 <= k <= n_modes:
        raise ValueError(f"need 1 <= k <= {n_modes}")
    return (np.arange(n_modes) * k) // n_modes


def sep_klt_bits(n: int, bit_depth: int = 8) -> int:
    return 2 * n * n * bit_depth


def axis_bits(kernel) -> int:
    """Storage for one axis kernel (see the module docstring)."""
    if isinstance(kernel, AxisKernel):
        kernel = kernel.int_kernel
    if isinstance(kernel, IntegerTransitionKernel):
        index_bits = 2 * math.ceil(math.log2(kernel.n)) if kernel.n > 1 else 0
        return kernel.n * kernel.bit_depth_d + kernel.nnz * (kernel.bit_depth_f + index_bits) + HEADER_BITS
    if isinstance(kernel, IntegerKernel):
        return kernel.n * kernel.n * kernel.bit_depth
    raise TypeError(f"unsupported kernel type {type(kernel).__name__}")


def memory_bits(kernels) -> int:
    """Total bits for a kernel set.

    Items may be a sep-KLT (anything with ``row_int``/``col_int``), a
    ``(row, col)`` pair of axis kernels, or a single axis kernel.
    """
    total = 0
    for item in kernels:
        if hasattr(item, "row_int") and hasattr(item, "col_int"):
            for ax in (item.row_int, item.col_int):
                total += ax.n * ax.n * ax.bit_depth
        elif isinstance(item, tuple):
            total += sum(axis_bits(ax) for ax in item)
        else:
            total += axis_bits(item)
    return int(total)


def write_groups_csv(path, mode_names, assignment) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mode", "group"])
        for name, g in zip(mode_names, assignment):
            writer.writerow([name, int(g)])
