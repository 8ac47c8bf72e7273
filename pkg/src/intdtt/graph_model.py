"""Generalized graph Laplacians for path-based DTT graphs.

A generalized Laplacian is ``L = D - W + V``: degree matrix minus the weighted
adjacency plus a diagonal of self-loop weights.  The graphs used here are
small (block sizes up to 32), so everything is stored densely.

Node indices in the public API are 1-based, matching the ``e_i`` convention
used when talking about self-loop positions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BaseGraphKind",
    "DttPlusParams",
    "GeneralizedLaplacian",
    "InvalidGraphError",
    "base_laplacian",
    "cartesian_product",
    "path_laplacian",
    "path_with_self_loop_laplacian",
    "rank_one_update",
]

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


class InvalidGraphError(ValueError):
    """Raised for malformed Laplacians or invalid update parameters."""


class BaseGraphKind(enum.Enum):
    """Base DTT graph: path (DCT-2) or path with a unit self-loop at node 1 (DST-7)."""

    PATH = "dct2"
    PATH_WITH_UNIT_SELF_LOOP = "dst7"

    @property
    def self_loop(self) -> float:
        return 0.0 if self is BaseGraphKind.PATH else 1.0


@dataclass(frozen=True, eq=False)
class GeneralizedLaplacian:
    """Symmetric, PSD matrix with non-positive off-diagonals and non-negative row sums."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidGraphError(f"Laplacian must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(m).max()):
            raise InvalidGraphError("Laplacian is not symmetric")
        off = m - np.diag(np.diag(m))
        if np.any(off > SYMMETRY_TOL):
            raise InvalidGraphError("Laplacian has positive off-diagonal entries")
        scale = max(1.0, np.abs(m).max())
        if np.any(m.sum(axis=1) < -SYMMETRY_TOL * scale * m.shape[0]):
            raise InvalidGraphError("Laplacian has negative self-loop mass")
        m = (m + m.T) / 2
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def self_loops(self) -> np.ndarray:
        """Diagonal ``V``: the row sums of ``L``."""
        return self.matrix.sum(axis=1)

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        eigs = np.linalg.eigvalsh(self.matrix)
        return bool(eigs[0] >= -tol * max(1.0, abs(eigs[-1])))


@dataclass(frozen=True)
class DttPlusParams:
    """Separable DTT+ parameters in model space.

    ``alpha_*`` are self-loop weights and ``beta_*`` edge scales for the row
    (``_r``) and column (``_c``) graphs; ``i_r``/``i_c`` are the 1-based
    self-loop positions.  The row graph acts along each row of a block
    (horizontal direction), the column graph along each column.
    """

    alpha_r: float
    beta_r: float
    i_r: int
    alpha_c: float
    beta_c: float
    i_c: int

    def __post_init__(self):
        for name in ("alpha_r", "alpha_c"):
            if not getattr(self, name) >= 0:
                raise InvalidGraphError(f"{name} must be non-negative")
        for name in ("beta_r", "beta_c"):
            if not getattr(self, name) > 0:
                raise InvalidGraphError(f"{name} must be positive")
        for name in ("i_r", "i_c"):
            if int(getattr(self, name)) < 1:
                raise InvalidGraphError(f"{name} must be a 1-based index")

    def check_size(self, n: int) -> None:
        if self.i_r > n or self.i_c > n:
            raise InvalidGraphError(f"self-loop index out of range for n={n}")

    @property
    def row_loop_weight(self) -> float:
        """Self-loop weight relative to unit edge weight, ``alpha_r / beta_r``."""
        return self.alpha_r / self.beta_r

    @property
    def col_loop_weight(self) -> float:
        return self.alpha_c / self.beta_c

    def to_dict(self) -> dict:
        return {
            "alpha_r": float(self.alpha_r),
            "beta_r": float(self.beta_r),
            "i_r": int(self.i_r),
            "alpha_c": float(self.alpha_c),
            "beta_c": float(self.beta_c),
            "i_c": int(self.i_c),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DttPlusParams":
        return cls(
            alpha_r=float(d["alpha_r"]),
            beta_r=float(d["beta_r"]),
            i_r=int(d["i_r"]),
            alpha_c=float(d["alpha_c"]),
            beta_c=float(d["beta_c"]),
            i_c=int(d["i_c"]),
        )


def _check_size(n: int) -> None:
    if int(n) != n or n < 2:
        raise InvalidGraphError(f"path graphs need n >= 2, got {n}")


def path_laplacian(n: int) -> GeneralizedLaplacian:
    """Unweighted path graph on ``n`` nodes; its GFT is the DCT-2."""
    _check_size(n)
    m = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    m[0, 0] = m[-1, -1] = 1.0
    return GeneralizedLaplacian(m)


def path_with_self_loop_laplacian(n: int) -> GeneralizedLaplacian:
    """Path graph with a unit self-loop on node 1; its GFT is the DST-7."""
    m = np.array(path_laplacian(n).matrix)
    m[0, 0] += 1.0
    return GeneralizedLaplacian(m)


def base_laplacian(kind: BaseGraphKind, n: int) -> GeneralizedLaplacian:
    if kind is BaseGraphKind.PATH:
        return path_laplacian(n)
    return path_with_self_loop_laplacian(n)


def rank_one_update(base: GeneralizedLaplacian, alpha: float, beta: float, i: int) -> GeneralizedLaplacian:
    """Return ``beta * L + alpha * e_i e_i^T`` (self-loop of weight ``alpha`` at node ``i``)."""
    if not alpha >= 0:
        raise InvalidGraphError(f"alpha must be non-negative, got {alpha}")
    if not beta > 0:
        raise InvalidGraphError(f"beta must be positive, got {beta}")
    if not 1 <= i <= base.n:
        raise InvalidGraphError(f"node index {i} out of range [1, {base.n}]")
    m = beta * base.matrix
    m[i - 1, i - 1] += alpha
    return GeneralizedLaplacian(m)


def cartesian_product(l_r: GeneralizedLaplacian, l_c: GeneralizedLaplacian) -> GeneralizedLaplacian:
    """Kronecker sum ``L_r (x) I + I (x) L_c``.

    With column-major block vectorization the row graph acts on the outer
    (column-position) index and the column graph on the inner (row-position)
    index, so the eigenvectors are ``U_r (x) U_c``.
    """
    eye_r = np.eye(l_r.n)
    eye_c = np.eye(l_c.n)
    return GeneralizedLaplacian(np.kron(l_r.matrix, eye_c) + np.kron(eye_r, l_c.matrix))
