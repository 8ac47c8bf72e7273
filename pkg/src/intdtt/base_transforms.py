"""Orthonormal GFT bases for generalized Laplacians.

``gft`` is a plain symmetric eigendecomposition with a fixed output
convention: eigenvalues ascending, and each eigenvector signed so its first
entry with magnitude above ``1e-12`` is positive.  The closed-form DCT-2 and
DST-7 bases follow the same convention, so they compare entry-for-entry with
the solver output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixedpoint import as_int_input, check_acc, rshift_round, signed_range
from .graph_model import BaseGraphKind, GeneralizedLaplacian, InvalidGraphError, base_laplacian

__all__ = [
    "EigenSystem",
    "IntegerKernel",
    "NumericalError",
    "apply_separable",
    "base_eigensystem",
    "closed_form_dct2",
    "closed_form_dct8",
    "closed_form_dst7",
    "fix_signs",
    "gft",
    "quantize_basis",
]

SIGN_TOL = 1e-12


class NumericalError(ArithmeticError):
    """Eigensolver or other numerical routine failed."""


def fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip columns so that the first significant entry of each is positive."""
    basis = np.array(basis, dtype=float)
    for k in range(basis.shape[1]):
        col = basis[:, k]
        idx = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if idx.size and col[idx[0]] < 0:
            basis[:, k] = -col
    return basis


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Columns of ``basis`` are eigenvectors; ``eigenvalues`` ascending."""

    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def analysis(self) -> np.ndarray:
        """Forward transform matrix ``U^T`` (rows are basis functions)."""
        return self.basis.T


def gft(lap: GeneralizedLaplacian) -> EigenSystem:
    """Graph Fourier transform of ``lap``."""
    try:
        eigs, vecs = np.linalg.eigh(lap.matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed for n={lap.n}: {exc}") from exc
    if not np.all(np.isfinite(eigs)):
        raise NumericalError(f"non-finite eigenvalues for n={lap.n}")
    order = np.argsort(eigs, kind="stable")
    return EigenSystem(fix_signs(vecs[:, order]), eigs[order])


def closed_form_dct2(n: int) -> EigenSystem:
    if n < 2:
        raise InvalidGraphError(f"n must be >= 2, got {n}")
    j = np.arange(n)
    k = np.arange(n)
    basis = np.cos(np.pi * np.outer(j + 0.5, k) / n) * np.sqrt(2.0 / n)
    basis[:, 0] = 1.0 / np.sqrt(n)
    return EigenSystem(fix_signs(basis), 2.0 - 2.0 * np.cos(np.pi * k / n))


def closed_form_dst7(n: int) -> EigenSystem:
    if n < 2:
        raise InvalidGraphError(f"n must be >= 2, got {n}")
    j = np.arange(n)
    k = np.arange(n)
    basis = np.sin(np.pi * np.outer(j + 1, 2 * k + 1) / (2 * n + 1)) * (2.0 / np.sqrt(2 * n + 1))
    return EigenSystem(fix_signs(basis), 2.0 - 2.0 * np.cos(np.pi * (2 * k + 1) / (2 * n + 1)))


def closed_form_dct8(n: int) -> EigenSystem:
    """DST-7 flipped in space: the GFT of a path with a unit self-loop on node ``n``.

    Matches the codec DCT-8 up to a sign per basis vector.
    """
    dst = closed_form_dst7(n)
    return EigenSystem(fix_signs(dst.basis[::-1]), dst.eigenvalues)


def base_eigensystem(kind: BaseGraphKind, n: int) -> EigenSystem:
    if kind is BaseGraphKind.PATH:
        return closed_form_dct2(n)
    return closed_form_dst7(n)


def apply_separable(block, u_r: EigenSystem, u_c: EigenSystem) -> np.ndarray:
    """Coefficients ``U_c^T X U_r``: columns by the column basis, rows by the row basis."""
    x = np.asarray(block, dtype=float)
    if x.shape != (u_c.n, u_r.n):
        raise ValueError(f"block shape {x.shape} does not match bases ({u_c.n}, {u_r.n})")
    return u_c.basis.T @ x @ u_r.basis


@dataclass(frozen=True, eq=False)
class IntegerKernel:
    """Dense integer transform: float kernel ~= ``matrix / 2**shift``.

    Also used as the flagged fallback when a transition kernel cannot be split.
    """

    matrix: np.ndarray
    shift: int
    bit_depth: int = 8
    fallback: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        lo, hi = signed_range(self.bit_depth)
        if m.size and (m.min() < lo or m.max() > hi):
            raise ValueError(f"kernel entries exceed signed {self.bit_depth}-bit range")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def to_float(self) -> np.ndarray:
        return self.matrix / float(1 << self.shift)

    def forward(self, x) -> np.ndarray:
        v = as_int_input(x)
        acc = check_acc(self.matrix @ v, "dense forward")
        return rshift_round(acc, self.shift)

    def inverse(self, y) -> np.ndarray:
        v = as_int_input(y)
        acc = check_acc(self.matrix.T @ v, "dense inverse")
        return rshift_round(acc, self.shift)

    def orthogonality(self) -> float:
        t = self.to_float()
        return float(np.abs(t.T @ t - np.eye(self.n)).max())


def quantize_basis(eig: EigenSystem, bit_depth: int = 8, shift: int | None = None) -> IntegerKernel:
    """Round ``U^T * 2**shift`` to integers, clipped to ``bit_depth`` signed bits."""
    if shift is None:
        shift = bit_depth - 1
    lo, hi = signed_range(bit_depth)
    mat = np.clip(np.round(eig.analysis * (1 << shift)), lo, hi).astype(np.int64)
    return IntegerKernel(mat, shift, bit_depth)


def base_gft(kind: BaseGraphKind, n: int) -> EigenSystem:
    """Solver-based basis of the base graph (used to cross-check the closed forms)."""
    return gft(base_laplacian(kind, n))
