"""Transition kernels between a base DTT and its rank-one updated DTT+.

For ``L = U diag(lam) U^T`` and ``L~ = beta L + alpha e_i e_i^T`` with GFT
``U~``, the DTT+ analysis matrix factors as ``U~^T = K U^T`` where

    K_kj = a_k z_j / (lam~_k - beta lam_j),    z = U^T e_i,

i.e. ``K = diag(a) C diag(z)`` with ``C`` a Cauchy matrix and ``a`` the row
normalizer.  Row ``k`` of ``K`` is indexed by the updated eigenvalue, column
``j`` by the base eigenvalue.

Updated eigenvalues come from a full symmetric eigendecomposition rather than
a secular-equation solver.  Base eigenpairs with ``z_j == 0`` are untouched
by the update and are deflated to identity rows; rows whose Cauchy
denominators collapse are taken from the direct eigendecomposition and the
kernel is flagged as not Cauchy-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base_transforms import SIGN_TOL, EigenSystem, gft
from .graph_model import GeneralizedLaplacian, InvalidGraphError

__all__ = [
    "TransitionKernel",
    "apply_transition",
    "band_means",
    "check_interleaving",
    "transition_kernel",
    "updated_laplacian",
]

DEFLATION_TOL = 1e-12
GAP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Orthonormal kernel mapping base-DTT coefficients to DTT+ coefficients."""

    k_matrix: np.ndarray
    a: np.ndarray
    z: np.ndarray
    base_eigs: np.ndarray  # beta * lam
    updated_eigs: np.ndarray
    beta: float
    alpha: float = 0.0
    i: int = 1
    deflated: np.ndarray = field(default=None)
    direct_rows: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.k_matrix.shape[0]

    @property
    def cauchy_exact(self) -> bool:
        return self.direct_rows is None or not np.any(self.direct_rows)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.k_matrix).copy()

    def orthogonality_error(self) -> float:
        k = self.k_matrix
        return float(np.abs(k.T @ k - np.eye(self.n)).max())

    def cauchy_reconstruction(self) -> np.ndarray:
        """Rebuild ``diag(a) C diag(z)`` from the stored vectors (Cauchy rows only)."""
        gaps = self.updated_eigs[:, None] - self.base_eigs[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            rec = self.a[:, None] * self.z[None, :] / gaps
        rec[np.abs(gaps) <= SIGN_TOL] = 0.0
        return rec

    def to_dict(self) -> dict:
        return {
            "format": "dtt-plus-transition-kernel",
            "version": 1,
            "n": self.n,
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "i": int(self.i),
            "k_matrix": self.k_matrix.tolist(),
            "a": self.a.tolist(),
            "z": self.z.tolist(),
            "base_eigs": self.base_eigs.tolist(),
            "updated_eigs": self.updated_eigs.tolist(),
            "deflated": [bool(v) for v in self.deflated],
            "direct_rows": [bool(v) for v in self.direct_rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionKernel":
        if d.get("format") != "dtt-plus-transition-kernel" or d.get("version") != 1:
            raise ValueError("unsupported transition kernel record")
        return cls(
            k_matrix=np.array(d["k_matrix"], dtype=float),
            a=np.array(d["a"], dtype=float),
            z=np.array(d["z"], dtype=float),
            base_eigs=np.array(d["base_eigs"], dtype=float),
            updated_eigs=np.array(d["updated_eigs"], dtype=float),
            beta=float(d["beta"]),
            alpha=float(d["alpha"]),
            i=int(d["i"]),
            deflated=np.array(d["deflated"], dtype=bool),
            direct_rows=np.array(d["direct_rows"], dtype=bool),
        )


def updated_laplacian(base: GeneralizedLaplacian, alpha: float, beta: float, i: int) -> GeneralizedLaplacian:
    """``beta L + alpha e_i e_i^T``; ``alpha`` may be negative if the result stays a valid Laplacian."""
    if not beta > 0:
        raise InvalidGraphError(f"beta must be positive, got {beta}")
    if not 1 <= i <= base.n:
        raise InvalidGraphError(f"node index {i} out of range [1, {base.n}]")
    m = beta * base.matrix
    m[i - 1, i - 1] += alpha
    return GeneralizedLaplacian(m)


def identity_kernel(n: int, beta: float = 1.0, base_eigs=None) -> TransitionKernel:
    lam = np.zeros(n) if base_eigs is None else beta * np.asarray(base_eigs, dtype=float)
    return TransitionKernel(
        k_matrix=np.eye(n), a=np.zeros(n), z=np.zeros(n), base_eigs=lam, updated_eigs=lam.copy(),
        beta=beta, alpha=0.0, i=1, deflated=np.ones(n, dtype=bool), direct_rows=np.zeros(n, dtype=bool),
    )


def transition_kernel(base: GeneralizedLaplacian, base_eig: EigenSystem, alpha: float, beta: float, i: int) -> TransitionKernel:
    """Cauchy-structured kernel ``K`` with ``gft(beta L + alpha e_i e_i^T).basis.T == K @ U.T``.

    Negative ``alpha`` (a self-loop downdate) is accepted when the updated
    matrix is still a generalized Laplacian; the interleaving then runs the
    other way.
    """
    if base_eig.n != base.n:
        raise ValueError("base eigensystem does not match the Laplacian size")
    upd = updated_laplacian(base, alpha, beta, i)
    n = base.n
    u = base_eig.basis
    blam = beta * np.asarray(base_eig.eigenvalues, dtype=float)
    lt = np.linalg.eigvalsh(upd.matrix)
    z = u[i - 1, :].copy()

    defl_cols = (np.abs(z) <= DEFLATION_TOL) | (alpha == 0)
    k_mat = np.zeros((n, n))
    a = np.zeros(n)
    row_deflated = np.zeros(n, dtype=bool)
    taken = np.zeros(n, dtype=bool)
    for j in np.flatnonzero(defl_cols):
        dist = np.where(taken, np.inf, np.abs(lt - blam[j]))
        k = int(np.argmin(dist))
        taken[k] = True
        row_deflated[k] = True
        k_mat[k, j] = 1.0

    live = ~defl_cols
    direct_rows = np.zeros(n, dtype=bool)
    for k in np.flatnonzero(~row_deflated):
        gaps = lt[k] - blam[live]
        if np.min(np.abs(gaps)) < GAP_TOL:
            direct_rows[k] = True
            continue
        row = z[live] / gaps
        # row k of U~^T is row @ U^T; sign taken from the synthesized eigenvector
        vec = u[:, live] @ row
        first = np.flatnonzero(np.abs(vec) > SIGN_TOL * np.linalg.norm(vec))
        sign = -1.0 if first.size and vec[first[0]] < 0 else 1.0
        a[k] = sign / np.linalg.norm(row)
        k_mat[k, live] = a[k] * row

    if np.any(direct_rows):
        direct = gft(upd).basis.T @ u
        k_mat[direct_rows] = direct[direct_rows]
        a[direct_rows] = 0.0

    return TransitionKernel(
        k_matrix=k_mat, a=a, z=z, base_eigs=blam, updated_eigs=lt, beta=float(beta),
        alpha=float(alpha), i=int(i), deflated=row_deflated, direct_rows=direct_rows,
    )


def check_interleaving(base_eigs, updated_eigs, beta: float, tol: float = 1e-10, downdate: bool = False):
    """Check ``beta*lam_1 <= lam~_1 <= beta*lam_2 <= ... <= beta*lam_n <= lam~_n``.

    With ``downdate=True`` the chain is ``lam~_1 <= beta*lam_1 <= lam~_2 <= ...``.
    Returns ``(holds, max_violation)``.
    """
    blam = beta * np.asarray(base_eigs, dtype=float)
    lt = np.asarray(updated_eigs, dtype=float)
    if blam.shape != lt.shape:
        raise ValueError("spectra must have the same length")
    if downdate:
        lower, upper = lt, blam
    else:
        lower, upper = blam, lt
    viol = np.maximum(lower - upper, 0.0)
    viol = np.concatenate([viol, np.maximum(upper[:-1] - lower[1:], 0.0)])
    worst = float(viol.max(initial=0.0))
    return worst <= tol, worst


def apply_transition(coeffs, kernel: TransitionKernel) -> np.ndarray:
    y = np.asarray(coeffs, dtype=float)
    if y.shape[0] != kernel.n:
        raise ValueError(f"coefficient length {y.shape[0]} does not match kernel size {kernel.n}")
    return kernel.k_matrix @ y


def band_means(k_matrix: np.ndarray) -> np.ndarray:
    """Mean ``|K_ij|`` over each band ``|i - j| = b``, for ``b = 0 .. n-1``."""
    k_abs = np.abs(np.asarray(k_matrix))
    n = k_abs.shape[0]
    return np.array([np.concatenate([np.diag(k_abs, b), np.diag(k_abs, -b)]).mean() for b in range(n)])
