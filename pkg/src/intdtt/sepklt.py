"""Separable KLT baseline: row and column covariance eigenvectors, quantized to 8 bits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base_transforms import EigenSystem, IntegerKernel, fix_signs, quantize_basis
from .rdot import SeparableTransform

__all__ = ["SepKlt", "sep_klt_train", "sep_klt_learner"]


@dataclass(frozen=True, eq=False)
class SepKlt:
    row: EigenSystem  # eigenvalues are variances, in decreasing order
    col: EigenSystem
    row_int: IntegerKernel
    col_int: IntegerKernel

    def transform(self, name: str = "sep-klt", quantized: bool = True) -> SeparableTransform:
        if quantized:
            return SeparableTransform(name, self.row_int.to_float(), self.col_int.to_float())
        return SeparableTransform(name, self.row.analysis, self.col.analysis)


def _klt(cov: np.ndarray) -> EigenSystem:
    evals, evecs = np.linalg.eigh((cov + cov.T) / 2)
    order = np.argsort(-evals, kind="stable")
    return EigenSystem(fix_signs(evecs[:, order]), evals[order])


def sep_klt_train(blocks, bit_depth: int = 8, center: bool = True) -> SepKlt:
    x = np.asarray(blocks, dtype=float)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError("need a non-empty stack of 2-D blocks")
    if center:
        x = x - x.mean(axis=0)
    m = x.shape[0]
    row_cov = np.einsum("mri,mrj->ij", x, x) / m  # along each row
    col_cov = np.einsum("mic,mjc->ij", x, x) / m  # along each column
    row, col = _klt(row_cov), _klt(col_cov)
    return SepKlt(row, col, quantize_basis(row, bit_depth), quantize_basis(col, bit_depth))


def sep_klt_learner(blocks, previous=None):
    """Learner for :func:`intdtt.rdot.rdot_design`."""
    return sep_klt_train(blocks).transform(), None
