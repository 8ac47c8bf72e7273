"""INT-DTT+: integer approximations of DTT+ transition kernels.

A transition kernel is factored as ``K = (I + F) K_d`` with ``K_d`` its
diagonal and ``F = K_o K_d^{-1}``.  Both parts are quantized with
power-of-two precisions (``p_d`` for the diagonal, ``p_f`` for ``F``),
clipped to signed bit depths and then fine-tuned by +-1 moves.  The forward
transform applied to base-DTT coefficients ``y`` is

    z = (kd * y) >> s_d          q = z + (F_int @ z) >> s_f

where ``>>`` is :func:`intdtt.fixedpoint.rshift_round` (round half away
from zero).  The inverse applies the transposed factors in reverse order.

Accumulators are 32-bit signed.  With 16-bit inputs, an 8-bit diagonal and
3-bit ``F`` at ``n <= 32`` the worst cases are ``|kd * y| <= 2**22`` and
``|F_int @ z| <= 32 * 4 * 2**15 = 2**22``; the inverse accepts 18-bit
inputs, for which ``|kd * w| <= 128 * 33 * 2**18 < 2**31``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base_transforms import EigenSystem, IntegerKernel, base_eigensystem
from .fixedpoint import as_int_input, check_acc, log2_exact, rshift_round, signed_range
from .graph_model import BaseGraphKind, base_laplacian
from .progressive import TransitionKernel, transition_kernel

__all__ = [
    "IntegerTransitionKernel",
    "KernelQuality",
    "SplitError",
    "AxisKernel",
    "build_axis_kernel",
    "build_int_dtt_plus",
    "combined_quality",
    "count_ops",
    "fine_tune",
    "quality",
    "quantize",
    "select_base",
    "split",
]

SPLIT_TOL = 1e-6
FORWARD_INPUT_BITS = 16
INVERSE_INPUT_BITS = 18
DEFAULT_P_D = 128
DEFAULT_P_F = 4


class SplitError(ValueError):
    """The kernel has a (near) zero diagonal entry and cannot be factored."""


def _kmat(k) -> np.ndarray:
    return k.k_matrix if isinstance(k, TransitionKernel) else np.asarray(k, dtype=float)


def split(k) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(kd, F)`` with ``kd`` the diagonal of ``K`` and ``F = K_o diag(kd)^{-1}``."""
    kmat = _kmat(k)
    kd = np.diag(kmat).copy()
    if np.any(np.abs(kd) <= SPLIT_TOL):
        bad = np.flatnonzero(np.abs(kd) <= SPLIT_TOL) + 1
        raise SplitError(f"near-zero diagonal entries at rows {bad.tolist()}")
    ko = kmat - np.diag(kd)
    return kd, ko / kd[None, :]


@dataclass(frozen=True, eq=False)
class IntegerTransitionKernel:
    """Quantized ``(kd, F)`` pair; values are ``kd / 2**s_d`` and ``F / 2**s_f``.

    ``F`` is stored as coordinate lists (0-based row, col) sorted row-major,
    with no diagonal and no zero entries.
    """

    k_d_q: np.ndarray
    s_d: int
    f_rows: np.ndarray
    f_cols: np.ndarray
    f_vals: np.ndarray
    s_f: int
    base: BaseGraphKind = BaseGraphKind.PATH
    bit_depth_d: int = 8
    bit_depth_f: int = 3

    def __post_init__(self):
        kd = np.asarray(self.k_d_q, dtype=np.int64)
        rows = np.asarray(self.f_rows, dtype=np.int64)
        cols = np.asarray(self.f_cols, dtype=np.int64)
        vals = np.asarray(self.f_vals, dtype=np.int64)
        keep = vals != 0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        n = kd.shape[0]
        lo, hi = signed_range(self.bit_depth_d)
        if kd.size and (kd.min() < lo or kd.max() > hi):
            raise ValueError(f"diagonal exceeds signed {self.bit_depth_d}-bit range")
        lo, hi = signed_range(self.bit_depth_f)
        if vals.size and (vals.min() < lo or vals.max() > hi):
            raise ValueError(f"F entries exceed signed {self.bit_depth_f}-bit range")
        if np.any(rows == cols):
            raise ValueError("F must have a zero diagonal")
        if rows.size and (rows.max() >= n or cols.max() >= n or rows.min() < 0 or cols.min() < 0):
            raise ValueError("F coordinates out of range")
        if len({(int(r), int(c)) for r, c in zip(rows, cols)}) != rows.size:
            raise ValueError("duplicate F coordinates")
        object.__setattr__(self, "k_d_q", kd)
        object.__setattr__(self, "f_rows", rows)
        object.__setattr__(self, "f_cols", cols)
        object.__setattr__(self, "f_vals", vals)

    @classmethod
    def identity(cls, n: int, base: BaseGraphKind = BaseGraphKind.PATH, s_f: int = 2,
                 bit_depth_d: int = 8, bit_depth_f: int = 3) -> "IntegerTransitionKernel":
        """Exact identity: unit diagonal at shift 0, empty ``F``."""
        empty = np.zeros(0, dtype=np.int64)
        return cls(np.ones(n, dtype=np.int64), 0, empty, empty, empty, s_f, base, bit_depth_d, bit_depth_f)

    @property
    def n(self) -> int:
        return self.k_d_q.shape[0]

    @property
    def nnz(self) -> int:
        return int(self.f_vals.size)

    @property
    def p_d(self) -> int:
        return 1 << self.s_d

    @property
    def p_f(self) -> int:
        return 1 << self.s_f

    def f_dense(self) -> np.ndarray:
        f = np.zeros((self.n, self.n), dtype=np.int64)
        f[self.f_rows, self.f_cols] = self.f_vals
        return f

    def to_float(self) -> np.ndarray:
        """Reconstructed float kernel ``(I + F'_q) K'_dq``."""
        f = self.f_dense() / float(self.p_f)
        return (np.eye(self.n) + f) * (self.k_d_q / float(self.p_d))[None, :]

    def forward(self, y) -> np.ndarray:
        """Integer transition of base-DTT coefficients ``y`` (vector or ``(n, m)`` columns)."""
        v = as_int_input(y, FORWARD_INPUT_BITS)
        if v.shape[0] != self.n:
            raise ValueError(f"input length {v.shape[0]} does not match kernel size {self.n}")
        kd = self.k_d_q.reshape((-1,) + (1,) * (v.ndim - 1))
        z = rshift_round(check_acc(kd * v, "diagonal product"), self.s_d)
        acc = check_acc(self.f_dense() @ z, "F product")
        return check_acc(z + rshift_round(acc, self.s_f), "forward output")

    def inverse(self, q) -> np.ndarray:
        """Transposed path: ``K'_dq^T (I + F'_q^T) q`` in integer arithmetic."""
        v = as_int_input(q, INVERSE_INPUT_BITS)
        if v.shape[0] != self.n:
            raise ValueError(f"input length {v.shape[0]} does not match kernel size {self.n}")
        acc = check_acc(self.f_dense().T @ v, "F^T product")
        w = check_acc(v + rshift_round(acc, self.s_f), "inverse intermediate")
        kd = self.k_d_q.reshape((-1,) + (1,) * (v.ndim - 1))
        return rshift_round(check_acc(kd * w, "diagonal product"), self.s_d)

    def with_values(self, k_d_q=None, f_vals=None) -> "IntegerTransitionKernel":
        return IntegerTransitionKernel(
            self.k_d_q if k_d_q is None else k_d_q, self.s_d,
            self.f_rows, self.f_cols, self.f_vals if f_vals is None else f_vals,
            self.s_f, self.base, self.bit_depth_d, self.bit_depth_f,
        )

    def to_dict(self) -> dict:
        return {
            "format": "int-dtt-plus-kernel",
            "version": 1,
            "base": self.base.value,
            "n": self.n,
            "shift_d": int(self.s_d),
            "shift_f": int(self.s_f),
            "bit_depth_d": int(self.bit_depth_d),
            "bit_depth_f": int(self.bit_depth_f),
            "diag": [int(v) for v in self.k_d_q],
            "f": [[int(r), int(c), int(v)] for r, c, v in zip(self.f_rows, self.f_cols, self.f_vals)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntegerTransitionKernel":
        if d.get("format") != "int-dtt-plus-kernel" or d.get("version") != 1:
            raise ValueError("unsupported INT-DTT+ kernel record")
        f = np.array(d["f"], dtype=np.int64).reshape(-1, 3)
        kernel = cls(
            np.array(d["diag"], dtype=np.int64), int(d["shift_d"]), f[:, 0], f[:, 1], f[:, 2],
            int(d["shift_f"]), BaseGraphKind(d["base"]), int(d["bit_depth_d"]), int(d["bit_depth_f"]),
        )
        if kernel.n != int(d["n"]):
            raise ValueError("kernel size does not match its diagonal")
        return kernel


def quantize(kd, f, p_d: int = DEFAULT_P_D, p_f: int = DEFAULT_P_F, bit_depth_d: int = 8,
             bit_depth_f: int = 3, base: BaseGraphKind = BaseGraphKind.PATH) -> IntegerTransitionKernel:
    """Round ``p_d * kd`` and ``p_f * F`` to integers and clip to the bit depths.

    Entries of ``F`` that round to zero are dropped.
    """
    s_d, s_f = log2_exact(p_d), log2_exact(p_f)
    lo, hi = signed_range(bit_depth_d)
    kd_int = np.clip(np.round(np.asarray(kd, dtype=float) * p_d), lo, hi).astype(np.int64)
    f = np.asarray(f, dtype=float)
    lo, hi = signed_range(bit_depth_f)
    f_int = np.clip(np.round(f * p_f), lo, hi).astype(np.int64)
    np.fill_diagonal(f_int, 0)
    rows, cols = np.nonzero(f_int)
    return IntegerTransitionKernel(kd_int, s_d, rows, cols, f_int[rows, cols], s_f, base, bit_depth_d, bit_depth_f)


@dataclass(frozen=True)
class KernelQuality:
    """Max-abs metrics: ``|T^T T - I|``, ``|T - K|`` and ``| ||row|| - 1 |``."""

    orthogonality: float
    closeness: float
    norm_dev: float

    def combined(self, weights=(1.0, 1.0, 1.0)) -> float:
        return weights[0] * self.orthogonality + weights[1] * self.closeness + weights[2] * self.norm_dev


def _metrics(t: np.ndarray, ref: np.ndarray) -> KernelQuality:
    n = t.shape[0]
    return KernelQuality(
        float(np.abs(t.T @ t - np.eye(n)).max()),
        float(np.abs(t - ref).max()),
        float(np.abs(np.linalg.norm(t, axis=1) - 1.0).max()),
    )


def _reconstruct(kernel) -> np.ndarray:
    return kernel.to_float()


def quality(kernel, float_ref) -> KernelQuality:
    """Quality of an integer kernel (transition or dense fallback) against its float kernel."""
    return _metrics(_reconstruct(kernel), _kmat(float_ref))


def combined_quality(kernel, float_ref, weights=(1.0, 1.0, 1.0)) -> float:
    return quality(kernel, float_ref).combined(weights)


def fine_tune(kernel: IntegerTransitionKernel, float_ref, weights=(1.0, 1.0, 1.0),
              max_sweeps: int = 50, history: list | None = None) -> IntegerTransitionKernel:
    """Coordinate descent over the stored integers with moves in ``{-1, +1}``.

    A move is kept only if it strictly lowers the weighted metric sum; sweeps
    repeat until one makes no change.  ``history`` (if given) receives the
    objective before the first sweep and after each sweep.
    """
    ref = _kmat(float_ref)
    n = kernel.n
    kd = kernel.k_d_q.copy()
    fv = kernel.f_vals.copy()
    rows, cols = kernel.f_rows, kernel.f_cols
    lo_d, hi_d = signed_range(kernel.bit_depth_d)
    lo_f, hi_f = signed_range(kernel.bit_depth_f)
    p_d, p_f = float(kernel.p_d), float(kernel.p_f)

    def objective(kd_, fv_):
        f = np.zeros((n, n))
        f[rows, cols] = fv_ / p_f
        t = (np.eye(n) + f) * (kd_ / p_d)[None, :]
        return _metrics(t, ref).combined(weights)

    best = objective(kd, fv)
    if history is not None:
        history.append(best)
    for _ in range(max_sweeps):
        changed = False
        for vec, lo, hi in ((kd, lo_d, hi_d), (fv, lo_f, hi_f)):
            for idx in range(vec.size):
                orig = vec[idx]
                for delta in (-1, 1):
                    cand = orig + delta
                    if cand < lo or cand > hi:
                        continue
                    vec[idx] = cand
                    val = objective(kd, fv)
                    if val < best - 1e-15:
                        best, orig, changed = val, cand, True
                    vec[idx] = orig
        if history is not None:
            history.append(best)
        if not changed:
            break
    return kernel.with_values(kd, fv)


def select_base(learned_self_loop_weight: float) -> BaseGraphKind:
    """DCT-2 graph below a self-loop weight of 0.5, DST-7 graph otherwise."""
    if learned_self_loop_weight < 0:
        raise ValueError("self-loop weight must be non-negative")
    return BaseGraphKind.PATH if learned_self_loop_weight < 0.5 else BaseGraphKind.PATH_WITH_UNIT_SELF_LOOP


def _is_unit(value: int, shift: int) -> bool:
    mag = abs(int(value))
    return mag == 1 or mag == (1 << shift)


def count_ops(kernel) -> dict:
    """Arithmetic per transformed vector, grouping terms row-wise and skipping products by 1.

    For INT-DTT+ this excludes the base DTT.  Zero entries cost nothing.
    """
    if isinstance(kernel, IntegerTransitionKernel):
        diag_mults = sum(not _is_unit(v, kernel.s_d) for v in kernel.k_d_q if v != 0)
        f_mults = sum(not _is_unit(v, kernel.s_f) for v in kernel.f_vals)
        row_counts = np.bincount(kernel.f_rows, minlength=kernel.n)
        adds = int(row_counts.sum())  # (r - 1) to accumulate a row plus 1 to add it to z
        shifts = (diag_mults if kernel.s_d else 0) + (int(np.count_nonzero(row_counts)) if kernel.s_f else 0)
        return {"multiplications": int(diag_mults + f_mults), "additions": adds, "shifts": int(shifts)}
    mat = kernel.matrix if isinstance(kernel, IntegerKernel) else np.asarray(kernel)
    shift = kernel.shift if isinstance(kernel, IntegerKernel) else 0
    mults = sum(not _is_unit(v, shift) for v in mat.ravel() if v != 0)
    nz_rows = np.count_nonzero(mat, axis=1)
    adds = int(np.maximum(nz_rows - 1, 0).sum())
    return {"multiplications": int(mults), "additions": adds, "shifts": int(np.count_nonzero(nz_rows)) if shift else 0}


@dataclass(frozen=True, eq=False)
class AxisKernel:
    """One axis of an INT-DTT+: base DTT plus integer transition (or dense fallback)."""

    base: BaseGraphKind
    base_eig: EigenSystem
    float_kernel: TransitionKernel
    int_kernel: object  # IntegerTransitionKernel, or IntegerKernel when fallback
    fallback: bool = False

    @property
    def n(self) -> int:
        return self.base_eig.n

    def effective_kernel(self) -> np.ndarray:
        return self.int_kernel.to_float()

    def analysis(self) -> np.ndarray:
        """Effective float analysis matrix of the integer transform on pixels."""
        return self.effective_kernel() @ self.base_eig.analysis

    def float_analysis(self) -> np.ndarray:
        return self.float_kernel.k_matrix @ self.base_eig.analysis

    def forward_int(self, coeffs) -> np.ndarray:
        return self.int_kernel.forward(coeffs)

    def inverse_int(self, coeffs) -> np.ndarray:
        return self.int_kernel.inverse(coeffs)


def _dense_fallback(kmat: np.ndarray, p_d: int, bit_depth: int) -> IntegerKernel:
    lo, hi = signed_range(bit_depth)
    mat = np.clip(np.round(kmat * p_d), lo, hi).astype(np.int64)
    return IntegerKernel(mat, log2_exact(p_d), bit_depth, fallback=True)


def build_int_dtt_plus(kernel: TransitionKernel, base: BaseGraphKind = BaseGraphKind.PATH,
                       p_d: int = DEFAULT_P_D, p_f: int = DEFAULT_P_F, bit_depth_d: int = 8,
                       bit_depth_f: int = 3, weights=(1.0, 1.0, 1.0), tune: bool = True):
    """split -> quantize -> fine_tune, with the flagged dense fallback when the split fails.

    A kernel equal to the identity (no update) maps to the exact integer identity.
    """
    kmat = kernel.k_matrix
    if np.abs(kmat - np.eye(kernel.n)).max() <= 1e-12:
        return IntegerTransitionKernel.identity(kernel.n, base, log2_exact(p_f), bit_depth_d, bit_depth_f)
    try:
        kd, f = split(kmat)
    except SplitError:
        return _dense_fallback(kmat, p_d, bit_depth_d)
    ik = quantize(kd, f, p_d, p_f, bit_depth_d, bit_depth_f, base)
    if tune:
        ik = fine_tune(ik, kmat, weights)
    return ik


def axis_target(alpha: float, beta: float, i: int, n: int):
    """Pick the base graph for one learned axis and express the DTT+ relative to it.

    The transform only depends on the normalized self-loop weight
    ``w = alpha / beta``.  The DST-7 graph carries its unit loop on node 1, so
    it is usable only when the learned loop also sits on node 1; the update
    relative to it is then ``w - 1`` (a downdate when ``w < 1``).
    """
    w = alpha / beta
    kind = select_base(w)
    if kind is BaseGraphKind.PATH_WITH_UNIT_SELF_LOOP and i != 1:
        kind = BaseGraphKind.PATH
    return kind, w - kind.self_loop


def build_axis_kernel(alpha: float, beta: float, i: int, n: int, p_d: int = DEFAULT_P_D,
                      p_f: int = DEFAULT_P_F, bit_depth_d: int = 8, bit_depth_f: int = 3,
                      weights=(1.0, 1.0, 1.0), tune: bool = True) -> AxisKernel:
    kind, update = axis_target(alpha, beta, i, n)
    lap = base_laplacian(kind, n)
    eig = base_eigensystem(kind, n)
    fk = transition_kernel(lap, eig, update, 1.0, i)
    ik = build_int_dtt_plus(fk, kind, p_d, p_f, bit_depth_d, bit_depth_f, weights, tune)
    return AxisKernel(kind, eig, fk, ik, fallback=isinstance(ik, IntegerKernel))
