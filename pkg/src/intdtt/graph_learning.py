"""Learning separable DTT+ graphs from residual covariance.

The block model is the Cartesian product of a row and a column DTT+ graph,

    L_g(phi) = L~_r (x) I + I (x) L~_c,   L~ = b**2 L + a**2 e_i e_i^T,

and the parameters minimize ``-log det L_g + tr(L_g S)``.  The continuous
variables are handled through the square-root reparametrization ``(a, b)``
so that Newton's method runs unconstrained; the discrete self-loop
positions are scanned exhaustively.

Blocks are vectorized column-major, so the row graph acts on the outer
(column-position) index.  Because ``L_g`` is a Kronecker sum, every quantity
needed here only depends on two partial traces of ``S`` and on the
eigendecompositions of the two small component Laplacians.

Reported :class:`DttPlusParams` are in model space: ``alpha = a**2`` and
``beta = b**2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .graph_model import DttPlusParams, GeneralizedLaplacian, path_laplacian
from .base_transforms import NumericalError

__all__ = [
    "LearningProblem",
    "LearningSolution",
    "LearningError",
    "cost",
    "model_covariance",
    "sample_covariance",
    "solve",
    "solve_inner",
    "stationarity_residual",
]

logger = logging.getLogger(__name__)

STATIONARITY_TOL = 1e-8
MAX_NEWTON_ITERS = 200
MAX_HALVINGS = 30
COST_TIE_TOL = 1e-12
SINGULAR_RTOL = 1e-12


class LearningError(RuntimeError):
    """Every inner solve failed; ``diagnostics`` holds per-pair details."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or []


def _vectorize(blocks: np.ndarray) -> np.ndarray:
    # column-major vec of each (h, w) block
    return blocks.transpose(0, 2, 1).reshape(blocks.shape[0], -1)


def _as_block_array(blocks) -> np.ndarray:
    if isinstance(blocks, np.ndarray) and blocks.ndim == 3:
        arr = blocks.astype(float)
    else:
        blocks = list(blocks)
        if not blocks:
            raise ValueError("need at least one block")
        shapes = {np.shape(b) for b in blocks}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent block sizes: {sorted(shapes)}")
        arr = np.asarray(blocks, dtype=float)
    if arr.shape[0] == 0:
        raise ValueError("need at least one block")
    if arr.ndim != 3:
        raise ValueError("blocks must be 2-D arrays")
    return arr


def sample_covariance(blocks, center: bool = True) -> np.ndarray:
    """``S = (1/n_e) sum vec(x) vec(x)^T`` with column-major ``vec``.

    With ``center`` the mean block over the examples is subtracted first.
    """
    arr = _as_block_array(blocks)
    if center:
        arr = arr - arr.mean(axis=0)
    v = _vectorize(arr)
    s = v.T @ v / arr.shape[0]
    return (s + s.T) / 2


@dataclass(eq=False)
class LearningProblem:
    """Sample covariance plus the two base graphs.

    ``ridge`` is added to the diagonal of ``S``; ``None`` selects
    ``1e-8 * tr(S) / N``.
    """

    S: np.ndarray
    base_r: GeneralizedLaplacian
    base_c: GeneralizedLaplacian
    ridge: float | None = None
    _stats: tuple = field(init=False, repr=False, default=None)

    def __post_init__(self):
        s = np.asarray(self.S, dtype=float)
        w, h = self.base_r.n, self.base_c.n
        if s.shape != (w * h, w * h):
            raise ValueError(f"S has shape {s.shape}, expected {(w * h, w * h)}")
        if np.abs(s - s.T).max() > 1e-9 * max(1.0, np.abs(s).max()):
            raise ValueError("sample covariance is not symmetric")
        self.S = (s + s.T) / 2
        if self.ridge is None:
            self.ridge = 1e-8 * np.trace(self.S) / (w * h)
        s4 = self.S.reshape(w, h, w, h)
        s_r = np.einsum("ikjk->ij", s4) + self.ridge * h * np.eye(w)
        s_c = np.einsum("kikj->ij", s4) + self.ridge * w * np.eye(h)
        self._stats = (s_r, s_c)

    @classmethod
    def from_blocks(cls, blocks, base_r=None, base_c=None, ridge=None, center=True):
        arr = _as_block_array(blocks)
        h, w = arr.shape[1:]
        base_r = base_r if base_r is not None else path_laplacian(w)
        base_c = base_c if base_c is not None else path_laplacian(h)
        return cls(sample_covariance(arr, center=center), base_r, base_c, ridge)

    @property
    def row_stat(self) -> np.ndarray:
        """Partial trace of ``S`` over the column-graph index (``w x w``)."""
        return self._stats[0]

    @property
    def col_stat(self) -> np.ndarray:
        return self._stats[1]

    @property
    def scale(self) -> float:
        """Mean per-pixel variance ``tr(S) / N``."""
        return float(np.trace(self.S) / self.S.shape[0])


@dataclass(frozen=True)
class LearningSolution:
    params: DttPlusParams
    cost: float
    grad_norm: float
    newton_iters: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "cost": float(self.cost),
            "grad_norm": float(self.grad_norm),
            "newton_iters": int(self.newton_iters),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearningSolution":
        return cls(
            params=DttPlusParams.from_dict(d["params"]),
            cost=float(d["cost"]),
            grad_norm=float(d["grad_norm"]),
            newton_iters=int(d["newton_iters"]),
            converged=bool(d["converged"]),
        )


def _axis(base: np.ndarray, a: float, b: float, i: int):
    m = (b * b) * base
    m[i, i] += a * a
    return np.linalg.eigh(m)


def _objective(x, i_r: int, i_c: int, problem: LearningProblem, grad: bool = True):
    """Cost (and gradient w.r.t. the reparametrized ``x = (a_r, b_r, a_c, b_c)``).

    ``i_r``/``i_c`` are 0-based here.
    """
    a_r, b_r, a_c, b_c = x
    lr, lc = problem.base_r.matrix, problem.base_c.matrix
    s_r, s_c = problem.row_stat, problem.col_stat
    mu, v = _axis(lr, a_r, b_r, i_r)
    nu, w = _axis(lc, a_c, b_c, i_c)
    sums = mu[:, None] + nu[None, :]
    # a zero eigenvalue only shows up as roundoff, so singularity is relative
    if not sums.min() > SINGULAR_RTOL * max(sums.max(), 1e-300):
        return (math.inf, None) if grad else math.inf
    tr_lr = float(np.sum(lr * s_r))
    tr_lc = float(np.sum(lc * s_c))
    val = (
        -float(np.log(sums).sum())
        + b_r * b_r * tr_lr + a_r * a_r * s_r[i_r, i_r]
        + b_c * b_c * tr_lc + a_c * a_c * s_c[i_c, i_c]
    )
    if not grad:
        return val
    inv = 1.0 / sums
    w_r = inv.sum(axis=1)
    w_c = inv.sum(axis=0)
    proj_r = np.einsum("ik,ij,jk->k", v, lr, v)
    proj_c = np.einsum("ik,ij,jk->k", w, lc, w)
    g = np.array([
        2 * a_r * (s_r[i_r, i_r] - float(v[i_r] ** 2 @ w_r)),
        2 * b_r * (tr_lr - float(proj_r @ w_r)),
        2 * a_c * (s_c[i_c, i_c] - float(w[i_c] ** 2 @ w_c)),
        2 * b_c * (tr_lc - float(proj_c @ w_c)),
    ])
    return val, g


def _reparam(phi: DttPlusParams) -> np.ndarray:
    return np.sqrt([phi.alpha_r, phi.beta_r, phi.alpha_c, phi.beta_c])


def _to_params(x, i_r: int, i_c: int) -> DttPlusParams:
    a_r, b_r, a_c, b_c = np.asarray(x, dtype=float) ** 2
    tiny = np.finfo(float).tiny
    return DttPlusParams(float(a_r), max(float(b_r), tiny), i_r + 1, float(a_c), max(float(b_c), tiny), i_c + 1)


def cost(phi: DttPlusParams, problem: LearningProblem) -> float:
    """``-log det L_g(phi) + tr(L_g(phi) S)``; ``inf`` when ``L_g`` is singular."""
    phi.check_size(min(problem.base_r.n, problem.base_c.n))
    return _objective(_reparam(phi), phi.i_r - 1, phi.i_c - 1, problem, grad=False)


def stationarity_residual(phi: DttPlusParams, problem: LearningProblem) -> np.ndarray:
    """Gradient of the cost in the reparametrized variables ``(a_r, b_r, a_c, b_c)``.

    Each component is ``2 a tr((S - L_g^{-1}) M)`` with ``M`` the derivative
    direction (``e_i e_i^T (x) I``, ``L (x) I``, ...), so interior optima and
    boundary optima with ``a = 0`` both give zero.
    """
    val, g = _objective(_reparam(phi), phi.i_r - 1, phi.i_c - 1, problem)
    if g is None:
        raise NumericalError("L_g is singular at the given parameters")
    return g


def _hessian(x, i_r, i_c, problem, g0):
    h = 1e-5 * np.maximum(np.abs(x), np.mean(np.abs(x)) + 1e-12)
    hess = np.empty((4, 4))
    for p in range(4):
        e = np.zeros(4)
        e[p] = h[p]
        _, gp = _objective(x + e, i_r, i_c, problem)
        _, gm = _objective(x - e, i_r, i_c, problem)
        if gp is None or gm is None:
            # one-sided fallback near the singular boundary
            gp = gp if gp is not None else g0
            gm = gm if gm is not None else g0
            hess[:, p] = (gp - gm) / h[p]
        else:
            hess[:, p] = (gp - gm) / (2 * h[p])
    return (hess + hess.T) / 2


def _default_init(problem: LearningProblem) -> np.ndarray:
    sigma = problem.scale if problem.scale > 0 else 1.0
    return np.sqrt([0.5 / sigma, 1.0 / sigma, 0.5 / sigma, 1.0 / sigma])


def solve_inner(i_r: int, i_c: int, problem: LearningProblem, init: DttPlusParams | None = None,
                tol: float = STATIONARITY_TOL, max_iter: int = MAX_NEWTON_ITERS) -> LearningSolution:
    """Damped Newton on the four continuous parameters for fixed 1-based ``(i_r, i_c)``."""
    if not (1 <= i_r <= problem.base_r.n and 1 <= i_c <= problem.base_c.n):
        raise ValueError(f"indices ({i_r}, {i_c}) out of range")
    ir, ic = i_r - 1, i_c - 1
    x = _reparam(init) if init is not None else _default_init(problem)
    f, g = _objective(x, ir, ic, problem)
    if g is None:
        x = _default_init(problem)
        f, g = _objective(x, ir, ic, problem)
    it = 0
    while it < max_iter and np.abs(g).max() > tol:
        hess = _hessian(x, ir, ic, problem, g)
        evals, evecs = np.linalg.eigh(hess)
        # saddle-free Newton: use |H| with a floor so the step is a descent direction
        floor = max(np.abs(evals).max() * 1e-10, 1e-300)
        step = -(evecs @ ((evecs.T @ g) / np.maximum(np.abs(evals), floor)))
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            x_new = x + t * step
            f_new = _objective(x_new, ir, ic, problem, grad=False)
            if f_new < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # near the optimum the decrease drops below cost roundoff; take the
            # full step if the cost stays within roundoff and the gradient shrinks
            x_new = x + step
            f_new, g_new = _objective(x_new, ir, ic, problem)
            roundoff = 64 * np.finfo(float).eps * max(1.0, abs(f))
            if g_new is not None and f_new <= f + roundoff and np.abs(g_new).max() < np.abs(g).max():
                accepted = True
        it += 1
        if not accepted:
            break
        x = x_new
        f, g = _objective(x, ir, ic, problem)
    grad_norm = float(np.abs(g).max())
    return LearningSolution(_to_params(x, ir, ic), float(f), grad_norm, it, grad_norm <= tol)


def solve(problem: LearningProblem, init: DttPlusParams | None = None, tol: float = STATIONARITY_TOL,
          pairs=None) -> LearningSolution:
    """Best inner solution over all self-loop position pairs.

    Ties in cost (within ``1e-12``) go to the lexicographically smallest
    ``(i_r, i_c)``.  ``pairs`` restricts the scan to the given 1-based pairs.
    """
    if pairs is None:
        pairs = [(r, c) for r in range(1, problem.base_r.n + 1) for c in range(1, problem.base_c.n + 1)]
    best = None
    diagnostics = []
    for i_r, i_c in sorted(pairs):
        start = None
        if init is not None:
            start = DttPlusParams(init.alpha_r, init.beta_r, i_r, init.alpha_c, init.beta_c, i_c)
        try:
            sol = solve_inner(i_r, i_c, problem, start, tol=tol)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            diagnostics.append({"pair": (i_r, i_c), "error": str(exc)})
            continue
        if not math.isfinite(sol.cost):
            diagnostics.append({"pair": (i_r, i_c), "error": "non-finite cost"})
            continue
        if best is None or sol.cost < best.cost - COST_TIE_TOL:
            best = sol
    if best is None:
        raise LearningError("all inner solves failed", diagnostics)
    if not best.converged:
        logger.debug("best pair (%d, %d) stopped with grad %.3g", best.params.i_r, best.params.i_c, best.grad_norm)
    return best


def model_covariance(phi: DttPlusParams, base_r: GeneralizedLaplacian, base_c: GeneralizedLaplacian) -> np.ndarray:
    """``L_g(phi)^{-1}``, the covariance implied by the model."""
    lr = phi.beta_r * base_r.matrix
    lr[phi.i_r - 1, phi.i_r - 1] += phi.alpha_r
    lc = phi.beta_c * base_c.matrix
    lc[phi.i_c - 1, phi.i_c - 1] += phi.alpha_c
    lg = np.kron(lr, np.eye(base_c.n)) + np.kron(np.eye(base_r.n), lc)
    return np.linalg.inv(lg)
