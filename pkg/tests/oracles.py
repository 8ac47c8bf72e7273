"""Independent reference computations used by the tests.

These avoid the package code paths on purpose: dense n^2 x n^2 algebra for the
learning objective, exact rational arithmetic for the integer transforms and
brute-force loops for RD selection.
"""

from fractions import Fraction

import numpy as np


def align_rows(a, b):
    """Flip rows of ``a`` to best match the signs of ``b``."""
    signs = np.sign(np.sum(a * b, axis=1))
    signs[signs == 0] = 1.0
    return a * signs[:, None]


def dense_cost(alpha_r, beta_r, i_r, alpha_c, beta_c, i_c, lr, lc, s):
    """``-log det L_g + tr(L_g S)`` with the Kronecker sum built explicitly."""
    a = beta_r * lr.copy()
    a[i_r - 1, i_r - 1] += alpha_r
    b = beta_c * lc.copy()
    b[i_c - 1, i_c - 1] += alpha_c
    lg = np.kron(a, np.eye(lc.shape[0])) + np.kron(np.eye(lr.shape[0]), b)
    sign, logdet = np.linalg.slogdet(lg)
    assert sign > 0
    return -logdet + np.trace(lg @ s)


def _shift_round(v: int, s: int) -> int:
    if s == 0:
        return v
    q = Fraction(abs(v), 2 ** s)
    mag = int(q + Fraction(1, 2))  # floor(q + 1/2) for q >= 0
    return -mag if v < 0 else mag


def exact_forward(kd, s_d, f_dense, s_f, y):
    """Integer INT-DTT+ forward with Python ints (arbitrary precision)."""
    n = len(kd)
    z = [_shift_round(int(kd[k]) * int(y[k]), s_d) for k in range(n)]
    out = []
    for k in range(n):
        acc = sum(int(f_dense[k][j]) * z[j] for j in range(n))
        out.append(z[k] + _shift_round(acc, s_f))
    return out


def exact_inverse(kd, s_d, f_dense, s_f, q):
    n = len(kd)
    w = []
    for k in range(n):
        acc = sum(int(f_dense[j][k]) * int(q[j]) for j in range(n))
        w.append(int(q[k]) + _shift_round(acc, s_f))
    return [_shift_round(int(kd[k]) * w[k], s_d) for k in range(n)]


def brute_force_select(block, analyses, step, offset, lagrangian):
    """Loop-based RD choice: lowest index among minimal costs."""
    n_t = len(analyses)
    sig = np.log2(n_t)
    best, best_cost = None, None
    for t, (ar, ac) in enumerate(analyses):
        c = ac @ block @ ar.T
        lv = np.zeros_like(c)
        for idx, v in np.ndenumerate(c):
            lv[idx] = np.sign(v) * np.floor(abs(v) / step + offset)
        rec = ac.T @ (lv * step) @ ar
        cost = float(np.sum((block - rec) ** 2)) + lagrangian * (float(np.abs(lv).sum()) + sig)
        if best_cost is None or cost < best_cost:
            best, best_cost = t, cost
    return best, best_cost
