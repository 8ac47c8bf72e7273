"""Fixed-point helpers shared by the integer transforms.

Division by a power of two is an arithmetic shift with round-half-away-from-zero:
``rshift_round(v, s) = sign(v) * ((|v| + 2**(s-1)) >> s)``.  All intermediate
values are held in int64 and checked against a signed 32-bit accumulator.
"""

from __future__ import annotations

import numpy as np

ACC_BITS = 32
ACC_MIN = -(1 << (ACC_BITS - 1))
ACC_MAX = (1 << (ACC_BITS - 1)) - 1


class AccumulatorOverflowError(OverflowError):
    pass


def check_acc(values: np.ndarray, where: str) -> np.ndarray:
    if values.size and (values.min() < ACC_MIN or values.max() > ACC_MAX):
        raise AccumulatorOverflowError(f"{where}: value exceeds {ACC_BITS}-bit accumulator")
    return values


def rshift_round(values, shift: int) -> np.ndarray:
    """Divide by ``2**shift`` rounding half away from zero, in integer arithmetic."""
    v = np.asarray(values, dtype=np.int64)
    if shift == 0:
        return v.copy()
    mag = (np.abs(v) + (1 << (shift - 1))) >> shift
    return np.where(v < 0, -mag, mag)


def signed_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def is_power_of_two(p) -> bool:
    p_int = int(p)
    return p_int == p and p_int >= 1 and (p_int & (p_int - 1)) == 0


def log2_exact(p) -> int:
    if not is_power_of_two(p):
        raise ValueError(f"{p} is not a power of two")
    return int(p).bit_length() - 1


def as_int_input(x, bits: int = 16) -> np.ndarray:
    """Validate an integer coefficient vector against a signed ``bits`` range."""
    arr = np.asarray(x)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.round(arr), arr)):
            raise TypeError("integer transform input must be integer-valued")
    arr = arr.astype(np.int64)
    lo, hi = signed_range(bits)
    if arr.size and (arr.min() < lo or arr.max() > hi):
        raise AccumulatorOverflowError(f"input exceeds signed {bits}-bit range")
    return arr
