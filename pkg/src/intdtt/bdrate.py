"""Bjontegaard delta rate between two RD curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BdRateError", "RdCurve", "bd_rate", "bd_log_rate"]


class BdRateError(ValueError):
    pass


@dataclass(frozen=True)
class RdCurve:
    """(rate in bits per sample, PSNR in dB) points, stored in increasing rate order."""

    rates: tuple
    psnrs: tuple

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        p = np.asarray(self.psnrs, dtype=float)
        if r.shape != p.shape or r.ndim != 1:
            raise BdRateError("rates and PSNRs must be equal-length sequences")
        if r.size < 4:
            raise BdRateError("an RD curve needs at least 4 points")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r)) and np.all(r > 0)):
            raise BdRateError("rates must be positive and PSNRs finite")
        order = np.argsort(r, kind="stable")
        r, p = r[order], p[order]
        if np.any(np.diff(r) <= 0):
            raise BdRateError("rates must be strictly increasing")
        object.__setattr__(self, "rates", tuple(float(v) for v in r))
        object.__setattr__(self, "psnrs", tuple(float(v) for v in p))

    @classmethod
    def from_points(cls, points) -> "RdCurve":
        pts = list(points)
        return cls(tuple(p[0] for p in pts), tuple(p[1] for p in pts))


def _as_curve(c) -> RdCurve:
    return c if isinstance(c, RdCurve) else RdCurve.from_points(c)


def bd_log_rate(curve_a, curve_b) -> float:
    """Mean difference of ``ln(rate_b) - ln(rate_a)`` over the common PSNR range.

    Each curve is fitted with a cubic of log-rate against PSNR; the fits are
    integrated over the overlapping PSNR interval.
    """
    a, b = _as_curve(curve_a), _as_curve(curve_b)
    lo = max(min(a.psnrs), min(b.psnrs))
    hi = min(max(a.psnrs), max(b.psnrs))
    if not hi > lo:
        raise BdRateError("RD curves do not overlap in PSNR")
    fits = [np.polyint(np.polyfit(c.psnrs, np.log(c.rates), 3)) for c in (a, b)]
    area = [np.polyval(f, hi) - np.polyval(f, lo) for f in fits]
    return float((area[1] - area[0]) / (hi - lo))


def bd_rate(curve_a, curve_b) -> float:
    """Average rate change of ``curve_b`` relative to ``curve_a`` at equal PSNR, in percent."""
    return float(np.expm1(bd_log_rate(curve_a, curve_b)) * 100.0)
