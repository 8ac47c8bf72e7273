import numpy as np
import pytest
from hypothesis import given, strategies as st

from intdtt.bdrate import BdRateError, RdCurve, bd_log_rate, bd_rate

RATES = [0.1, 0.25, 0.6, 1.3, 2.4]
PSNRS = [30.0, 33.5, 37.0, 40.2, 43.1]


def pts(rates, psnrs):
    return list(zip(rates, psnrs))


class TestBdRate:
    def test_identical(self):
        assert bd_rate(pts(RATES, PSNRS), pts(RATES, PSNRS)) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("factor,expected", [(2.0, 100.0), (0.97, -3.0), (0.5, -50.0)])
    def test_constant_factor(self, factor, expected):
        b = pts([r * factor for r in RATES], PSNRS)
        assert bd_rate(pts(RATES, PSNRS), b) == pytest.approx(expected, abs=1e-9)

    @given(st.lists(st.floats(0.01, 0.5), min_size=5, max_size=5), st.floats(0.5, 1.5), st.floats(-1, 1))
    def test_log_antisymmetry(self, incs, factor, shift):
        rates = np.cumsum(incs)
        a = pts(rates, PSNRS)
        b = pts(rates * factor * np.exp(0.1 * np.arange(5) * shift), [p + shift for p in PSNRS])
        assert bd_log_rate(a, b) == pytest.approx(-bd_log_rate(b, a), abs=1e-6)

    def test_unsorted_input(self):
        a = pts(RATES[::-1], PSNRS[::-1])
        assert bd_rate(a, pts(RATES, PSNRS)) == pytest.approx(0.0, abs=1e-10)


class TestErrors:
    def test_too_few_points(self):
        with pytest.raises(BdRateError):
            RdCurve((1, 2, 3), (30, 31, 32))

    def test_no_overlap(self):
        with pytest.raises(BdRateError):
            bd_rate(pts(RATES, PSNRS), pts(RATES, [p + 20 for p in PSNRS]))

    def test_bad_values(self):
        with pytest.raises(BdRateError):
            RdCurve((0, 1, 2, 3), (30, 31, 32, 33))
        with pytest.raises(BdRateError):
            RdCurve((1, 2, 3, 4), (30, 31, float("inf"), 33))
        with pytest.raises(BdRateError):
            RdCurve((1, 2, 2, 4), (30, 31, 32, 33))
        with pytest.raises(BdRateError):
            RdCurve((1, 2, 3), (30, 31, 32, 33))

    def test_is_value_error(self):
        assert issubclass(BdRateError, ValueError)
