from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intdtt.fixedpoint import (
    AccumulatorOverflowError,
    as_int_input,
    check_acc,
    is_power_of_two,
    log2_exact,
    rshift_round,
    signed_range,
)


class TestRshiftRound:
    def test_half_away_from_zero(self):
        np.testing.assert_array_equal(rshift_round([2, 3, -2, -3, 1, -1, 0], 1), [1, 2, -1, -2, 1, -1, 0])

    def test_zero_shift(self):
        np.testing.assert_array_equal(rshift_round([5, -7], 0), [5, -7])

    @given(st.integers(-(2 ** 40), 2 ** 40), st.integers(0, 20))
    def test_rational_oracle(self, v, s):
        q = Fraction(abs(v), 2 ** s)
        mag = int(q + Fraction(1, 2))
        assert int(rshift_round(np.array([v]), s)[0]) == (-mag if v < 0 else mag)


class TestHelpers:
    def test_signed_range(self):
        assert signed_range(8) == (-128, 127)
        assert signed_range(3) == (-4, 3)

    def test_powers_of_two(self):
        assert all(is_power_of_two(p) for p in (1, 2, 4, 128))
        assert not any(is_power_of_two(p) for p in (0, 3, 6, -4, 2.5))
        assert log2_exact(128) == 7
        with pytest.raises(ValueError):
            log2_exact(100)

    def test_check_acc(self):
        check_acc(np.array([2 ** 31 - 1, -(2 ** 31)]), "ok")
        with pytest.raises(AccumulatorOverflowError):
            check_acc(np.array([2 ** 31]), "too big")

    def test_as_int_input(self):
        assert as_int_input([1.0, -2.0]).dtype == np.int64
        with pytest.raises(TypeError):
            as_int_input([0.5])
        with pytest.raises(AccumulatorOverflowError):
            as_int_input([2 ** 15])
