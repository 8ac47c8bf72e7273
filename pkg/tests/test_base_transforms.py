import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from intdtt.base_transforms import (
    EigenSystem,
    IntegerKernel,
    closed_form_dct2,
    closed_form_dct8,
    closed_form_dst7,
    gft,
    apply_separable,
    quantize_basis,
)
from intdtt.graph_model import GeneralizedLaplacian, path_laplacian, path_with_self_loop_laplacian

from oracles import align_rows

SIZES = [4, 8, 16, 32]


def textbook_dct2(n):
    k, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    c = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    c[0] /= np.sqrt(2.0)
    return c  # rows are basis vectors


def textbook_dst7(n):
    k, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return 2.0 / np.sqrt(2 * n + 1) * np.sin(np.pi * (2 * k + 1) * (j + 1) / (2 * n + 1))


def check_eigensystem(eig, lap):
    u = eig.basis
    assert np.abs(u.T @ u - np.eye(eig.n)).max() <= 1e-10
    assert np.abs(lap.matrix @ u - u * eig.eigenvalues[None, :]).max() <= 1e-9
    assert np.all(np.diff(eig.eigenvalues) >= 0)
    for col in u.T:
        first = np.flatnonzero(np.abs(col) > 1e-12)[0]
        assert col[first] > 0


class TestGft:
    def test_path2(self):
        eig = gft(path_laplacian(2))
        np.testing.assert_allclose(eig.basis, np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)
        np.testing.assert_allclose(eig.eigenvalues, [0, 2], atol=1e-15)

    @pytest.mark.parametrize("n", SIZES)
    def test_invariants(self, n):
        for lap in (path_laplacian(n), path_with_self_loop_laplacian(n)):
            check_eigensystem(gft(lap), lap)

    @pytest.mark.parametrize("n", SIZES)
    def test_path_is_dct2(self, n):
        got = gft(path_laplacian(n)).analysis
        ref = textbook_dct2(n)
        assert np.abs(align_rows(ref, got) - got).max() < 1e-9

    @pytest.mark.parametrize("n", SIZES)
    def test_self_loop_path_is_dst7(self, n):
        got = gft(path_with_self_loop_laplacian(n)).analysis
        ref = textbook_dst7(n)
        assert np.abs(align_rows(ref, got) - got).max() < 1e-9

    def test_recovers_constructed_system(self):
        m = np.array(path_laplacian(6).matrix) * 1.3
        m[2, 2] += 0.8
        evals, evecs = np.linalg.eigh(m)
        rebuilt = evecs @ np.diag(evals) @ evecs.T
        rebuilt = (rebuilt + rebuilt.T) / 2
        # clear roundoff-level positive off-diagonals from the rebuild
        rebuilt[(rebuilt > 0) & ~np.eye(6, dtype=bool)] = 0.0
        eig = gft(GeneralizedLaplacian(rebuilt))
        np.testing.assert_allclose(eig.eigenvalues, evals, atol=1e-12)
        assert np.abs(np.abs(eig.basis.T @ evecs) - np.eye(6)).max() < 1e-9

    def test_deterministic(self):
        a = gft(path_with_self_loop_laplacian(16))
        b = gft(path_with_self_loop_laplacian(16))
        assert np.array_equal(a.basis, b.basis)


class TestClosedForms:
    @pytest.mark.parametrize("n", [2] + SIZES)
    def test_dct2_matches_solver(self, n):
        cf, sv = closed_form_dct2(n), gft(path_laplacian(n))
        assert np.abs(cf.basis - sv.basis).max() < 1e-9
        np.testing.assert_allclose(cf.eigenvalues, sv.eigenvalues, atol=1e-12)

    @pytest.mark.parametrize("n", SIZES)
    def test_dst7_matches_solver(self, n):
        cf, sv = closed_form_dst7(n), gft(path_with_self_loop_laplacian(n))
        assert np.abs(cf.basis - sv.basis).max() < 1e-9
        np.testing.assert_allclose(cf.eigenvalues, sv.eigenvalues, atol=1e-12)

    @pytest.mark.parametrize("n", SIZES)
    def test_dct8_is_loop_on_last_node(self, n):
        m = np.array(path_laplacian(n).matrix)
        m[-1, -1] += 1
        sv = gft(GeneralizedLaplacian(m))
        assert np.abs(closed_form_dct8(n).basis - sv.basis).max() < 1e-9

    def test_dct2_dc_row(self):
        np.testing.assert_allclose(closed_form_dct2(8).analysis[0], np.full(8, 1 / np.sqrt(8)))

    @pytest.mark.parametrize("n", [0, 1])
    def test_too_small(self, n):
        with pytest.raises(ValueError):
            closed_form_dct2(n)
        with pytest.raises(ValueError):
            closed_form_dst7(n)


class TestApplySeparable:
    def test_zero_and_identity(self, rng):
        eye = EigenSystem(np.eye(4), np.zeros(4))
        np.testing.assert_array_equal(apply_separable(np.zeros((4, 4)), eye, eye), np.zeros((4, 4)))
        x = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(apply_separable(x, eye, eye), x)

    def test_kronecker_oracle(self, rng):
        u_r, u_c = closed_form_dst7(4), closed_form_dct2(4)
        x = rng.standard_normal((4, 4))
        vec = x.reshape(-1, order="F")
        coeff = (np.kron(u_r.basis, u_c.basis).T @ vec).reshape(4, 4, order="F")
        np.testing.assert_allclose(apply_separable(x, u_r, u_c), coeff, atol=1e-12)

    def test_rectangular_orientation(self, rng):
        u_r, u_c = closed_form_dct2(8), closed_form_dst7(4)
        x = rng.standard_normal((4, 8))
        np.testing.assert_allclose(apply_separable(x, u_r, u_c), u_c.basis.T @ x @ u_r.basis)
        with pytest.raises(ValueError):
            apply_separable(x.T, u_r, u_c)

    @given(arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)),
           st.sampled_from([closed_form_dct2, closed_form_dst7, closed_form_dct8]),
           st.sampled_from([closed_form_dct2, closed_form_dst7, closed_form_dct8]))
    def test_parseval(self, x, fr, fc):
        coeff = apply_separable(x, fr(8), fc(8))
        e = np.sum(x * x)
        assert abs(np.sum(coeff * coeff) - e) <= 1e-9 * max(e, 1.0)


class TestIntegerBase:
    def test_quantize_basis_range_and_shift(self):
        k = quantize_basis(closed_form_dct2(8))
        assert k.shift == 7 and k.bit_depth == 8
        assert k.matrix.min() >= -128 and k.matrix.max() <= 127
        assert k.orthogonality() < 0.05

    def test_bit_depth_validation(self):
        with pytest.raises(ValueError):
            IntegerKernel(np.array([[200]]), 7, 8)

    def test_forward_inverse_are_integer(self, rng):
        k = quantize_basis(closed_form_dct2(8))
        x = rng.integers(-255, 256, 8)
        y = k.forward(x)
        assert y.dtype.kind == "i"
        back = k.inverse(y)
        assert np.abs(back - x).max() <= 3
