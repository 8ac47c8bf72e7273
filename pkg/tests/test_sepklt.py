import numpy as np
import pytest

from intdtt.base_transforms import closed_form_dct2
from intdtt.datasets import SynthModel, synth_residuals
from intdtt.sepklt import sep_klt_learner, sep_klt_train


class TestSepKlt:
    def test_rank_one_alignment(self, rng):
        u = rng.standard_normal(8)
        v = rng.standard_normal(8)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        blocks = rng.standard_normal(300)[:, None, None] * np.outer(u, v)[None]
        klt = sep_klt_train(blocks, center=False)
        assert abs(klt.col.basis[:, 0] @ u) == pytest.approx(1.0, abs=1e-9)
        assert abs(klt.row.basis[:, 0] @ v) == pytest.approx(1.0, abs=1e-9)

    def test_ar1_close_to_dct2(self):
        ds = synth_residuals(SynthModel(0.95, 0.95, 1.0, 1.0, n=8, count=20000, seed=5))
        klt = sep_klt_train(ds.blocks)
        dct = closed_form_dct2(8).basis
        for basis in (klt.row.basis, klt.col.basis):
            overlap = np.abs(np.sum(basis * dct, axis=0))
            assert overlap.min() > 0.97

    def test_white_noise_compaction_uniform(self, rng):
        klt = sep_klt_train(rng.standard_normal((20000, 8, 8)))
        share = klt.row.eigenvalues / klt.row.eigenvalues.sum()
        assert np.abs(share - 1 / 8).max() < 0.01
        assert np.abs(klt.row.basis.T @ klt.row.basis - np.eye(8)).max() < 1e-12

    def test_quantized_eight_bit(self, rng):
        klt = sep_klt_train(rng.standard_normal((100, 8, 8)).cumsum(axis=2))
        assert klt.row_int.bit_depth == 8 and klt.row_int.matrix.max() <= 127
        t = klt.transform()
        np.testing.assert_array_equal(t.row_analysis, klt.row_int.to_float())
        np.testing.assert_array_equal(klt.transform(quantized=False).col_analysis, klt.col.analysis)

    def test_eigenvalues_descending(self, rng):
        klt = sep_klt_train(rng.standard_normal((500, 6, 6)).cumsum(axis=1))
        assert np.all(np.diff(klt.col.eigenvalues) <= 0)

    def test_learner_interface(self, rng):
        t, params = sep_klt_learner(rng.standard_normal((50, 4, 4)))
        assert params is None and t.shape == (4, 4)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sep_klt_train(np.zeros((0, 4, 4)))
