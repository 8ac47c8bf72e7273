import csv
import json

import numpy as np
import pytest

from intdtt.experiment import (
    ConfigError,
    DEFAULT_CONFIG,
    encode,
    fixed_mts_set,
    int_dtt_plus_transform,
    dtt_plus_8bit,
    run_experiment,
    unit_gain,
    validate_config,
)
from intdtt.graph_model import DttPlusParams
from intdtt.rdot import QuantizerSpec, SeparableTransform

SMALL = {
    "n": 4,
    "train_count": 300,
    "test_count": 400,
    "modes": [
        {"name": "a", "rho_r": 0.9, "rho_c": 0.8, "boundary_r": 0.3, "boundary_c": 0.6},
        {"name": "b", "rho_r": 0.7, "rho_c": 0.9, "boundary_r": 1.0, "boundary_c": 0.3},
    ],
    "steps": [4, 8, 16, 32],
    "rdot_max_iter": 4,
    "cluster_k": [1, 2],
}


class TestConfig:
    def test_defaults(self):
        cfg = validate_config(None)
        assert cfg["train_step"] == 16.0
        assert cfg["train_lambda_factor"] == cfg["lambda_factor"]
        assert cfg["configs"][0] == "mts"
        assert DEFAULT_CONFIG["train_step"] is None  # defaults are not mutated

    @pytest.mark.parametrize("bad", [
        {"bogus": 1}, {"n": 1}, {"steps": [1, 2, 3]}, {"steps": [1, 1, 2, 3]}, {"p_f": 3},
        {"configs": ["nope"]}, {"configs": []}, {"rdot_tol": 0}, {"seed": -1}, {"seed": 1.5},
        {"modes": [{"rho_r": 2.0}]}, {"modes": [{"name": "x", "count": 4}]}, {"modes": [{"wat": 1}]},
        {"modes": [{"name": "x"}, {"name": "x"}]}, {"train_dataset": "a.dttp"}, {"cluster_k": [0]},
        {"deadzone_offset": 0.7}, {"n_learned": 0},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            validate_config(bad)

    def test_mts_always_included(self):
        assert validate_config({"configs": ["mts+dtt+"]})["configs"] == ["mts", "mts+dtt+"]


class TestTransforms:
    def test_fixed_set(self):
        fixed = fixed_mts_set(8)
        assert [t.name for t in fixed] == ["dct2.dct2", "dst7.dst7", "dst7.dct8", "dct8.dst7", "dct8.dct8"]
        for t in fixed:
            for a in (t.row_analysis, t.col_analysis):
                assert np.mean(np.sum(a * a, axis=1)) == pytest.approx(1.0)
                assert np.abs(a @ a.T - np.eye(8)).max() < 0.05

    def test_unit_gain(self):
        t = unit_gain(SeparableTransform("s", 2 * np.eye(3), 0.5 * np.eye(3)))
        np.testing.assert_allclose(t.row_analysis, np.eye(3))
        np.testing.assert_allclose(t.col_analysis, np.eye(3))

    def test_int_dtt_plus_close_to_float(self):
        phi = DttPlusParams(1.5, 1.0, 1, 0.7, 1.0, 1)
        t_int, (row, col) = int_dtt_plus_transform(phi, 8)
        t_float = dtt_plus_8bit(phi, 8)
        assert row.int_kernel.nnz > 0
        for a, b in ((t_int.row_analysis, t_float.row_analysis), (t_int.col_analysis, t_float.col_analysis)):
            assert np.mean(np.sum(a * a, axis=1)) == pytest.approx(1.0)
            assert np.abs(a @ a.T - np.eye(8)).max() < 0.1
            assert np.abs(a - b).max() < 0.2


class TestEncode:
    def test_single_transform_always_index_zero(self, rng):
        x = rng.normal(0, 10, (200, 8, 8))
        res = encode(x, fixed_mts_set(8)[:1], QuantizerSpec(8.0), 6.4)
        assert res.usage == [200]
        assert res.rate > 0 and np.isfinite(res.psnr)

    def test_identity_transform_set(self, rng):
        x = rng.integers(-20, 21, (100, 4, 4)).astype(float)
        eye = SeparableTransform("id", np.eye(4), np.eye(4))
        res = encode(x, [eye], QuantizerSpec(1.0, 0.5), 0.1)
        assert res.psnr == np.inf

    def test_rate_falls_with_step(self, rng):
        x = rng.normal(0, 10, (300, 8, 8)).cumsum(axis=1)
        fixed = fixed_mts_set(8)
        r = [encode(x, fixed, QuantizerSpec(s), 0.1 * s * s) for s in (4, 8, 16, 32)]
        assert all(a.rate > b.rate for a, b in zip(r, r[1:]))
        assert all(a.psnr > b.psnr for a, b in zip(r, r[1:]))


@pytest.fixture(scope="module")
def small_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("rep")
    return run_experiment(SMALL, out), out


class TestRunExperiment:
    def test_outputs(self, small_report):
        report, out = small_report
        rows = list(csv.DictReader((out / "rd.csv").open()))
        assert len(rows) == 4 * 2 * 4
        assert set(rows[0]) == {"config", "mode", "lambda", "rate", "psnr"}
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["bd_rate"]) == {"mts+sep-klt", "mts+dtt+", "mts+int-dtt+"}
        assert (out / "groups_k1.csv").exists() and (out / "groups_k2.csv").exists()
        assert summary["memory"]["sep_klt_bits_per_kernel"] == 2 * 16 * 8

    def test_report_contents(self, small_report):
        summary = small_report[0]["summary"]
        for rec in summary["modes"].values():
            assert len(rec["dtt_plus_params"]) == 1
            assert rec["int_dtt_plus_bits"] > 0
            assert rec["rdot"]["iterations"] <= 4
            pair = rec["int_dtt_plus"][0]
            assert pair["row"]["ops"]["multiplications"] <= 16
        assert summary["op_counts"]["dense_kernel_mults_max"] <= 16
        assert summary["clustering"]["1"]["assignment"] == [0, 0]
        assert isinstance(summary["int_vs_float_gap_pp"], float)

    def test_config_subset(self):
        rep = run_experiment({**SMALL, "configs": ["mts+sep-klt"], "cluster_k": []})
        assert set(rep["summary"]["bd_rate"]) == {"mts+sep-klt"}
        assert "op_counts" not in rep["summary"]

    def test_dataset_inputs(self, tmp_path):
        from intdtt.cli import main

        assert main(["synth", "--out-dir", str(tmp_path), "--config", _write(tmp_path, SMALL)]) == 0
        cfg = {k: v for k, v in SMALL.items() if k != "modes"}
        cfg.update(train_dataset=str(tmp_path / "train.dttp"), test_dataset=str(tmp_path / "test.dttp"),
                   configs=["mts+dtt+"], cluster_k=[])
        rep = run_experiment(cfg)
        assert set(rep["summary"]["modes"]) == {"a", "b"}
        with pytest.raises(ConfigError):
            run_experiment({**cfg, "n": 8})


def _write(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)
