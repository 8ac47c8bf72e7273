import json

import pytest

from intdtt.cli import main

CFG = {
    "n": 4,
    "train_count": 200,
    "test_count": 200,
    "modes": [{"name": "a", "rho_r": 0.9, "rho_c": 0.8, "boundary_r": 0.3, "boundary_c": 0.6},
              {"name": "b", "rho_r": 0.8, "rho_c": 0.9, "boundary_r": 0.6, "boundary_c": 0.3}],
    "steps": [4, 8, 16, 32],
    "rdot_max_iter": 3,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps(CFG))
    assert main(["synth", "--config", str(d / "cfg.json"), "--out-dir", str(d)]) == 0
    assert main(["learn", "--data", str(d / "train.dttp"), "--out-dir", str(d)]) == 0
    return d


class TestCli:
    def test_learn_output(self, workdir):
        data = json.loads((workdir / "learned.json").read_text())
        assert set(data["modes"]) == {"a", "b"}

    def test_quantize_kernel(self, workdir):
        assert main(["quantize-kernel", "--params", str(workdir / "learned.json"), "--n", "4",
                     "--out-dir", str(workdir)]) == 0
        kernels = json.loads((workdir / "kernels.json").read_text())["kernels"]
        assert set(kernels["a"]) == {"row", "col", "bits"}

    def test_encode_and_bdrate(self, workdir, capsys):
        assert main(["encode", "--data", str(workdir / "test.dttp"), "--params", str(workdir / "learned.json"),
                     "--config", str(workdir / "cfg.json"), "--out-dir", str(workdir)]) == 0
        assert main(["bdrate", "--rd", str(workdir / "rd.csv"), "--test", "mts+dtt+",
                     "--out-dir", str(workdir)]) == 0
        assert "average" in capsys.readouterr().out
        assert "per_mode" in json.loads((workdir / "bdrate.json").read_text())

    def test_cluster_modes(self, workdir):
        assert main(["cluster-modes", "--params", str(workdir / "learned.json"), "--k", "1", "--n", "4",
                     "--out-dir", str(workdir)]) == 0
        assert (workdir / "groups_k1.csv").read_text().startswith("mode,group\n")
        assert main(["cluster-modes", "--params", str(workdir / "learned.json"), "--k", "5",
                     "--out-dir", str(workdir)]) == 1

    def test_report(self, workdir):
        cfg = {**CFG, "configs": ["mts+dtt+"]}
        (workdir / "small.json").write_text(json.dumps(cfg))
        assert main(["report", "--config", str(workdir / "small.json"), "--seed", "3",
                     "--out-dir", str(workdir / "rep")]) == 0
        assert json.loads((workdir / "rep" / "summary.json").read_text())["config"]["seed"] == 3

    def test_invalid_inputs_exit_one(self, workdir, tmp_path):
        (tmp_path / "bad.json").write_text(json.dumps({"bogus": 1}))
        assert main(["report", "--config", str(tmp_path / "bad.json"), "--out-dir", str(tmp_path)]) == 1
        (tmp_path / "junk.json").write_text("{not json")
        assert main(["report", "--config", str(tmp_path / "junk.json"), "--out-dir", str(tmp_path)]) == 1
        (tmp_path / "bad.dttp").write_bytes(b"NOPE")
        assert main(["learn", "--data", str(tmp_path / "bad.dttp"), "--out-dir", str(tmp_path)]) == 1
        assert main(["learn", "--data", str(tmp_path / "missing.dttp"), "--out-dir", str(tmp_path)]) == 1
        assert main(["learn", "--data", str(workdir / "train.dttp"), "--mode", "zzz",
                     "--out-dir", str(tmp_path)]) == 1
        assert main(["bdrate", "--rd", str(workdir / "rd.csv"), "--test", "nope"]) == 1

    def test_numerical_failure_exit_two(self, tmp_path, monkeypatch):
        import intdtt.cli as cli
        from intdtt.graph_learning import LearningError

        def fail(*args, **kwargs):
            raise LearningError("forced")

        monkeypatch.setattr(cli, "run_experiment", fail)
        assert main(["report", "--out-dir", str(tmp_path)]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit):
            main([])
