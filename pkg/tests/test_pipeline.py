import json

import pytest

from lpvembed.pipeline import RunConfig, embed, full_rank, prepare


class TestRunConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(pf=0), dict(pg=-1), dict(gamma=-1.0), dict(samples=1), dict(strategy="sobol"),
        dict(sched=0), dict(vm_target=0.0), dict(vm_target=1.5), dict(sched=2, vm_target=0.9),
        dict(margin=-0.1), dict(gamma_scale=-1.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RunConfig(**kwargs)

    def test_from_file_with_overrides(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"model": "a.nlsys", "pf": 2, "order": [2, 1], "seed": 4}))
        cfg = RunConfig.from_file(path, seed=9, pg=None)
        assert (cfg.model, cfg.pf, cfg.pg, cfg.seed, cfg.order) == ("a.nlsys", 2, 0, 9, (2, 1))
        assert cfg.as_dict()["order"] == [2, 1]

    def test_from_file_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"degree": 2}))
        with pytest.raises(ValueError, match="unknown"):
            RunConfig.from_file(path)

    def test_provenance(self):
        prov = RunConfig(pf=2, seed=3).provenance()
        assert prov["degrees"] == {"p_f": 2, "p_g": 0} and prov["seed"] == 3


class TestPipeline:
    def test_embed_defaults_to_full_rank(self, toy_sys):
        model, stages = embed(RunConfig(samples=200), toy_sys)
        assert model.v == full_rank(stages)

    def test_sched_and_target(self, toy_sys):
        model, _ = embed(RunConfig(samples=200, sched=2), toy_sys)
        assert model.v == 2
        model, stages = embed(RunConfig(samples=200, vm_target=0.9), toy_sys)
        assert model.reduction.vm >= 0.9

    def test_order_is_one_based(self, toy_sys):
        stages = prepare(RunConfig(samples=100, order=(2, 1)), toy_sys)
        assert stages.factorization.order == (1, 0)

    def test_bad_order(self, toy_sys):
        with pytest.raises(ValueError):
            prepare(RunConfig(samples=100, order=(1, 1)), toy_sys)

    def test_model_path(self, tmp_path):
        from lpvembed.bench import model_text
        path = tmp_path / "ex.nlsys"
        path.write_text(model_text("example1.nlsys"))
        model, _ = embed(RunConfig(model=str(path), samples=300, sched=1))
        assert model.n == 2

    def test_no_model(self):
        with pytest.raises(ValueError):
            prepare(RunConfig())
