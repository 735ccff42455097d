import dataclasses
import json

import numpy as np
import pytest

from conftest import random_box_points
from lpvembed.lpvcore import (SCHEMA, SchemaError, assemble_lpv, bound_violations,
                              compute_bounds, dumps_model, eval_lpv, export_model,
                              import_model, loads_model, lpv_matrices, true_dynamics)
from lpvembed.bench import get_case
from lpvembed.pipeline import RunConfig, full_rank, prepare
from lpvembed.schedpca import reconstruct_e, residual_vectors
from lpvembed.sysmodel import parse_system


def relative_errors(model, X, U):
    M, _ = lpv_matrices(model, X)
    pred = np.einsum("kij,kj->ki", M, np.hstack([X, U]))
    xd, y = true_dynamics(model.sys, X, U)
    true = np.hstack([xd, y])
    return np.linalg.norm(pred - true, axis=1) / np.linalg.norm(true, axis=1)


@pytest.fixture(scope="module")
def toy_full(toy_stages):
    return toy_stages.model(v=full_rank(toy_stages))


@pytest.fixture(scope="module")
def ex1_model(example1_stages):
    return example1_stages.model(v=3)


class TestExactness:
    def test_toy_full_rank(self, toy_full, rng):
        X = random_box_points(toy_full.sys, rng, 300, zero_fraction=0.0)
        U = rng.normal(size=(300, 1))
        assert relative_errors(toy_full, X, U).max() <= 1e-8

    def test_robot_full_rank(self, robot_stages, rng):
        model = robot_stages.model(v=full_rank(robot_stages))
        X = random_box_points(model.sys, rng, 300, zero_fraction=0.0)
        U = rng.normal(size=(300, 2))
        assert relative_errors(model, X, U).max() <= 1e-8

    def test_eval_lpv_matches_matrices(self, toy_full, rng):
        x, u = rng.uniform(-1, 1, size=2), np.array([0.7])
        res = eval_lpv(toy_full, x, u)
        xd, y = true_dynamics(toy_full.sys, x[None], u[None])
        np.testing.assert_allclose(res.xdot, xd[0], rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(res.y, y[0], rtol=1e-9, atol=1e-12)
        assert res.A.shape == (2, 2) and res.B.shape == (2, 1)
        assert res.C.shape == (1, 2) and res.D.shape == (1, 1)

    def test_origin_maps_to_zero(self, ex1_model):
        res = eval_lpv(ex1_model, np.zeros(2), np.zeros(1))
        np.testing.assert_array_equal(res.xdot, 0.0)
        np.testing.assert_array_equal(res.y, 0.0)

    def test_dimension_check(self, ex1_model):
        with pytest.raises(ValueError):
            eval_lpv(ex1_model, np.zeros(3), np.zeros(1))

    def test_truncated_model_is_affine_in_theta(self, ex1_model, rng):
        X = rng.uniform(-0.2, 0.2, size=(1, 2))
        t1, t2 = rng.normal(size=(2, 1, ex1_model.v))
        M1, _ = lpv_matrices(ex1_model, X, t1)
        M2, _ = lpv_matrices(ex1_model, X, t2)
        Mm, _ = lpv_matrices(ex1_model, X, (t1 + t2) / 2)
        np.testing.assert_allclose(Mm, (M1 + M2) / 2, rtol=1e-12, atol=1e-12)


class TestAssembly:
    def test_scheduling_scenario1(self, ex1_model):
        assert [s.name for s in ex1_model.scheduling] == ["theta1", "theta2", "theta3"]
        assert ex1_model.state_degree == 0

    def test_scheduling_includes_states_when_polynomial(self, example1):
        stages = prepare(get_case("example1-s2").config(samples=600), example1)
        model = stages.model(v=2)
        assert [s.name for s in model.scheduling] == ["x1", "x2", "theta1", "theta2"]

    def test_wrong_reduction_size(self, example1_stages):
        red = example1_stages.reduce(v=1)
        red = dataclasses.replace(red, U_s=red.U_s[:4])
        with pytest.raises(ValueError, match="rows"):
            assemble_lpv(example1_stages.factorization, red)

    def test_bounds_cover_samples(self, ex1_model, example1_stages):
        assert bound_violations(ex1_model, example1_stages.samples.points) == 0.0
        vals = ex1_model.schedule(example1_stages.samples.points)
        for c, s in enumerate(ex1_model.scheduling):
            span = vals[:, c].max() - vals[:, c].min()
            assert s.lower == pytest.approx(vals[:, c].min() - 0.025 * span)
            assert s.upper == pytest.approx(vals[:, c].max() + 0.025 * span)

    def test_state_bounds_cover_domain(self, example1):
        stages = prepare(get_case("example1-s2").config(samples=300), example1)
        model = compute_bounds(stages.model(v=1), stages.samples, margin=0.0)
        x1 = model.scheduling[0]
        assert x1.lower == pytest.approx(-0.25, abs=1e-11)
        assert x1.upper == pytest.approx(1.0, abs=1e-11)

    def test_violations_outside(self, ex1_model):
        far = np.array([[1e3, 1e3]])
        assert bound_violations(ex1_model, far) == 1.0

    def test_summary(self, ex1_model):
        text = ex1_model.summary()
        assert "v=3" in text and "theta3" in text


class TestSerialisation:
    def test_round_trip_values(self, ex1_model, tmp_path, rng):
        path = tmp_path / "m.json"
        export_model(ex1_model, path)
        back = import_model(path)
        X = random_box_points(ex1_model.sys, rng, 100)
        M1, t1 = lpv_matrices(ex1_model, X)
        M2, t2 = lpv_matrices(back, X)
        np.testing.assert_allclose(M2, M1, rtol=0, atol=1e-12)
        np.testing.assert_allclose(t2, t1, rtol=0, atol=1e-12)
        assert [s.name for s in back.scheduling] == [s.name for s in ex1_model.scheduling]
        assert [(s.lower, s.upper) for s in back.scheduling] == \
               [(s.lower, s.upper) for s in ex1_model.scheduling]

    def test_round_trip_text_stable(self, ex1_model):
        text = dumps_model(ex1_model)
        assert dumps_model(loads_model(text)) == text

    def test_document_layout(self, ex1_model):
        doc = json.loads(dumps_model(ex1_model))
        assert doc["schema"] == SCHEMA
        assert doc["dims"] == {"n": 2, "m": 1, "q": 1, "v": 3}
        assert len(doc["blocks"]["A"]) == 2 and len(doc["blocks"]["A"][0]) == 2
        assert len(doc["blocks"]["D"]) == 1 and len(doc["blocks"]["D"][0]) == 1
        assert len(doc["blocks"]["A"][0][0]["theta"]) == 4
        assert doc["factor"]["order"] == [1, 2]
        assert doc["provenance"]["seed"] == 1

    def test_robot_has_empty_output_blocks(self, robot_stages):
        doc = json.loads(dumps_model(robot_stages.model(v=3)))
        assert doc["blocks"]["C"] == [] and doc["blocks"]["D"] == []

    @pytest.mark.parametrize("mutate, match", [
        (lambda d: d.update(schema="lpv-0"), "schema"),
        (lambda d: d["blocks"]["A"].pop(), "block A"),
        (lambda d: d["blocks"]["B"][0][0]["theta"].pop(), "theta coefficients"),
        (lambda d: d["pca"]["mu"].pop(), "pca"),
        (lambda d: d.pop("fits"), "corrupted"),
        (lambda d: d["scheduling"][0].update(kind="input"), "kind"),
    ])
    def test_schema_errors(self, ex1_model, mutate, match):
        doc = json.loads(dumps_model(ex1_model))
        mutate(doc)
        with pytest.raises(SchemaError, match=match):
            loads_model(json.dumps(doc))

    def test_not_json(self):
        with pytest.raises(SchemaError):
            loads_model("{nope")


class TestReferenceValues:
    def test_state_bounds_with_default_margin(self, toy_sys):
        model = prepare(RunConfig(pf=2, pg=1, samples=300), toy_sys).model(v=1)
        x1 = next(s for s in model.scheduling if s.name == "x1")
        assert x1.lower == pytest.approx(-1.05) and x1.upper == pytest.approx(1.05)

    def test_zero_residual_system(self):
        sys = parse_system("states 2\ninputs 1\noutputs 0\ndomain x1 -1 1\ndomain x2 -1 1\n"
                           "f[1] = x2\nf[2] = -x1 + x1^2*x2\ng[2][1] = 1 + x1\n")
        stages = prepare(RunConfig(pf=3, pg=1, gamma=0.0, samples=300), sys)
        model = stages.model(v=1)
        theta = [s for s in model.scheduling if s.kind == "theta"]
        assert all(max(abs(s.lower), abs(s.upper)) < 1e-6 for s in theta)
        X = np.array([[0.3, -0.4]])
        M, _ = lpv_matrices(model, X)
        np.testing.assert_allclose(M[0, :, :2], stages.factorization.beta_values(X)[0], atol=1e-8)
        np.testing.assert_allclose(M[0, 1, 2], 1.3, atol=1e-8)

    def test_truncation_error_is_slot_error(self, example1_stages, rng):
        full = example1_stages.model(v=full_rank(example1_stages))
        trunc = example1_stages.model(v=2)
        X = random_box_points(example1_stages.sys, rng, 20)
        diff = lpv_matrices(trunc, X)[0] - lpv_matrices(full, X)[0]
        e = residual_vectors(example1_stages.factorization, X)
        gap = reconstruct_e(trunc.reduction, trunc.theta(X)) - e
        n, m, q = 2, 1, 1
        for i in range(n + q):
            for k in range(n):
                np.testing.assert_allclose(diff[:, i, k], gap[:, i * n + k], atol=1e-9)
            for j in range(m):
                np.testing.assert_allclose(diff[:, i, n + j], gap[:, n * (n + q) + i * m + j],
                                           atol=1e-9)

    def test_schema_version_declared(self, ex1_model):
        assert json.loads(dumps_model(ex1_model))["schema"] == "lpv-1"
