import numpy as np
import pytest

from shyver.casestudy import CaseStudy
from shyver.model import (
    PointOutsideDomain,
    UndefinedKernel,
    eval_dynamics,
    model_from_dict,
    sample_jump_target,
    validate_model,
)
from tests.helpers import casestudy_model_doc


def test_two_mode_example_is_valid(two_mode):
    assert validate_model(two_mode) == []


def test_half_mass_density_reported(two_mode_doc):
    two_mode_doc["initial_density"][0]["weight"] = "1/2"
    report = validate_model(model_from_dict(two_mode_doc))
    assert any("initial density not normalized" in line for line in report)


def test_negative_jump_rate_reported(two_mode_doc):
    two_mode_doc["jump_rate"]["1"] = "-1"
    report = validate_model(model_from_dict(two_mode_doc))
    assert any("negative jump rate" in line for line in report)


def test_kernel_weights_must_sum_to_one(two_mode_doc):
    two_mode_doc["jump_kernel"][2]["weight"] = 0.5
    assert validate_model(model_from_dict(two_mode_doc))


def test_two_mode_dynamics(two_mode):
    for x in (0.0, 0.3, 1.0):
        f, g, r = eval_dynamics(two_mode, "1", [x])
        assert f.tolist() == [1.0] and g.tolist() == [[1.0]]
        assert r == pytest.approx(1 / 3)
    with pytest.raises(PointOutsideDomain):
        eval_dynamics(two_mode, "1", [1.5])


@pytest.fixture(scope="module")
def cs_model():
    cs = CaseStudy(n=3, seed=4)
    return cs, model_from_dict(casestudy_model_doc(cs))


def test_casestudy_dynamics_vanish_at_origin(cs_model):
    cs, model = cs_model
    assert validate_model(model) == []
    for j in range(cs.m):
        f, _, _ = eval_dynamics(model, str(j), np.zeros(cs.n))
        assert np.all(f == 0)


def test_casestudy_dynamics_match_closed_form(cs_model, rng):
    cs, model = cs_model
    for _ in range(20):
        j = int(rng.integers(cs.m))
        x = rng.uniform(-1, 1, cs.n)
        f, _, _ = eval_dynamics(model, str(j), x)
        expect = cs.A[j] @ x + cs.c[j] * np.abs(x).max() * x
        np.testing.assert_allclose(f, expect, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(cs.drift(j, x), expect, rtol=1e-12, atol=1e-15)


def test_eval_dynamics_is_pure(two_mode):
    a = eval_dynamics(two_mode, "2", [3.0])
    b = eval_dynamics(two_mode, "2", [3.0])
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_forced_jump_from_boundary(two_mode, rng):
    for _ in range(200):
        mode, x = sample_jump_target(two_mode, "1", [1.0], rng)
        assert mode == "2" and 2.0 <= x[0] <= 4.0


def test_point_mass_kernel(two_mode_doc, rng):
    two_mode_doc["jump_kernel"][2]["target_box"] = {"lo": [3], "hi": [3]}
    model = model_from_dict(two_mode_doc)
    draws = {tuple(sample_jump_target(model, "1", [0.4], rng)[1]) for _ in range(50)}
    assert draws == {(3.0,)}


def test_jump_target_histogram_is_uniform(two_mode, rng):
    xs = np.array([sample_jump_target(two_mode, "1", [1.0], rng)[1][0] for _ in range(100_000)])
    hist, _ = np.histogram(xs, bins=20, range=(2.0, 4.0))
    assert 0.5 * np.abs(hist / xs.size - 1 / 20).sum() < 0.02


def test_jump_sampling_replays_bitwise(two_mode):
    def run(seed):
        g = np.random.Generator(np.random.Philox(seed))
        return [sample_jump_target(two_mode, "2", [3.1], g)[1][0] for _ in range(100)]

    assert run(7) == run(7)


def test_missing_kernel_raises(two_mode_doc, rng):
    two_mode_doc["jump_kernel"] = two_mode_doc["jump_kernel"][:2]
    model = model_from_dict(two_mode_doc)
    with pytest.raises(UndefinedKernel):
        sample_jump_target(model, "1", [0.5], rng)
