import copy
import json

import numpy as np
import pytest

from conftest import fixture_path
from oracles import one_stage_expected_cost
from lqg_signaling import (
    DeviationSpec, EquilibriumPath, GameSpec, SimulationConfig, build_equilibrium_path,
    deviation_suite, deviation_test, mc_cost_estimate, path_cost, random_deviations, simulate,
    value_consistency_test,
)
from lqg_signaling.verify import CLASS_NOTE


@pytest.fixture(scope="module")
def path3(scalar3):
    return build_equilibrium_path(scalar3)


@pytest.fixture(scope="module")
def corrupted_path():
    doc = json.loads(fixture_path("scalar_t3_corrupted_path.json").read_text())
    return EquilibriumPath.from_dict(doc["path"])


def _zero_cost(spec):
    z = [np.zeros((spec.m_total, spec.n_total))] * 2
    return GameSpec.build(spec.horizon, spec.n, spec.m, spec.A, spec.B, spec.noise_cov, spec.prior_cov,
                          [np.zeros((spec.m_total,) * 2)] * 2, z, [np.zeros((spec.n_total,) * 2)] * 2)


def test_zero_game(scalar3):
    g = _zero_cost(scalar3)
    p = build_equilibrium_path(g)
    cfg = SimulationConfig(n_traj=500, seed=3)
    for est in mc_cost_estimate(g, p, {}, cfg):
        assert est.mean == 0.0 and est.se == 0.0 and est.n == 500
    rep = value_consistency_test(g, p, cfg)
    assert rep["passed"]
    assert all(pl["target"] == 0.0 for pl in rep["players"])


def test_deterministic_degenerate_game():
    z = np.zeros((1, 1))
    g = GameSpec.build(3, (1, 1), (1, 1), [np.array([[0.9]]), np.array([[0.7]])],
                       [np.array([[0.5, 0.2]]), np.array([[0.1, 0.6]])], [z, z], [z, z],
                       [np.eye(2)] * 2, [0.5 * np.ones((2, 2))] * 2, [np.eye(2)] * 2,
                       prior_mean=[np.array([1.0]), np.array([-0.5])])
    p = build_equilibrium_path(g)
    cfg = SimulationConfig(n_traj=4, seed=0)
    est = mc_cost_estimate(g, p, {}, cfg)
    traj = simulate(g, p, cfg).trajectory(0)
    for i in range(2):
        assert est[i].se == 0.0
        assert est[i].mean == pytest.approx(path_cost(g, i, traj), rel=1e-12)
        assert est[i].mean > 0


def test_one_stage_closed_form(scalar3):
    g = scalar3.with_horizon(1)
    p = build_equilibrium_path(g)
    L = p.stage(1).L
    exact = one_stage_expected_cost(g, L)
    est = mc_cost_estimate(g, p, {}, SimulationConfig(n_traj=100_000, seed=11))
    for i in range(2):
        assert abs(est[i].mean - exact[i]) <= 3 * est[i].se
        v = p.stage(1).values[i]
        assert float(np.trace(v.V[:1, :1] @ g.prior_cov[i]) + v.rho) == pytest.approx(exact[i], rel=1e-10)
    assert value_consistency_test(g, p, SimulationConfig(n_traj=100_000, seed=11))["passed"]


def test_requires_two_samples(scalar3, path3):
    with pytest.raises(ValueError):
        mc_cost_estimate(scalar3, path3, {}, SimulationConfig(n_traj=1))


def test_zero_deviation_is_exactly_zero(scalar3, path3):
    zero = DeviationSpec(0, (1, 2, 3), (np.zeros((1, 1)),) * 3, (np.zeros((1, 2)),) * 3, 1.0)
    v = deviation_test(scalar3, path3, zero, SimulationConfig(n_traj=2000, seed=4))
    assert v.delta == 0.0 and v.se == 0.0 and v.passed


def test_common_random_numbers(scalar3, path3):
    cfg = SimulationConfig(n_traj=300, seed=8)
    dev = random_deviations(scalar3, path3, 1, 1, 0.1, 0)[0]
    a = simulate(scalar3, path3, cfg)
    b = simulate(scalar3, path3, cfg.with_overrides(dev.overrides(scalar3, path3)))
    np.testing.assert_array_equal(a.x[:, 0], b.x[:, 0])
    np.testing.assert_array_equal(a.w, b.w)


def test_random_deviations_shape_and_norm(scalar3, path3):
    devs = random_deviations(scalar3, path3, 0, 5, 0.1, 7)
    assert len(devs) == 5
    for d in devs:
        total = sum(np.sum(a ** 2) for a in d.dL) + sum(np.sum(a ** 2) for a in d.dM)
        assert total == pytest.approx(1.0)
        assert d.stages == (1, 2, 3) and d.epsilon == 0.1
    again = random_deviations(scalar3, path3, 0, 5, 0.1, 7)
    np.testing.assert_array_equal(devs[3].dM[1], again[3].dM[1])


def test_suite_passes_and_is_deterministic(scalar3, path3):
    before = copy.deepcopy(path3.to_dict())
    cfg = SimulationConfig(n_traj=20_000, seed=1)
    a = deviation_suite(scalar3, path3, cfg, count=5)
    b = deviation_suite(scalar3, path3, cfg, count=5)
    assert a["passed"] and a["note"] == CLASS_NOTE
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert path3.to_dict() == before


def test_large_deviations_cost_more(scalar3, path3):
    # away from the local regime every unilateral change is strictly worse
    rep = deviation_suite(scalar3, path3, SimulationConfig(n_traj=20_000, seed=2), count=5, epsilon=1.0)
    assert all(r["delta_cost"] > 2 * r["se"] for r in rep["results"])


def test_corrupted_path_is_rejected(scalar3, corrupted_path):
    assert np.all(corrupted_path.stage(2).L[0] == 0)
    rep = deviation_suite(scalar3, corrupted_path, SimulationConfig(n_traj=20_000, seed=0))
    assert not rep["passed"] and rep["n_failed"] >= 1
    failed = [r for r in rep["results"] if not r["passed"]]
    assert all(r["deviation"]["player"] == 1 for r in failed)


def test_value_consistency(scalar3, path3, corrupted_path):
    rep = value_consistency_test(scalar3, path3, SimulationConfig(n_traj=100_000, seed=6))
    assert rep["passed"]
    assert [s["t"] for s in rep["players"][0]["stages"]] == [1, 2, 3]
    bad = value_consistency_test(scalar3, corrupted_path, SimulationConfig(n_traj=100_000, seed=6))
    assert not bad["passed"]
