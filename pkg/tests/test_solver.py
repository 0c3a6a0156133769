import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_game
from oracles import dcj_by_evaluation, stage_objective, vbar_by_placement
from lqg_signaling import (
    GameSpec, NonConvergence, SingularStage, SolverOptions, StackedLayout, ValueCache, ValueQuadratic,
    assemble_dcj, assemble_vbar, evaluate_value, kalman_gain, solve_affine_term,
    solve_signaling_gain, solve_stage, solve_steady_state, terminal_gain, update_rho, update_value,
)
from lqg_signaling.solver import gain_equation, solve_stage_cached, zero_value


def zero_oracle(spec):
    return lambda sigma_next: zero_value(spec)


def test_layout_lengths():
    lay = StackedLayout((2, 3), (1, 2), 1)
    assert lay.e_len == 3 + 5 and lay.z_len == 2 + 3 + 5 and lay.y_len == 3 + 5 + 3 + 5
    assert lay.e_own_mean() == 2 and lay.y["x_next"] == slice(8, 11)


def test_vbar(example1):
    V0 = np.zeros((6, 6))
    vb = assemble_vbar(example1, 0, V0)
    np.testing.assert_array_equal(vb, vbar_by_placement(example1, 0, V0))
    rng = np.random.default_rng(1)
    V = rng.standard_normal((6, 6))
    V = V + V.T
    vb = assemble_vbar(example1, 0, V)
    np.testing.assert_array_equal(vb, vb.T)
    assert vb[0, 0] == 1.0 and vb[0, 2] == 1.0 and vb[3, 0] == 1.0
    assert vb[6, 6] == V[0, 0] and vb[7, 10] == V[1, 4] and vb[11, 6] == V[5, 0]
    with pytest.raises(ValueError):
        assemble_vbar(example1, 0, np.zeros((5, 5)))


def test_dcj_example_dims_and_zero_blocks(example1):
    L = (np.zeros((1, 2)),) * 2
    G = (np.zeros((2, 1)),) * 2
    m1, m2 = assemble_dcj(example1, 1, L, G)
    assert m1.D.shape == (12, 7) and m1.C.shape == (12, 2) and m1.J.shape == (12, 2)
    # next-mean rows: own mean -> A^1 on its columns, opponent mean -> A^2 on its columns
    np.testing.assert_array_equal(m1.D[8:10], np.hstack([np.zeros((2, 3)), 0.9 * np.eye(2), np.zeros((2, 2))]))
    np.testing.assert_array_equal(m1.D[10:12], np.hstack([np.zeros((2, 5)), 0.9 * np.eye(2)]))
    np.testing.assert_array_equal(m1.C[8:], 0.0)
    assert m1.Du.shape == (12, 1) and m1.De1.shape == (12, 2) and m1.De23.shape == (12, 4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n1=st.integers(1, 3), n2=st.integers(1, 2),
       m1=st.integers(1, 2), m2=st.integers(1, 2))
def test_dcj_matches_evaluation_oracle(seed, n1, n2, m1, m2):
    rng = np.random.default_rng(seed)
    g = random_game(rng, n=(n1, n2), m=(m1, m2), horizon=1)
    L = tuple(rng.standard_normal((g.m[i], g.n[i])) for i in range(2))
    G = tuple(rng.standard_normal((g.n[i], g.m[i])) for i in range(2))
    mats = assemble_dcj(g, 1, L, G)
    for i in range(2):
        D, C, J = dcj_by_evaluation(g, 1, i, L, G)
        np.testing.assert_allclose(mats[i].D, D, atol=1e-13)
        np.testing.assert_allclose(mats[i].C, C, atol=1e-13)
        np.testing.assert_allclose(mats[i].J, J, atol=1e-13)


def test_terminal_gain(example1):
    sigma = example1.prior_cov
    L, diag = solve_signaling_gain(example1, 1, sigma, zero_oracle(example1))
    for i in range(2):
        np.testing.assert_allclose(L[i], [[-1.0, -1.0]], atol=1e-15)
    assert diag["outer_iterations"] == 1
    z = GameSpec.build(1, (1, 1), (1, 1), [np.eye(1)] * 2, [np.ones((1, 2))] * 2, [np.eye(1)] * 2,
                       [np.eye(1)] * 2, [np.eye(2)] * 2, [np.zeros((2, 2))] * 2, [np.eye(2)] * 2)
    L, _ = solve_signaling_gain(z, 1, z.prior_cov, zero_oracle(z))
    assert np.all(L[0] == 0) and np.all(L[1] == 0)


def test_gain_with_stationary_continuation(example1):
    ss = solve_steady_state(example1, tol=1e-12)
    cont = tuple(ValueQuadratic(v, 0.0) for v in ss.V)
    L, _ = solve_signaling_gain(example1, 1, ss.sigma, lambda s: cont)
    for i in range(2):
        np.testing.assert_allclose(L[i], [[-1.062, -1.062]], atol=5e-3)
        np.testing.assert_allclose(L[i], ss.L[i], atol=1e-8)


def _affine_oracle(spec, t, L, G, vbars):
    """Block first-order conditions in m from the evaluation-oracle matrices."""
    rows, rhs = [], []
    m = spec.m
    for i in range(2):
        D, C, _ = dcj_by_evaluation(spec, t, i, L, G)
        Du = D[:, :m[i]]
        De23 = D[:, m[i] + spec.n[i]:]
        row = vbars[i] @ C
        row = Du.T @ row
        own = np.zeros_like(row)
        own[:, spec.action_slice(i)] = Du.T @ vbars[i] @ Du
        rows.append(row + own)
        rhs.append(Du.T @ vbars[i] @ De23)
    return -np.linalg.lstsq(np.vstack(rows), np.vstack(rhs), rcond=None)[0]


@pytest.mark.parametrize("with_b", [False, True])
def test_affine_term_against_dense_solve(with_b):
    rng = np.random.default_rng(4 + with_b)
    g = random_game(rng, n=(2, 1), m=(1, 1), horizon=1, with_b=with_b)
    L = tuple(rng.standard_normal((g.m[i], g.n[i])) for i in range(2))
    G = tuple(kalman_gain(g.prior_cov[i], L[i]) for i in range(2))
    cont = tuple(ValueQuadratic(0.1 * np.eye(StackedLayout.of(g, i).e_len), 0.0) for i in range(2))
    _, _, _, mats = gain_equation(g, 1, g.prior_cov, L, cont)
    M, info = solve_affine_term(g, mats)
    ref = _affine_oracle(g, 1, L, G, [m.vbar for m in mats])
    np.testing.assert_allclose(M, ref, atol=1e-10)
    assert M.shape == (g.m_total, g.n_total)
    assert info["affine_residual"] < 1e-12 and np.isfinite(info["condition"])
    assert np.all(M @ np.zeros(g.n_total) == 0)


def _swap_symmetric_game(rng):
    n, m = 2, 1
    A = 0.7 * rng.standard_normal((n, n))
    B1 = 0.4 * rng.standard_normal((n, 2))
    Pu = np.array([[0, 1], [1, 0]])
    Px = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    r = rng.standard_normal((6, 6))
    R = r @ r.T / 6 + 0.3 * np.eye(6)
    R = 0.5 * (R + R.T)
    T1, S1, P1 = R[:2, :2], R[:2, 2:], R[2:, 2:]
    T2, S2, P2 = Pu @ T1 @ Pu, Pu @ S1 @ Px, Px @ P1 @ Px
    Q = np.eye(n) * 0.8
    return GameSpec.build(2, (n, n), (m, m), [A, A], [B1, B1 @ Pu], [Q, Q], [np.eye(n)] * 2,
                          [T1, T2], [S1, S2], [P1, P2])


def test_symmetric_game_gives_swapped_affine_terms():
    g = _swap_symmetric_game(np.random.default_rng(1))
    sol = solve_stage_cached(g, 1, g.prior_cov, ValueCache())
    np.testing.assert_allclose(sol.L[0], sol.L[1], atol=1e-10)
    M1, M2 = sol.M[0], sol.M[1]
    np.testing.assert_allclose(M1[:2], M2[2:], atol=1e-10)
    np.testing.assert_allclose(M1[2:], M2[:2], atol=1e-10)


def test_rho_and_value_degenerate_cases(example1):
    L = (np.array([[-1.0, -1.0]]),) * 2
    sigma = example1.prior_cov
    cont = zero_value(example1)
    _, _, _, mats = gain_equation(example1, 1, sigma, L, cont)
    M, _ = solve_affine_term(example1, mats)
    rho = update_rho(example1, sigma, mats, cont)
    for i in range(2):
        J, vb = mats[i].J, mats[i].vbar
        assert rho[i] == pytest.approx(np.trace(sigma[1 - i] @ J.T @ vb @ J))
    zero_mats = tuple(m.with_vbar(np.zeros_like(m.vbar)) for m in mats)
    V = update_value(example1, zero_mats, L, M)
    assert all(np.all(v == 0) for v in V)
    g = GameSpec.build(1, (1, 1), (1, 1), [np.eye(1)] * 2, [np.zeros((1, 2))] * 2, [np.zeros((1, 1))] * 2,
                       [np.zeros((1, 1))] * 2, [np.eye(2)] * 2, [np.ones((2, 2))] * 2, [2 * np.eye(2)] * 2)
    cont = (ValueQuadratic(np.eye(3), 1.5), ValueQuadratic(np.eye(3), -2.0))
    L2 = (np.ones((1, 1)),) * 2
    _, _, _, mats = gain_equation(g, 1, g.prior_cov, L2, cont)
    assert update_rho(g, g.prior_cov, mats, cont) == (1.5, -2.0)


def test_converged_stage_properties(scalar3):
    cache = ValueCache()
    for t in (3, 2, 1):
        sol = solve_stage_cached(scalar3, t, scalar3.prior_cov, cache)
        d = sol.diagnostics
        assert max(d["gain_residual"]) <= 1e-8 and d["affine_residual"] <= 1e-8
        assert min(d["curvature_min_eig"]) > 0
        for v in sol.values:
            assert np.max(np.abs(v.V - v.V.T)) <= 1e-10
            assert np.linalg.eigvalsh(v.V)[0] >= -1e-10


def test_gain_is_local_minimum(example1, scalar3):
    for spec in (example1.with_horizon(3), scalar3):
        sol = solve_stage_cached(spec, 1, spec.prior_cov, ValueCache())
        G = tuple(kalman_gain(sol.sigma[i], sol.L[i]) for i in range(2))
        for i in range(2):
            vb = sol.matrices[i].vbar
            f0 = stage_objective(spec, 1, i, sol.L[i], sol.L, G, vb, sol.sigma[1 - i])
            for r in range(spec.m[i]):
                for c in range(spec.n[i]):
                    for h in (1e-5, -1e-5):
                        Lp = sol.L[i].copy()
                        Lp[r, c] += h
                        assert stage_objective(spec, 1, i, Lp, sol.L, G, vb, sol.sigma[1 - i]) >= f0 - 1e-9


def test_evaluate_value_basics(scalar3):
    T = scalar3.horizon
    z = evaluate_value(scalar3, T + 1, scalar3.prior_cov)
    assert all(np.all(v.V == 0) and v.rho == 0 for v in z)
    one = scalar3.with_horizon(1)
    a = evaluate_value(one, 1, one.prior_cov)
    b = solve_stage(one, 1, one.prior_cov, zero_oracle(one)).values
    for i in range(2):
        np.testing.assert_array_equal(a[i].V, b[i].V)
        assert a[i].rho == b[i].rho
    cache = ValueCache()
    v1 = evaluate_value(scalar3, 1, scalar3.prior_cov, cache)
    v2 = evaluate_value(scalar3, 1, scalar3.prior_cov, cache)
    v3 = evaluate_value(scalar3, 1, scalar3.prior_cov)
    for i in range(2):
        assert v1[i].V.tobytes() == v2[i].V.tobytes() == v3[i].V.tobytes()
    with pytest.raises(ValueError):
        evaluate_value(scalar3, 0, scalar3.prior_cov)


def test_cache_coherence(scalar3, example1):
    for spec in (scalar3, example1.with_horizon(3)):
        sig = tuple(1.3 * s for s in spec.prior_cov)
        a = evaluate_value(spec, 1, sig, ValueCache())
        b = evaluate_value(spec, 1, sig, False)
        for i in range(2):
            np.testing.assert_allclose(a[i].V, b[i].V, atol=1e-12)
            assert a[i].rho == pytest.approx(b[i].rho, abs=1e-12)


def test_cache_quantization():
    c = ValueCache(grid=1e-9)
    sig = (np.array([[1.0]]), np.array([[2.0]]))
    c.put(1, sig, "sol")
    assert c.get(1, (sig[0] + 4e-10, sig[1])) == "sol"
    assert c.get(1, (sig[0] + 2e-9, sig[1])) is None
    assert c.get(2, sig) is None
    assert len(c) == 1 and c.hits == 1 and c.misses == 2


def test_nonconvergence_carries_trace(scalar3):
    opts = SolverOptions(max_iter=1)
    with pytest.raises(NonConvergence) as info:
        evaluate_value(scalar3, 1, scalar3.prior_cov, ValueCache(), opts)
    frames = [t for t, _ in info.value.trace]
    assert frames == sorted(frames, reverse=True) and frames[-1] == 1
    assert info.value.best is not None


def test_singular_stage():
    g = GameSpec.build(1, (1, 1), (1, 1), [np.eye(1)] * 2, [np.zeros((1, 2))] * 2, [np.eye(1)] * 2,
                       [np.eye(1)] * 2, [np.array([[-1.0, 0], [0, 1.0]]), np.eye(2)],
                       [np.ones((2, 2))] * 2, [np.eye(2)] * 2)
    with pytest.raises(SingularStage) as info:
        evaluate_value(g, 1, g.prior_cov)
    assert info.value.player == 0 and info.value.min_eig < 0


def test_random_pd_games_have_psd_values():
    """Strictly convex costs give PSD values and curvature at every converged stage.

    Some random games have no signaling solution at some stage (the gain
    iteration then collapses and raises); those are skipped.
    """
    rng = np.random.default_rng(21)
    converged = 0
    for _ in range(12):
        g = random_game(rng, horizon=3)
        cache = ValueCache()
        try:
            solve_stage_cached(g, 1, g.prior_cov, cache)
        except NonConvergence:
            continue
        converged += 1
        for s in cache._store.values():
            for v in s.values:
                assert np.linalg.eigvalsh(v.V)[0] >= -1e-10
            assert min(s.diagnostics["curvature_min_eig"]) > 0
    assert converged >= 5


def test_collapsing_gain_is_reported():
    g = random_game(np.random.default_rng(21), horizon=3)
    with pytest.raises(NonConvergence, match="collapsing"):
        evaluate_value(g, 1, g.prior_cov)


def test_path_stages_solve_the_single_stage_problem(example2):
    # every on-path gain is a fixed point of the stage map whose continuation
    # is a fresh subgame solve at whatever covariance is queried
    from lqg_signaling import build_equilibrium_path
    g = example2.with_horizon(4)
    path = build_equilibrium_path(g)
    for st in path.stages:
        oracle = lambda s, t=st.t: evaluate_value(g, t + 1, s, False)
        L, diag = solve_signaling_gain(g, st.t, st.sigma, oracle, init=st.L)
        assert diag["outer_iterations"] == 1
        for i in range(2):
            np.testing.assert_allclose(L[i], st.L[i], atol=1e-12)


def test_sweeps_scale_with_horizon(example2):
    from lqg_signaling import build_equilibrium_path
    cache = ValueCache()
    path = build_equilibrium_path(example2, cache)
    assert path.horizon == 30 and path.covariance_residual(example2) == 0.0
    assert cache.solves <= 30 * max(st.diagnostics["sweeps"] for st in path.stages)
    with pytest.raises(NonConvergence) as info:
        build_equilibrium_path(example2, options=SolverOptions(max_sweeps=2))
    assert info.value.partial.horizon == 30
