import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tcilab.catalog import build_problem, perturbation_form
from tcilab.errors import InvalidArgumentError, SizeError
from tcilab.girsanov import coupling_cost, simulate_coupled
from tcilab.sde import PathEnsemble, TimeGrid
from tcilab.transport import (cost_matrix, empirical_w2_exact, empirical_w2_sinkhorn, solve_exact,
                              solve_sinkhorn, w2_confidence_interval, write_matrix_csv)

import oracles

G = TimeGrid(1.0, 4)


def const(values, d=1, grid=G):
    v = np.asarray(values, dtype=float).reshape(len(values), 1, -1)
    return PathEnsemble(grid, np.repeat(v, grid.n_steps + 1, axis=1).reshape(len(values), -1, d))


def test_cost_matrix_examples():
    assert cost_matrix(const([1.0]), const([1.0])).tolist() == [[0.0]]
    assert cost_matrix(const([0.0]), const([2.0])).tolist() == [[4.0]]
    assert cost_matrix(const([0.0, 1.0]), const([0.0, 1.0])).tolist() == [[0, 1], [1, 0]]


def test_cost_matrix_grid_mismatch():
    with pytest.raises(InvalidArgumentError):
        cost_matrix(const([0.0]), const([0.0], grid=TimeGrid(1.0, 5)))


def test_cost_matrix_chunks_consistent(monkeypatch):
    import tcilab.transport as tr
    rng = np.random.default_rng(0)
    mu = PathEnsemble(G, rng.normal(size=(37, 5, 2)))
    nu = PathEnsemble(G, rng.normal(size=(23, 5, 2)))
    full = cost_matrix(mu, nu)
    monkeypatch.setattr(tr, "_CHUNK_ELEMS", 50)
    assert np.array_equal(full, cost_matrix(mu, nu))


def test_exact_identical_is_zero_with_diagonal_plan():
    mu = const([0.0, 1.0, 3.0])
    r = empirical_w2_exact(mu, mu)
    assert r.value == 0.0
    np.testing.assert_array_equal(r.plan, np.eye(3) / 3)


def test_exact_two_by_two():
    r = solve_exact(np.array([[1.0, 4.0], [4.0, 1.0]]))
    assert r.value == 1.0
    np.testing.assert_array_equal(r.plan, np.eye(2) / 2)


def test_exact_three_by_three_constant_paths():
    r = empirical_w2_exact(const([0, 1, 2]), const([0.5, 1.5, 2.5]))
    assert r.value == pytest.approx(0.25, abs=1e-15)
    C = cost_matrix(const([0, 1, 2]), const([0.5, 1.5, 2.5]))
    assert oracles.brute_force_assignment(C) == pytest.approx(0.25, abs=1e-15)


def test_exact_cap():
    mu = const(np.arange(10.0))
    with pytest.raises(SizeError, match="sinkhorn"):
        empirical_w2_exact(mu, mu, cap=50)


@given(arrays(np.float64, (5, 5), elements=st.floats(0, 100)))
def test_exact_matches_brute_force(C):
    assert solve_exact(C).value == pytest.approx(oracles.brute_force_assignment(C), rel=1e-12, abs=1e-12)


@given(st.integers(0, 2 ** 32), st.integers(1, 6), st.integers(1, 6))
def test_exact_general_weights_feasible_and_symmetric(seed, n, m):
    rng = np.random.default_rng(seed)
    mu = PathEnsemble(G, rng.normal(size=(n, 5, 1)), weights=rng.dirichlet(np.ones(n)))
    nu = PathEnsemble(G, rng.normal(size=(m, 5, 1)), weights=rng.dirichlet(np.ones(m)))
    r = empirical_w2_exact(mu, nu)
    np.testing.assert_allclose(r.plan.sum(axis=1), mu.weights, atol=1e-8)
    np.testing.assert_allclose(r.plan.sum(axis=0), nu.weights, atol=1e-8)
    assert r.value == pytest.approx((r.plan * cost_matrix(mu, nu)).sum(), abs=1e-10)
    assert empirical_w2_exact(nu, mu).value == pytest.approx(r.value, rel=1e-9, abs=1e-12)


def test_exact_symmetry_uniform_is_exact():
    rng = np.random.default_rng(3)
    mu, nu = PathEnsemble(G, rng.normal(size=(30, 5, 2))), PathEnsemble(G, rng.normal(size=(30, 5, 2)))
    assert empirical_w2_exact(mu, nu).value == empirical_w2_exact(nu, mu).value


def test_zero_weight_paths_dropped():
    mu = PathEnsemble(G, const([0.0, 100.0]).values, weights=[1.0, 0.0])
    nu = const([1.0])
    r = empirical_w2_exact(mu, nu)
    assert r.value == pytest.approx(1.0)
    assert r.plan[1].sum() == 0.0


def test_lp_matches_assignment_for_uniform():
    rng = np.random.default_rng(2)
    C = rng.uniform(size=(7, 7))
    lp = solve_exact(C, a=np.full(7, 1 / 7), b=np.full(7, 1 / 7) + 0.0)
    assign = solve_exact(C)
    assert lp.value == pytest.approx(assign.value, rel=1e-9)
    lp2 = solve_exact(C, a=np.r_[np.full(6, 0.1), 0.4], b=np.full(7, 1 / 7))
    assert lp2.value >= 0


def test_sinkhorn_examples():
    mu = const([0.0, 0.3, 1.0])
    assert empirical_w2_sinkhorn(mu, mu, 1e-3).value <= 1e-2
    r = solve_sinkhorn(np.array([[1.0, 4.0], [4.0, 1.0]]), epsilon=1e-3)
    assert abs(r.value - 1.0) <= 1e-2 and r.converged and r.method == "entropic"
    for eps in (1e-3, 1.0, 100.0):
        assert empirical_w2_sinkhorn(const([0.0]), const([2.0]), eps).value == pytest.approx(4.0)


def test_sinkhorn_non_convergence_is_flagged():
    rng = np.random.default_rng(0)
    C = rng.uniform(size=(8, 8)) * 10
    r = solve_sinkhorn(C, epsilon=1e-3, max_iters=1, tol=1e-15, warm_start=False)
    assert not r.converged and r.iterations == 1


def test_sinkhorn_rejects_bad_epsilon():
    with pytest.raises(InvalidArgumentError):
        solve_sinkhorn(np.ones((2, 2)), epsilon=0.0)


@given(st.integers(0, 2 ** 32), st.sampled_from([1e-3, 1e-2, 0.1, 1.0]))
def test_sinkhorn_dominates_exact_and_is_feasible(seed, eps):
    rng = np.random.default_rng(seed)
    C = rng.uniform(size=(6, 5)) * 3
    a, b = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(5))
    ex = solve_exact(C, a, b)
    sk = solve_sinkhorn(C, a, b, eps)
    assert sk.value >= ex.value - 1e-9
    np.testing.assert_allclose(sk.plan.sum(axis=1), a, atol=1e-8)
    np.testing.assert_allclose(sk.plan.sum(axis=0), b, atol=1e-8)


def test_sinkhorn_decreases_towards_exact():
    rng = np.random.default_rng(11)
    C = rng.uniform(size=(10, 10))
    ex = solve_exact(C).value
    vals = [solve_sinkhorn(C, epsilon=e).value for e in (1.0, 0.1, 0.01, 1e-3)]
    assert vals[-1] - ex < 1e-2
    assert vals[0] >= vals[-1] - 1e-12


def test_ot_result_json():
    rec = json.loads(solve_exact(np.array([[0.0]])).to_json())
    assert rec == {"value": 0.0, "method": "exact", "epsilon": None, "iterations": 0, "converged": True}


def test_confidence_interval_examples():
    mu = PathEnsemble(G, np.random.default_rng(0).normal(size=(20, 5, 1)))
    lo, hi = w2_confidence_interval(mu, mu, 100, seed=1)
    assert lo == 0.0 and hi >= 0.0
    assert w2_confidence_interval(const([0.0]), const([3.0]), 100) == (9.0, 9.0)
    with pytest.raises(InvalidArgumentError):
        w2_confidence_interval(mu, mu, 50)
    assert w2_confidence_interval(mu, mu, 100, seed=1) == (lo, hi)


def test_confidence_interval_contains_large_sample_estimate():
    problem = build_problem({"dimension": 1, "drift_b": {"form": "ou", "theta": 1.0}})
    pert = perturbation_form({"form": "constant", "value": 1.0}, 1)
    grid = TimeGrid(1.0, 32)
    small = simulate_coupled(problem, pert, grid, 64, seed=21)
    lo, hi = w2_confidence_interval(*small.marginals(), n_bootstrap=200, seed=0)
    # the coupling is deterministic-difference here, so every estimator sees the same value
    big = coupling_cost(simulate_coupled(problem, pert, grid, 10_000, seed=22)).value
    assert lo - 1e-12 <= big <= hi + 1e-12


def test_write_matrix_csv(tmp_path):
    p = tmp_path / "c.csv"
    write_matrix_csv(p, np.array([[0.1, 2.0], [3.0, 4.0]]))
    assert p.read_text().splitlines() == ["0.1,2.0", "3.0,4.0"]
