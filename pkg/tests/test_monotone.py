import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tcilab.catalog import build_problem
from tcilab.errors import DomainError, InvalidArgumentError, NumericalError
from tcilab.monotone import (ConcaveLogPotentialGradient, LinearMonotone, NormalCone, YosidaApprox,
                             check_dissipativity, check_problem_dissipativity, dyadic_ladder,
                             dyson_drift, make_yosida_problem, min_gap, yosida_drift,
                             yosida_resolvent)
from tcilab.sde import TimeGrid, simulate_paths

import oracles

I1 = LinearMonotone(np.eye(1))
HALFLINE = NormalCone("box", 1, lower=0.0)


@pytest.mark.parametrize("op,n,x,expected", [
    (I1, 1, 1.0, 0.5),
    (I1, 3, 1.0, 0.75),
    (HALFLINE, 1, -2.0, 0.0),
    (HALFLINE, 1000, -2.0, 0.0),
])
def test_resolvent_examples(op, n, x, expected):
    assert yosida_resolvent(YosidaApprox(op, n), np.array([x]))[0] == expected


@pytest.mark.parametrize("op,n,x,expected", [(I1, 1, 1.0, -0.5), (HALFLINE, 4, -2.0, 8.0)])
def test_drift_examples(op, n, x, expected):
    assert yosida_drift(YosidaApprox(op, n), np.array([x]))[0] == expected


def test_drift_vanishes_at_zeros_of_A():
    assert yosida_drift(YosidaApprox(I1, 7), np.zeros(1))[0] == 0.0
    assert yosida_drift(YosidaApprox(HALFLINE, 7), np.array([3.0]))[0] == 0.0
    op = ConcaveLogPotentialGradient(1.0, 2)
    # J_n is a fixed point iff 0 in A(x); for the log potential A never vanishes, so b_n != 0
    assert np.all(yosida_drift(YosidaApprox(op, 1), np.array([-1.0, 1.0])) != 0)


def test_identity_yosida_closed_form():
    x = np.random.default_rng(0).normal(size=(100, 4))
    for n in dyadic_ladder(10):
        approx = YosidaApprox(LinearMonotone(np.eye(4)), n)
        np.testing.assert_allclose(approx.drift(x), -n * x / (n + 1), rtol=0, atol=1e-12)
        np.testing.assert_allclose(np.abs(approx.drift(x) + x), np.abs(x) / (n + 1), atol=1e-12)


@pytest.mark.parametrize("x,gamma,expected", [
    ([0.0, 1.0], 1.0, [-1.0, 1.0]),
    ([0.0, 1.0, 3.0], 0.5, [-2 / 3, 1 / 4, 5 / 12]),
    ([0.0, 0.1], 2.0, [-20.0, 20.0]),
])
def test_dyson_examples(x, gamma, expected):
    out = dyson_drift(np.array(x), gamma)
    np.testing.assert_allclose(out, expected, rtol=1e-14)
    np.testing.assert_allclose(out, [float(v) for v in oracles.dyson_direct(x, gamma)], rtol=1e-14)


@pytest.mark.parametrize("x", [[1.0, 0.0], [0.0, 0.0], [0.0, 2.0, 1.0]])
def test_dyson_domain_error(x):
    with pytest.raises(DomainError):
        dyson_drift(np.array(x), 1.0)


def test_dyson_rejects_nonpositive_gamma():
    with pytest.raises(InvalidArgumentError):
        dyson_drift(np.array([0.0, 1.0]), 0.0)
    with pytest.raises(InvalidArgumentError):
        ConcaveLogPotentialGradient(-1.0, 3)


_ordered = st.lists(st.floats(-50, 50), min_size=2, max_size=8, unique=True).map(sorted)


@given(_ordered, st.floats(0.01, 10))
def test_dyson_components_sum_to_zero(x, gamma):
    x = np.array(x)
    if np.min(np.diff(x)) < 1e-6:
        return
    out = dyson_drift(x, gamma)
    assert abs(out.sum()) <= 1e-12 * max(1.0, np.abs(out).max())


def _random_pairs(d, n=1000, seed=0, ordered=False, scale=2.0):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(n, d)) * scale, rng.normal(size=(n, d)) * scale
    if ordered:
        X, Y = np.sort(X, axis=1), np.sort(Y, axis=1)
    return X, Y


OPERATORS = [
    LinearMonotone(np.array([[1.0, 2.0], [-2.0, 0.5]])),
    NormalCone("box", 2, lower=[-1.0, 0.0], upper=[1.0, np.inf]),
    NormalCone("halfspace", 2, normal=[1.0, 1.0], offset=0.5),
    NormalCone("ordered", 2),
    ConcaveLogPotentialGradient(0.7, 2),
]


@pytest.mark.parametrize("op", OPERATORS, ids=lambda o: type(o).__name__ + getattr(o, "kind", ""))
@pytest.mark.parametrize("n", [1, 8, 1024])
def test_yosida_invariants(op, n):
    X, Y = _random_pairs(2, seed=n)
    approx = YosidaApprox(op, n)
    JX, JY = approx.resolvent(X), approx.resolvent(Y)
    dx = np.linalg.norm(X - Y, axis=1)
    assert np.all(np.linalg.norm(JX - JY, axis=1) <= dx * (1 + 1e-9) + 1e-12)
    BX, BY = approx.drift(X), approx.drift(Y)
    assert np.all(((BX - BY) * (X - Y)).sum(axis=1) <= 1e-9 * n * dx ** 2 + 1e-12)
    assert np.all(np.linalg.norm(BX - BY, axis=1) <= 2 * n * dx * (1 + 1e-9) + 1e-12)
    assert np.all(op.contains(JX) | (not isinstance(op, ConcaveLogPotentialGradient)))
    assert not check_dissipativity(approx.drift, (X, Y), tol=1e-9 * n).flagged


def test_resolvent_identity_linear():
    M = np.array([[2.0, 1.0], [-1.0, 0.0]])
    op = LinearMonotone(M)
    X, _ = _random_pairs(2)
    J = op.resolvent(X, 3)
    np.testing.assert_allclose(J + op.apply(J) / 3, X, atol=1e-12)


def test_projection_properties():
    X, _ = _random_pairs(5, seed=1)
    cone = NormalCone("ordered", 5)
    P = cone.resolvent(X, 1)
    assert np.all(cone.contains(P))
    # variational inequality (x - Px) . (y - Px) <= 0 for y in the set
    Y = np.sort(_random_pairs(5, seed=2)[0], axis=1)
    assert np.all(((X - P) * (Y - P)).sum(axis=1) <= 1e-10)
    np.testing.assert_array_equal(cone.resolvent(P, 1), P)


def test_linear_must_be_monotone():
    with pytest.raises(InvalidArgumentError):
        LinearMonotone(np.array([[-1.0]]))


def test_log_potential_resolvent_matches_two_particle_closed_form():
    op = ConcaveLogPotentialGradient(0.5, 2)
    X, _ = _random_pairs(2, seed=3, scale=3.0)
    for n in (1, 4, 1024):
        np.testing.assert_allclose(op.resolvent(X, n), oracles.two_particle_resolvent(X, 0.5 / n),
                                   rtol=0, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_log_potential_resolvent_residual(d):
    op = ConcaveLogPotentialGradient(0.5, d)
    X, _ = _random_pairs(d, seed=d)
    for n in (1, 32, 1024):
        Y = op.resolvent(X, n)
        assert np.all(np.diff(Y, axis=1) > 0)
        # y + (1/n) A(y) = x with A(y) = -dyson_drift(y)
        res = np.abs(Y - (1 / n) * dyson_drift(Y, 0.5) - X).max()
        assert res < 1e-10
        np.testing.assert_allclose(Y.mean(axis=1), X.mean(axis=1), atol=1e-12)


def test_log_potential_resolvent_handles_ties_and_far_points():
    op = ConcaveLogPotentialGradient(0.5, 3)
    X = np.array([[0.0, 0.0, 0.0], [5.0, -5.0, 0.0], [50.0, 50.0 + 1e-9, -50.0], [1e-300, 0.0, -1e-300]])
    Y = op.resolvent(X, 1024)
    assert np.all(np.diff(Y, axis=1) > 0)


def test_log_potential_nonconvergence_reports_residual(monkeypatch):
    import tcilab.monotone as mono
    orig = mono._log_potential_resolvent
    monkeypatch.setattr(mono, "_log_potential_resolvent", lambda X, lam: orig(X, lam, max_iter=0))
    with pytest.raises(NumericalError) as exc:
        ConcaveLogPotentialGradient(0.5, 3).resolvent(np.array([0.0, 0.0, 0.0]), 1)
    assert exc.value.residual > 1e-10


def test_dissipativity_examples():
    P = np.random.default_rng(4).normal(size=(40, 2))
    assert not check_dissipativity(lambda x: -x, P).flagged
    rep = check_dissipativity(lambda x: x, P)
    assert rep.flagged and rep.max_inner > 0
    i, j = rep.witness
    assert rep.max_inner == pytest.approx(np.sum((P[i] - P[j]) ** 2))


def test_dyson_drift_dissipative_on_ordered_cone():
    X, Y = _random_pairs(2, ordered=True, seed=5)
    keep = (np.diff(X, axis=1)[:, 0] > 1e-3) & (np.diff(Y, axis=1)[:, 0] > 1e-3)
    X, Y = X[keep], Y[keep]
    inner = ((dyson_drift(X, 1.0) - dyson_drift(Y, 1.0)) * (X - Y)).sum(axis=1)
    assert np.all(inner <= 0)
    assert not check_dissipativity(lambda x: dyson_drift(x, 1.0), (X, Y)).flagged


def test_make_yosida_problem_identity_is_ou():
    base = build_problem({"dimension": 1, "initial_point": 1.0})
    for n in (1, 5):
        p = make_yosida_problem(base, YosidaApprox(I1, n))
        past = np.array([[[0.3], [2.0]]])
        assert p.eval_b(0.0, past)[0, 0] == pytest.approx(-n / (n + 1) * 2.0)
        assert p.drift_lipschitz == 2 * n and p.dissipative


def test_make_yosida_problem_normal_cone_pushes_back():
    base = build_problem({"dimension": 1, "initial_point": 1.0})
    p = make_yosida_problem(base, YosidaApprox(HALFLINE, 256))
    ens = simulate_paths(p, TimeGrid(1.0, 1024), 200, seed=3)
    assert ens.values.min() > -0.2
    assert not check_problem_dissipativity(p, ens.subset(np.arange(10))).flagged


def test_make_yosida_problem_dyson_ladder_stabilises():
    base = build_problem({"dimension": 3, "initial_point": [-1.0, 0.0, 1.0]})
    gaps = []
    for n in (64, 256, 1024):
        p = make_yosida_problem(base, YosidaApprox(ConcaveLogPotentialGradient(0.5, 3), n))
        gaps.append(min_gap(simulate_paths(p, TimeGrid(1.0, 1024), 200, seed=1).values).mean())
    assert abs(gaps[2] - gaps[1]) < abs(gaps[1] - gaps[0])
    assert gaps[-1] > 0


def test_min_gap():
    v = np.array([[[0.0, 1.0, 3.0], [0.0, 0.5, 3.0]]])
    assert min_gap(v).tolist() == [0.5]
