"""Empirical squared Wasserstein distance between path ensembles.

The ground cost is the squared uniform distance between grid paths. Two
solvers are provided: an exact one (assignment for equal-size uniform
ensembles, a HiGHS linear program otherwise) and log-domain Sinkhorn with a
final rounding onto the transport polytope. All values are *squared*
distances.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp

from .errors import InvalidArgumentError, NumericalError, SizeError
from .sde import PathEnsemble

__all__ = [
    "OtResult",
    "cost_matrix",
    "empirical_w2_exact",
    "empirical_w2_sinkhorn",
    "solve_exact",
    "solve_sinkhorn",
    "w2_confidence_interval",
    "write_matrix_csv",
]

DEFAULT_CAP = 4096 * 4096
_CHUNK_ELEMS = 1 << 23


@dataclass
class OtResult:
    value: float
    plan: np.ndarray
    method: str
    epsilon: Optional[float] = None
    iterations: int = 0
    converged: bool = True

    def to_record(self) -> dict:
        return {"value": self.value, "method": self.method, "epsilon": self.epsilon,
                "iterations": self.iterations, "converged": self.converged}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _check_compatible(mu: PathEnsemble, nu: PathEnsemble):
    if mu.grid != nu.grid or mu.dimension != nu.dimension:
        raise InvalidArgumentError("ensembles must share grid and dimension")


def cost_matrix(mu: PathEnsemble, nu: PathEnsemble) -> np.ndarray:
    """``C[i, j] = max_k |mu_i(t_k) - nu_j(t_k)|^2``."""
    _check_compatible(mu, nu)
    A, B = np.asarray(mu.values), np.asarray(nu.values)
    n, m = A.shape[0], B.shape[0]
    C = np.empty((n, m))
    rows = max(1, _CHUNK_ELEMS // max(1, m * A.shape[1] * A.shape[2]))
    for s in range(0, n, rows):
        diff = A[s:s + rows, None, :, :] - B[None, :, :, :]
        C[s:s + rows] = (diff ** 2).sum(axis=-1).max(axis=-1)
    return C


def _weights(ens: PathEnsemble):
    return ens.uniform_weights()


def solve_exact(cost, a=None, b=None, cap: int = DEFAULT_CAP) -> OtResult:
    """Exact discrete optimal transport for a cost matrix and marginals."""
    C = np.asarray(cost, dtype=float)
    n, m = C.shape
    if n * m > cap:
        raise SizeError(
            "problem has %d x %d = %d entries, above the exact-solver cap %d; "
            "use empirical_w2_sinkhorn instead" % (n, m, n * m, cap))
    uniform = a is None and b is None
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=float)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=float)
    if not uniform:
        uniform = n == m and np.all(a == a[0]) and np.all(b == b[0]) and a[0] > 0

    plan = np.zeros((n, m))
    if uniform and n == m:
        r, c = linear_sum_assignment(C)
        plan[r, c] = 1.0 / n
        value = float(C[r, c].sum() / n)
        return OtResult(value, plan, "exact", iterations=0, converged=True)

    # zero-weight paths carry no mass; drop them before the LP
    ia, ib = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    Cs, As, Bs = C[np.ix_(ia, ib)], a[ia], b[ib]
    p, q = len(ia), len(ib)
    rows = sparse.kron(sparse.eye(p), np.ones((1, q)))
    cols = sparse.kron(np.ones((1, p)), sparse.eye(q))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([As, Bs])
    res = linprog(Cs.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalError("exact OT linear program failed: %s" % res.message)
    sub = np.clip(res.x.reshape(p, q), 0.0, None)
    plan[np.ix_(ia, ib)] = sub
    value = float((plan * C).sum())
    return OtResult(value, plan, "exact", iterations=int(getattr(res, "nit", 0)), converged=True)


def empirical_w2_exact(mu: PathEnsemble, nu: PathEnsemble, cap: int = DEFAULT_CAP) -> OtResult:
    """Exact empirical ``d_W^2`` between two weighted path ensembles.

    For uniform, equal-size ensembles the value is the optimal assignment
    cost divided by ``n``.
    """
    _check_compatible(mu, nu)
    if len(mu) * len(nu) > cap:
        raise SizeError(
            "problem has %d entries, above the exact-solver cap %d; use "
            "empirical_w2_sinkhorn instead" % (len(mu) * len(nu), cap))
    a = None if mu.weights is None else _weights(mu)
    b = None if nu.weights is None else _weights(nu)
    return solve_exact(cost_matrix(mu, nu), a, b, cap)


def _round_to_polytope(P, a, b):
    # Altschuler, Weed & Rigollet (2017), Algorithm 2
    r = P.sum(axis=1)
    P = P * np.minimum(a / np.where(r > 0, r, 1.0), 1.0)[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(b / np.where(c > 0, c, 1.0), 1.0)[None, :]
    ea = a - P.sum(axis=1)
    eb = b - P.sum(axis=0)
    s = ea.sum()
    if s > 0:
        P = P + np.outer(ea, eb) / s
    return P


def _sinkhorn_sweeps(Cs, la, lb, f, g, eps, max_iters, tol, As):
    it, converged = 0, False
    for it in range(1, max_iters + 1):
        f = eps * la - eps * logsumexp((g[None, :] - Cs) / eps, axis=1)
        g = eps * lb - eps * logsumexp((f[:, None] - Cs) / eps, axis=0)
        if it % 10 == 0 or it == max_iters:
            # after the g-update columns are exact; rows carry the violation
            row = np.exp(logsumexp((f[:, None] + g[None, :] - Cs) / eps, axis=1))
            if np.abs(row - As).sum() < tol:
                converged = True
                break
    return f, g, it, converged


def solve_sinkhorn(cost, a=None, b=None, epsilon: float = 1e-2, max_iters: int = 10000,
                   tol: float = 1e-9, warm_start: bool = True) -> OtResult:
    """Log-domain Sinkhorn iterations at fixed ``epsilon``.

    With ``warm_start`` the dual potentials are first brought close by a
    short pass over a geometric sequence of larger regularisations
    (``max(cost)`` halving down to ``epsilon``); the returned solution is
    still that of the ``epsilon`` problem, only reached in far fewer sweeps.
    ``converged`` is set once the row-marginal violation (L1) is below
    ``tol``. The returned plan is rounded onto the exact transport polytope,
    so ``value = <plan, cost>`` never undercuts the exact optimum.
    """
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    C = np.asarray(cost, dtype=float)
    n, m = C.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=float)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=float)
    ia, ib = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    Cs, As, Bs = C[np.ix_(ia, ib)], a[ia], b[ib]
    la, lb = np.log(As), np.log(Bs)
    f = np.zeros(len(ia))
    g = np.zeros(len(ib))
    total = 0
    if warm_start:
        eps_k = float(Cs.max(initial=0.0))
        while eps_k > 2 * epsilon:
            f, g, it, _ = _sinkhorn_sweeps(Cs, la, lb, f, g, eps_k, 100, 1e-3, As)
            total += it
            eps_k *= 0.5
    f, g, it, converged = _sinkhorn_sweeps(Cs, la, lb, f, g, epsilon, max_iters, tol, As)
    total += it
    P = np.exp((f[:, None] + g[None, :] - Cs) / epsilon)
    P = _round_to_polytope(P, As, Bs)
    plan = np.zeros((n, m))
    plan[np.ix_(ia, ib)] = P
    value = float((plan * C).sum())
    return OtResult(value, plan, "entropic", epsilon=float(epsilon), iterations=total,
                    converged=converged)


def empirical_w2_sinkhorn(mu: PathEnsemble, nu: PathEnsemble, epsilon: float,
                          max_iters: int = 10000, tol: float = 1e-9, warm_start: bool = True) -> OtResult:
    """Entropic estimate of the empirical ``d_W^2``; an upper bound of the exact value."""
    _check_compatible(mu, nu)
    a = None if mu.weights is None else _weights(mu)
    b = None if nu.weights is None else _weights(nu)
    return solve_sinkhorn(cost_matrix(mu, nu), a, b, epsilon, max_iters, tol, warm_start)


def w2_confidence_interval(mu: PathEnsemble, nu: PathEnsemble, n_bootstrap: int = 1000,
                           seed: int = 0, level: float = 0.95) -> tuple:
    """Percentile bootstrap interval for the exact empirical ``d_W^2``.

    Equal-size ensembles are resampled jointly by index (row ``i`` of both is
    one sampling unit, which is how coupled ensembles are produced);
    otherwise the two sides are resampled independently.
    """
    if n_bootstrap < 100:
        raise InvalidArgumentError("n_bootstrap must be at least 100")
    _check_compatible(mu, nu)
    C = cost_matrix(mu, nu)
    n, m = C.shape
    rng = np.random.default_rng(seed)
    stats = np.empty(n_bootstrap)
    for r in range(n_bootstrap):
        I = rng.integers(0, n, n)
        J = I if n == m else rng.integers(0, m, m)
        sub = C[np.ix_(I, J)]
        if n == m:
            ri, ci = linear_sum_assignment(sub)
            stats[r] = sub[ri, ci].sum() / n
        else:
            stats[r] = solve_exact(sub).value
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def write_matrix_csv(path, matrix):
    """Write a cost matrix or plan as plain CSV (no header)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(matrix):
            w.writerow([repr(float(v)) for v in row])
