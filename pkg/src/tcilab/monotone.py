"""Maximal monotone operators, their resolvents and Yosida approximations.

The catalog is closed: a linear monotone matrix, normal cones of simple
convex sets (box, half-space, ordered cone) and the negative gradient of the
concave log-Vandermonde potential ``F(x) = gamma * sum_{i<j} log(x_j - x_i)``,
whose negative is the Dyson interaction drift.

For an operator ``A`` and ``n >= 1`` the resolvent is
``J_n = (I + A / n)^{-1}`` and the Yosida drift is ``b_n = -n (I - J_n)``;
``b_n`` is single valued, dissipative and Lipschitz everywhere, and converges
to ``-A`` on the domain.

Functions accept a single point ``(d,)`` or a batch ``(n_points, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidArgumentError, NumericalError
from .sde import PathEnsemble, SdeProblem

__all__ = [
    "MonotoneOperator",
    "LinearMonotone",
    "NormalCone",
    "ConcaveLogPotentialGradient",
    "YosidaApprox",
    "DissipativityReport",
    "yosida_resolvent",
    "yosida_drift",
    "dyson_drift",
    "check_dissipativity",
    "check_problem_dissipativity",
    "make_yosida_problem",
    "dyadic_ladder",
    "min_gap",
]

RESIDUAL_TOL = 1e-10


def _batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise InvalidArgumentError("expected a point (d,) or a batch (n, d)")
    return x, False


def _unbatch(y, single):
    return y[0] if single else y


class MonotoneOperator:
    """Interface shared by the catalog operators.

    ``apply`` returns the minimal-norm element of ``A(x)`` for ``x`` in the
    domain; ``resolvent(x, n)`` returns ``J_n(x)``.
    """

    dimension: Optional[int] = None

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def resolvent(self, x, n: float) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearMonotone(MonotoneOperator):
    """``A x = M x`` with ``M + M^T`` positive semidefinite."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise InvalidArgumentError("matrix must be square")
        if np.linalg.eigvalsh(M + M.T).min() < -1e-12:
            raise InvalidArgumentError("M + M^T must be positive semidefinite")
        object.__setattr__(self, "matrix", M)

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def contains(self, x):
        X, single = _batch(x)
        return _unbatch(np.ones(X.shape[0], dtype=bool), single)

    def apply(self, x):
        X, single = _batch(x)
        return _unbatch(X @ self.matrix.T, single)

    def resolvent(self, x, n):
        X, single = _batch(x)
        d = self.dimension
        R = np.linalg.solve(np.eye(d) + self.matrix / n, X.T).T
        return _unbatch(R, single)


def _pav_increasing(v):
    # pool-adjacent-violators: Euclidean projection onto {y_1 <= ... <= y_d}
    vals, wts = [], []
    for x in v:
        vals.append(float(x))
        wts.append(1.0)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            w = wts[-2] + wts[-1]
            m = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / w
            vals[-2:] = [m]
            wts[-2:] = [w]
    return np.repeat(vals, np.asarray(wts, dtype=int))


@dataclass(frozen=True)
class NormalCone(MonotoneOperator):
    """Normal cone of a closed convex set; its resolvent is the projection.

    ``kind`` is ``"box"`` (``lower``/``upper``, scalars or vectors, ``None``
    for unbounded), ``"halfspace"`` (``{x : normal . x <= offset}``) or
    ``"ordered"`` (``x_1 <= ... <= x_d``).
    """

    kind: str
    dimension: int = 1
    lower: object = None
    upper: object = None
    normal: object = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("box", "halfspace", "ordered"):
            raise InvalidArgumentError("unknown normal-cone kind %r" % self.kind)
        if self.kind == "box":
            lo = -np.inf if self.lower is None else self.lower
            hi = np.inf if self.upper is None else self.upper
            lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.dimension,)).copy()
            hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.dimension,)).copy()
            if np.any(lo >= hi):
                raise InvalidArgumentError("box must have nonempty interior")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "halfspace":
            a = np.asarray(self.normal, dtype=float)
            if a.shape != (self.dimension,) or not np.any(a != 0):
                raise InvalidArgumentError("halfspace needs a nonzero normal of length dimension")
            object.__setattr__(self, "normal", a)

    def contains(self, x):
        X, single = _batch(x)
        if self.kind == "box":
            r = np.all((X >= self.lower) & (X <= self.upper), axis=1)
        elif self.kind == "halfspace":
            r = X @ self.normal <= self.offset
        else:
            r = np.all(np.diff(X, axis=1) >= 0, axis=1)
        return _unbatch(r, single)

    def project(self, x):
        X, single = _batch(x)
        if self.kind == "box":
            P = np.clip(X, self.lower, self.upper)
        elif self.kind == "halfspace":
            a = self.normal
            excess = np.maximum(X @ a - self.offset, 0.0)
            P = X - np.outer(excess / (a @ a), a)
        else:
            P = np.array([_pav_increasing(row) for row in X]).reshape(X.shape)
        return _unbatch(P, single)

    def apply(self, x):
        # minimal-norm element of the normal cone is 0 everywhere on the set
        X, single = _batch(x)
        if not np.all(self.contains(X)):
            raise DomainError("point outside the constraint set")
        return _unbatch(np.zeros_like(X), single)

    def resolvent(self, x, n):
        return self.project(x)


def _check_ordered(X):
    if X.shape[1] >= 2 and not np.all(np.diff(X, axis=1) > 0):
        bad = int(np.argmax(~np.all(np.diff(X, axis=1) > 0, axis=1)))
        raise DomainError("coordinates must be strictly increasing (row %d: %s)" % (bad, X[bad]))


def _pair_inverse(Y):
    D = Y[:, :, None] - Y[:, None, :]
    r = np.arange(Y.shape[1])
    D[:, r, r] = np.inf
    return 1.0 / D


def dyson_drift(x, gamma: float):
    """``gamma * sum_{j != i} 1 / (x_i - x_j)`` on the strictly ordered cone.

    This is the gradient of the concave potential
    ``gamma * sum_{i<j} log(x_j - x_i)``; components sum to zero.
    """
    if not gamma > 0:
        raise InvalidArgumentError("gamma must be positive")
    X, single = _batch(x)
    _check_ordered(X)
    return _unbatch(gamma * _pair_inverse(X).sum(axis=2), single)


def _log_potential(Y):
    # sum_{i<j} log(y_j - y_i); -inf off the ordered cone
    d = Y.shape[1]
    iu = np.triu_indices(d, 1)
    gaps = Y[:, iu[1]] - Y[:, iu[0]]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(gaps).sum(axis=1)
    out[~np.all(gaps > 0, axis=1)] = -np.inf
    return out


def _ordered_start(X, lam):
    # adjacent gaps from the exact two-particle resolvent, centred on mean(x)
    D = np.diff(X, axis=1)
    # positive root of g^2 - D g - 2 lam, written to avoid cancellation for D < 0
    g = 4.0 * lam / (np.sqrt(D * D + 8.0 * lam) - D)
    c = np.concatenate([np.zeros((X.shape[0], 1)), np.cumsum(g, axis=1)], axis=1)
    return c - c.mean(axis=1, keepdims=True) + X.mean(axis=1, keepdims=True)


def _pair_inverse_t(Y):
    # particle-major (d, n) layout: reductions run over short leading axes
    D = Y[:, None, :] - Y[None, :, :]
    r = np.arange(Y.shape[0])
    D[r, r, :] = np.inf
    return 1.0 / D


def _spd_solve_t(H, b):
    """Cholesky solve of a batch of small SPD systems in (d, d, n) layout."""
    d = H.shape[0]
    L = np.zeros_like(H)
    for j in range(d):
        v = H[j, j] - (L[j, :j] ** 2).sum(axis=0)
        L[j, j] = np.sqrt(v)
        for i in range(j + 1, d):
            L[i, j] = (H[i, j] - (L[i, :j] * L[j, :j]).sum(axis=0)) / L[j, j]
    z = np.empty_like(b)
    for i in range(d):
        z[i] = (b[i] - (L[i, :i] * z[:i]).sum(axis=0)) / L[i, i]
    x = np.empty_like(b)
    for i in reversed(range(d)):
        x[i] = (z[i] - (L[i + 1:, i] * x[i + 1:]).sum(axis=0)) / L[i, i]
    return x


def _log_potential_t(Y):
    d = Y.shape[0]
    out = np.zeros(Y.shape[1])
    ok = np.ones(Y.shape[1], dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(d - 1):
            g = Y[i + 1:] - Y[i]
            ok &= np.all(g > 0, axis=0)
            out += np.log(g).sum(axis=0)
    out[~ok] = -np.inf
    return out


def _log_potential_resolvent(X, lam, tol=1e-13, max_iter=200):
    """Solve ``y - lam * grad G(y) = x`` by damped Newton, ``G`` the log potential.

    ``y`` minimises ``0.5 |y - x|^2 - lam * G(y)``, a strictly convex problem
    on the ordered cone with Hessian ``I + lam * L(y)`` (``L`` a graph
    Laplacian). Steps are backtracked until the iterate stays ordered and
    either the objective (Armijo) or the residual norm decreases. Rows whose
    update falls to rounding level stop early; callers check the residual.
    """
    n, d = X.shape
    if d == 1:
        return X.copy(), np.zeros(n)
    Xt = np.ascontiguousarray(X.T)
    scale = np.maximum(1.0, np.abs(Xt).max(axis=0))
    Y = np.ascontiguousarray(_ordered_start(X, lam).T)
    P = _pair_inverse_t(Y)
    F = Y - Xt - lam * P.sum(axis=1)
    res = np.abs(F).max(axis=0) / scale
    stalled = np.zeros(n, dtype=bool)
    eps4 = 4 * np.finfo(float).eps
    r = np.arange(d)
    for _ in range(max_iter):
        active = (res > tol) & ~stalled
        if not active.any():
            break
        idx = np.flatnonzero(active)
        full = idx.size == n
        Ya, Fa, Xa = (Y, F, Xt) if full else (Y[:, idx], F[:, idx], Xt[:, idx])
        W = (P if full else P[:, :, idx]) ** 2
        H = -lam * W
        H[r, r, :] = 1.0 + lam * W.sum(axis=1)
        step = _spd_solve_t(H, -Fa)
        slope = (Fa * step).sum(axis=0)
        fnorm0 = (Fa ** 2).sum(axis=0)
        phi0 = None
        t = np.ones(idx.size)
        pending = np.arange(idx.size)
        Ynew, Pnew, Fnew = Ya.copy(), (P if full else P[:, :, idx]).copy(), Fa.copy()
        for _ in range(80):
            sub = pending.size != idx.size
            trial = (Ya[:, pending] + t[pending] * step[:, pending]) if sub else Ya + t * step
            ordered = np.all(trial[1:] > trial[:-1], axis=0)
            o = pending[ordered]
            if not ordered.all():
                trial = trial[:, ordered]
            Pt = _pair_inverse_t(trial)
            Ft = trial - Xa[:, o] - lam * Pt.sum(axis=1)
            # residual decrease first; Armijo only where it fails
            ok = (Ft ** 2).sum(axis=0) <= (1 - 1e-4 * t[o]) * fnorm0[o]
            if not ok.all():
                if phi0 is None:
                    phi0 = 0.5 * ((Ya - Xa) ** 2).sum(axis=0) - lam * _log_potential_t(Ya)
                m = ~ok
                tr = trial[:, m]
                phi = 0.5 * ((tr - Xa[:, o[m]]) ** 2).sum(axis=0) - lam * _log_potential_t(tr)
                ok[m] = phi <= phi0[o[m]] + 1e-4 * t[o[m]] * slope[o[m]]
            acc = o[ok]
            moved = np.abs(t[acc] * step[:, acc]).max(axis=0)
            stalled[idx[acc]] = moved <= eps4 * np.maximum(1.0, np.abs(Ya[:, acc]).max(axis=0))
            Ynew[:, acc] = trial[:, ok]
            Pnew[:, :, acc] = Pt[:, :, ok]
            Fnew[:, acc] = Ft[:, ok]
            if acc.size == pending.size:
                pending = pending[:0]
                break
            pending = np.setdiff1d(pending, acc, assume_unique=True)
            t[pending] *= 0.5
        stalled[idx[pending]] = True
        if full:
            Y, P, F = Ynew, Pnew, Fnew
        else:
            Y[:, idx], P[:, :, idx], F[:, idx] = Ynew, Pnew, Fnew
        res[idx] = np.abs(F[:, idx]).max(axis=0) / scale[idx]
    return np.ascontiguousarray(Y.T), np.abs(F).max(axis=0)


@dataclass(frozen=True)
class ConcaveLogPotentialGradient(MonotoneOperator):
    """``A = -grad F`` with ``F(x) = gamma * sum_{i<j} log(x_j - x_i)``.

    Domain: the strictly ordered cone ``x_1 < ... < x_d``.
    """

    gamma: float
    dimension: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be positive, got %r" % (self.gamma,))
        if self.dimension < 2:
            raise InvalidArgumentError("the log potential needs at least two particles")

    def contains(self, x):
        X, single = _batch(x)
        return _unbatch(np.all(np.diff(X, axis=1) > 0, axis=1), single)

    def apply(self, x):
        return -dyson_drift(x, self.gamma)

    def resolvent(self, x, n):
        X, single = _batch(x)
        Y, res = _log_potential_resolvent(X, self.gamma / n)
        bound = RESIDUAL_TOL * np.maximum(1.0, np.abs(X).max(axis=1))
        if not np.all(res < bound):
            worst = float(res.max())
            raise NumericalError("log-potential resolvent did not converge (residual %.3g)" % worst,
                                 residual=worst)
        return _unbatch(Y, single)


@dataclass(frozen=True)
class YosidaApprox:
    operator: MonotoneOperator
    n: float

    def __post_init__(self):
        if not self.n > 0:
            raise InvalidArgumentError("n must be positive")

    def resolvent(self, x):
        return self.operator.resolvent(x, self.n)

    def drift(self, x):
        X, single = _batch(x)
        return _unbatch(-self.n * (X - self.operator.resolvent(X, self.n)), single)


def yosida_resolvent(approx: YosidaApprox, x):
    """``J_n(x) = (I + A / n)^{-1} x``."""
    return approx.resolvent(x)


def yosida_drift(approx: YosidaApprox, x):
    """``b_n(x) = -n (x - J_n(x))``: dissipative and ``n``-Lipschitz."""
    return approx.drift(x)


@dataclass
class DissipativityReport:
    max_inner: float
    witness: tuple
    flagged: bool
    n_pairs: int = 0


def check_dissipativity(drift: Callable, probes, tol: float = 1e-12) -> DissipativityReport:
    """Largest ``(b(x) - b(y)) . (x - y)`` over probe pairs.

    ``probes`` is either a point cloud ``(n, d)`` (all pairs are used) or a
    tuple ``(X, Y)`` of aligned batches.
    """
    if isinstance(probes, tuple):
        X, Y = (np.asarray(p, dtype=float) for p in probes)
        inner = ((drift(X) - drift(Y)) * (X - Y)).sum(axis=1)
        pairs = [(i, i) for i in range(len(X))]
    else:
        P = np.asarray(probes, dtype=float)
        if P.shape[0] < 2:
            raise InvalidArgumentError("need at least two probes")
        B = np.asarray(drift(P), dtype=float)
        i, j = np.triu_indices(P.shape[0], 1)
        inner = ((B[i] - B[j]) * (P[i] - P[j])).sum(axis=1)
        pairs = list(zip(i.tolist(), j.tolist()))
    k = int(np.argmax(inner))
    return DissipativityReport(float(inner[k]), pairs[k], bool(inner[k] > tol), len(inner))


def check_problem_dissipativity(problem: SdeProblem, probe_paths: PathEnsemble,
                                tol: float = 1e-12) -> DissipativityReport:
    """Audit ``(b(t, x) - b(t, y), x_t - y_t) <= 0`` on all probe-path pairs."""
    X = np.asarray(probe_paths.values)
    i, j = np.triu_indices(X.shape[0], 1)
    worst, where = -np.inf, (-1, -1, -1)
    for k, t in enumerate(probe_paths.grid.times):
        B = problem.eval_b(float(t), X[:, : k + 1, :])
        inner = ((B[i] - B[j]) * (X[i, k] - X[j, k])).sum(axis=1)
        q = int(np.argmax(inner))
        if inner[q] > worst:
            worst, where = float(inner[q]), (int(i[q]), int(j[q]), k)
    return DissipativityReport(worst, where, worst > tol, len(i))


def _b_from_yosida(approx):
    def b(t, past):
        return approx.drift(past[:, -1, :])
    return b


def make_yosida_problem(base: SdeProblem, approx: YosidaApprox) -> SdeProblem:
    """Replace the drift ``b`` of ``base`` by the Yosida drift ``b_n``.

    The result declares ``drift_lipschitz = 2 n`` (audited only) and is
    marked dissipative. ``growth_N`` is set to ``n * max(2, |J_n(0)|)``,
    which bounds ``|b_n(x)| / (1 + |x|)`` by nonexpansiveness of ``J_n``.
    """
    n = approx.n
    j0 = np.linalg.norm(approx.resolvent(np.zeros(base.dimension)))
    return replace(base, drift_b=_b_from_yosida(approx), drift_lipschitz=2.0 * n,
                   growth_N=float(n * max(2.0, j0)), dissipative=True,
                   name=(base.name or "problem") + "/yosida(n=%g)" % n)


def dyadic_ladder(max_power: int = 10) -> list:
    return [2 ** k for k in range(max_power + 1)]


def min_gap(values) -> np.ndarray:
    """Per path, the smallest ``x_{i+1}(t) - x_i(t)`` over time and particles.

    Negative values mean particles crossed.
    """
    V = np.asarray(values)
    return np.diff(V, axis=-1).min(axis=(-2, -1))
