"""Time grids, path storage and an explicit Euler-Maruyama integrator.

All evaluators are vectorised over an ensemble of paths:

* ``drift_b(t, past)`` receives ``past`` of shape ``(n_paths, k + 1, d)``
  holding the grid values ``x(t_0), ..., x(t_k)`` and returns ``(n_paths, d)``.
  This is how path-dependent drifts see the restriction of the path to
  ``[0, t_k]``.
* ``drift_m(t, x)`` and ``diffusion_sigma(t, x)`` receive the current state
  ``(n_paths, d)`` and return ``(n_paths, d)`` and ``(n_paths, d, d)``.
  Outputs only need to broadcast to those shapes, so a constant diffusion may
  return a single ``(d, d)`` matrix.

Per-path noise streams come from ``numpy.random.SeedSequence(seed,
spawn_key=(i,))`` so that path ``i`` is the same whatever the ensemble size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, SimulationError

__all__ = [
    "TimeGrid",
    "PathSample",
    "PathEnsemble",
    "SdeProblem",
    "LipschitzReport",
    "GrowthReport",
    "make_time_grid",
    "noise_increments",
    "integrate",
    "simulate_paths",
    "sup_norm_distance",
    "sup_distances",
    "check_lipschitz",
    "check_growth",
]

SEED_MASK = (1 << 64) - 1

PathDrift = Callable[[float, np.ndarray], np.ndarray]
StateFn = Callable[[float, np.ndarray], np.ndarray]


def _readonly(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = horizon``."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidArgumentError("horizon must be positive, got %r" % (self.horizon,))
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgumentError("n_steps must be a positive integer, got %r" % (self.n_steps,))
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        t = self.horizon * np.arange(self.n_steps + 1) / self.n_steps
        t[-1] = self.horizon
        return _readonly(t)

    def index_of(self, t: float) -> int:
        """Number of whole steps contained in ``[0, t]`` (up to rounding)."""
        if not (0 < t <= self.horizon * (1 + 1e-12)):
            raise InvalidArgumentError(
                "time %r outside (0, %r]" % (t, self.horizon))
        k = int(np.floor(t / self.h + 1e-9))
        return min(k, self.n_steps)


def make_time_grid(horizon: float, n_steps: int) -> TimeGrid:
    return TimeGrid(horizon, n_steps)


@dataclass(frozen=True)
class PathSample:
    """One discrete trajectory ``values[k] = x(t_k)``.

    ``noise_increments`` holds the Gaussian increments that produced the
    path, or ``None`` for externally supplied paths.
    """

    values: np.ndarray
    noise_increments: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 2:
            raise InvalidArgumentError("values must have shape (n_steps + 1, d)")
        object.__setattr__(self, "values", v)
        if self.noise_increments is not None:
            w = np.asarray(self.noise_increments, dtype=float)
            if w.ndim == 1:
                w = w[:, None]
            if w.shape != (v.shape[0] - 1, v.shape[1]):
                raise InvalidArgumentError(
                    "noise_increments shape %s does not match values %s" % (w.shape, v.shape))
            object.__setattr__(self, "noise_increments", w)

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1


@dataclass(frozen=True)
class PathEnsemble:
    """Ensemble of paths on a shared grid, stored as dense arrays.

    ``values`` has shape ``(n_paths, n_steps + 1, d)`` and ``increments``
    ``(n_paths, n_steps, d)``. ``weights`` defaults to uniform.
    """

    grid: TimeGrid
    values: np.ndarray
    increments: Optional[np.ndarray] = None
    seed: Optional[int] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != self.grid.n_steps + 1:
            raise InvalidArgumentError(
                "values must have shape (n_paths, %d, d), got %s" % (self.grid.n_steps + 1, v.shape))
        if v.shape[0] < 1:
            raise InvalidArgumentError("ensemble must contain at least one path")
        object.__setattr__(self, "values", _readonly(v))
        if self.increments is not None:
            w = np.asarray(self.increments, dtype=float)
            if w.shape != (v.shape[0], v.shape[1] - 1, v.shape[2]):
                raise InvalidArgumentError("increments shape %s inconsistent with values" % (w.shape,))
            object.__setattr__(self, "increments", _readonly(w))
        if self.weights is not None:
            wt = np.asarray(self.weights, dtype=float)
            if wt.shape != (v.shape[0],) or np.any(wt < 0) or abs(wt.sum() - 1.0) > 1e-12:
                raise InvalidArgumentError("weights must be nonnegative, one per path, summing to 1")
            object.__setattr__(self, "weights", _readonly(wt))

    @classmethod
    def from_paths(cls, grid, paths, seed=None, weights=None):
        paths = list(paths)
        if not paths:
            raise InvalidArgumentError("ensemble must contain at least one path")
        dims = {p.values.shape for p in paths}
        if len(dims) != 1:
            raise InvalidArgumentError("all paths must share grid and dimension")
        values = np.stack([p.values for p in paths])
        if all(p.noise_increments is not None for p in paths):
            incs = np.stack([p.noise_increments for p in paths])
        else:
            incs = None
        return cls(grid, values, incs, seed, weights)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> PathSample:
        inc = None if self.increments is None else self.increments[i]
        return PathSample(self.values[i], inc)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[2]

    @property
    def paths(self) -> list:
        return [self[i] for i in range(len(self))]

    def uniform_weights(self) -> np.ndarray:
        if self.weights is not None:
            return np.asarray(self.weights)
        return np.full(len(self), 1.0 / len(self))

    def subset(self, idx) -> "PathEnsemble":
        """Ensemble restricted to ``idx`` with uniform weights."""
        idx = np.asarray(idx)
        inc = None if self.increments is None else self.increments[idx]
        return PathEnsemble(self.grid, self.values[idx], inc, self.seed)


@dataclass(frozen=True)
class SdeProblem:
    """``dX = sigma(t, X_t) dW + b(t, X) dt + m(t, X_t) dt``, ``X_0 = z``.

    ``lipschitz_K`` is the declared constant for ``sigma`` and ``m``; the
    path drift ``b`` is held to ``drift_lipschitz`` when set, otherwise to
    ``lipschitz_K``. ``dissipative`` records that ``b`` is only claimed to be
    dissipative (its Lipschitz constant then plays no role in the bounds).
    """

    dimension: int
    initial_point: np.ndarray
    diffusion_sigma: StateFn
    drift_b: Optional[PathDrift] = None
    drift_m: Optional[StateFn] = None
    lipschitz_K: float = 0.0
    growth_N: float = 0.0
    sigma_sup: Optional[float] = None
    drift_lipschitz: Optional[float] = None
    dissipative: bool = False
    name: str = ""

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.initial_point, dtype=float))
        if z.shape != (self.dimension,):
            raise InvalidArgumentError(
                "initial_point must have length %d, got shape %s" % (self.dimension, z.shape))
        object.__setattr__(self, "initial_point", _readonly(z))
        if self.lipschitz_K < 0 or self.growth_N < 0:
            raise InvalidArgumentError("lipschitz_K and growth_N must be nonnegative")
        if self.sigma_sup is not None and self.sigma_sup < 0:
            raise InvalidArgumentError("sigma_sup must be nonnegative")

    @property
    def b_lipschitz(self) -> float:
        return self.lipschitz_K if self.drift_lipschitz is None else self.drift_lipschitz

    def eval_b(self, t, past):
        n, _, d = past.shape
        if self.drift_b is None:
            return np.zeros((n, d))
        return np.broadcast_to(np.asarray(self.drift_b(t, past), dtype=float), (n, d))

    def eval_m(self, t, x):
        if self.drift_m is None:
            return np.zeros_like(x)
        return np.broadcast_to(np.asarray(self.drift_m(t, x), dtype=float), x.shape)

    def eval_sigma(self, t, x):
        n, d = x.shape
        return np.broadcast_to(np.asarray(self.diffusion_sigma(t, x), dtype=float), (n, d, d))


def noise_increments(seed: int, n_paths: int, n_steps: int, d: int, h: float,
                     first_index: int = 0) -> np.ndarray:
    """Gaussian increments with covariance ``h * I`` for paths
    ``first_index, ..., first_index + n_paths - 1``.

    Path ``i`` draws from ``PCG64(SeedSequence(seed, spawn_key=(i,)))``,
    which equals ``SeedSequence(seed).spawn(...)[i]``.
    """
    root = int(seed) & SEED_MASK
    out = np.empty((n_paths, n_steps, d))
    scale = np.sqrt(h)
    for j in range(n_paths):
        ss = np.random.SeedSequence(root, spawn_key=(first_index + j,))
        rng = np.random.Generator(np.random.PCG64(ss))
        out[j] = rng.standard_normal((n_steps, d)) * scale
    return out


def _first_bad(arr):
    bad = ~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1)
    return int(np.argmax(bad)) if bad.any() else None


def _check_finite(arr, what, step):
    i = _first_bad(arr)
    if i is not None:
        raise SimulationError(
            "%s returned a non-finite value at step %d, path %d" % (what, step, i),
            step=step, path_index=i)


def _integrate(problem: SdeProblem, grid: TimeGrid, increments: np.ndarray, shift=None,
               shifted_from: int = 0):
    """Euler-Maruyama with an optional noise shift ``dW + shift(t, past) h``.

    The shift applies to rows ``shifted_from:`` only and is evaluated on the
    past of those rows. Returns ``(values, vdot)`` where ``vdot`` covers the
    shifted rows (``None`` without a shift).
    """
    n, n_steps, d = increments.shape
    if n_steps != grid.n_steps or d != problem.dimension:
        raise InvalidArgumentError(
            "increments shape %s does not fit grid/problem" % (increments.shape,))
    h = grid.h
    times = grid.times
    x = np.empty((n, n_steps + 1, d))
    x[:, 0, :] = problem.initial_point
    s = shifted_from
    vdot = None if shift is None else np.empty((n - s, n_steps, d))
    for k in range(n_steps):
        t = float(times[k])
        past = x[:, : k + 1, :]
        xk = x[:, k, :]
        drift = problem.eval_b(t, past)
        _check_finite(drift, "drift_b", k)
        if problem.drift_m is not None:
            m = problem.eval_m(t, xk)
            _check_finite(m, "drift_m", k)
            drift = drift + m
        sig = problem.eval_sigma(t, xk)
        _check_finite(sig, "diffusion_sigma", k)
        dw = increments[:, k, :]
        if shift is not None:
            v = np.broadcast_to(np.asarray(shift(t, past[s:]), dtype=float), (n - s, d))
            _check_finite(v, "perturbation", k)
            vdot[:, k, :] = v
            dw = dw.copy()
            dw[s:] += v * h
        # row-wise reduction keeps each path independent of the batch size
        x[:, k + 1, :] = xk + drift * h + (sig * dw[:, None, :]).sum(axis=2)
    return x, vdot


def integrate(problem: SdeProblem, grid: TimeGrid, increments: np.ndarray) -> np.ndarray:
    """Euler-Maruyama paths driven by the given ``(n, n_steps, d)`` increments."""
    return _integrate(problem, grid, np.asarray(increments, dtype=float))[0]


def simulate_paths(problem: SdeProblem, grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
    """Simulate ``n_paths`` Euler-Maruyama paths of ``problem``.

    Each path satisfies ``X_{k+1} = X_k + (b + m) h + sigma dW_k`` and the
    driving increments are kept on the ensemble. Output is bit-identical for
    identical arguments.
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise InvalidArgumentError("n_paths must be a positive integer")
    inc = noise_increments(seed, int(n_paths), grid.n_steps, problem.dimension, grid.h)
    values = integrate(problem, grid, inc)
    return PathEnsemble(grid, values, inc, int(seed))


def _as_values(p):
    if isinstance(p, PathSample):
        return p.values
    v = np.asarray(p, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def sup_norm_distance(a, b) -> float:
    """``max_k |a(t_k) - b(t_k)|`` with the Euclidean norm on R^d.

    This is the grid restriction of the uniform norm, hence a lower bound of
    the continuous-time sup.
    """
    va, vb = _as_values(a), _as_values(b)
    if va.shape != vb.shape:
        raise InvalidArgumentError("paths live on different grids: %s vs %s" % (va.shape, vb.shape))
    return float(np.sqrt(((va - vb) ** 2).sum(axis=-1)).max())


def sup_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise uniform distances between path arrays of equal shape."""
    if a.shape != b.shape:
        raise InvalidArgumentError("shape mismatch %s vs %s" % (a.shape, b.shape))
    return np.sqrt(((a - b) ** 2).sum(axis=-1)).max(axis=-1)


@dataclass
class LipschitzReport:
    worst_quotient: float
    component: str
    time_index: int
    pair: tuple
    flagged: bool
    declared: dict = field(default_factory=dict)
    per_component: dict = field(default_factory=dict)


def _pairwise_norm(a):
    diff = a[:, None, ...] - a[None, :, ...]
    return np.sqrt((diff ** 2).reshape(a.shape[0], a.shape[0], -1).sum(axis=-1))


def check_lipschitz(problem: SdeProblem, probe_paths: PathEnsemble, rtol: float = 1e-6) -> LipschitzReport:
    """Audit the declared Lipschitz constants on all pairs of probe paths.

    For the path drift the quotient is ``|b(t, xi) - b(t, eta)| / ||xi - eta||_t``
    with the running sup distance; ``m`` and ``sigma`` (Frobenius norm) use
    the distance at time ``t``. Nothing is raised; a component is flagged
    when its worst quotient exceeds ``declared * (1 + rtol)``.
    """
    if len(probe_paths) < 2:
        raise InvalidArgumentError("need at least two probe paths")
    X = np.asarray(probe_paths.values)
    n = X.shape[0]
    times = probe_paths.grid.times
    declared = {"b": problem.b_lipschitz, "m": problem.lipschitz_K, "sigma": problem.lipschitz_K}
    best = {c: (0.0, -1, (-1, -1)) for c in declared}
    running = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    for k in range(X.shape[1]):
        t = float(times[k])
        dist = _pairwise_norm(X[:, k, :])
        running = np.maximum(running, dist)
        comps = {"b": (problem.eval_b(t, X[:, : k + 1, :]), running)}
        if problem.drift_m is not None:
            comps["m"] = (problem.eval_m(t, X[:, k, :]), dist)
        comps["sigma"] = (problem.eval_sigma(t, X[:, k, :]), dist)
        for c, (vals, denom) in comps.items():
            num = _pairwise_norm(np.asarray(vals))[iu]
            den = denom[iu]
            ok = den > 0
            if not ok.any():
                continue
            q = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
            j = int(np.argmax(q))
            if q[j] > best[c][0]:
                best[c] = (float(q[j]), k, (int(iu[0][j]), int(iu[1][j])))
    flags = {c: best[c][0] > declared[c] * (1 + rtol) for c in declared}
    worst_c = max(best, key=lambda c: best[c][0])
    q, k, pair = best[worst_c]
    return LipschitzReport(
        worst_quotient=q, component=worst_c, time_index=k, pair=pair,
        flagged=any(flags.values()), declared=declared,
        per_component={c: {"quotient": best[c][0], "time_index": best[c][1],
                           "pair": best[c][2], "flagged": flags[c]} for c in best},
    )


@dataclass
class GrowthReport:
    worst_ratio: float
    path_index: int
    time_index: int
    declared_N: float
    flagged: bool


def check_growth(problem: SdeProblem, probe_paths: PathEnsemble, rtol: float = 1e-6) -> GrowthReport:
    """Audit ``|b(t, x)| <= N (1 + sup_{s<=t} |x_s|)`` along probe paths."""
    X = np.asarray(probe_paths.values)
    times = probe_paths.grid.times
    running = np.zeros(X.shape[0])
    worst = (0.0, -1, -1)
    for k in range(X.shape[1]):
        running = np.maximum(running, np.linalg.norm(X[:, k, :], axis=1))
        b = problem.eval_b(float(times[k]), X[:, : k + 1, :])
        r = np.linalg.norm(b, axis=1) / (1.0 + running)
        i = int(np.argmax(r))
        if r[i] > worst[0]:
            worst = (float(r[i]), i, k)
    return GrowthReport(worst[0], worst[1], worst[2], problem.growth_N,
                        worst[0] > problem.growth_N * (1 + rtol))
