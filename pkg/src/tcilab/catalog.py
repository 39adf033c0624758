"""Named drift, diffusion and perturbation forms for declarative configs.

Each factory returns a :class:`Form`: the vectorised evaluator plus the
constants it satisfies (Lipschitz, linear growth, sup bound, dissipativity)
so that problems built from a config carry checkable declarations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError
from .girsanov import DriftPerturbation
from .monotone import (ConcaveLogPotentialGradient, LinearMonotone, MonotoneOperator,
                       NormalCone, YosidaApprox, make_yosida_problem)
from .sde import SdeProblem

__all__ = [
    "Form",
    "DRIFT_FORMS",
    "DIFFUSION_FORMS",
    "PERTURBATION_FORMS",
    "OPERATOR_KINDS",
    "drift_form",
    "state_form",
    "diffusion_form",
    "perturbation_form",
    "operator_from_spec",
    "build_problem",
]


@dataclass(frozen=True)
class Form:
    fn: Callable
    lipschitz: float = 0.0
    growth: float = 0.0
    sup: Optional[float] = None
    dissipative: bool = False


def _vec(value, d, what):
    v = np.asarray(value, dtype=float)
    if v.ndim == 0:
        v = np.full(d, float(v))
    if v.shape != (d,):
        raise InvalidArgumentError("%s must be a scalar or a length-%d vector" % (what, d))
    return v


def _mat(value, d, what):
    M = np.asarray(value, dtype=float)
    if M.ndim == 0:
        M = float(M) * np.eye(d)
    elif M.ndim == 1 and M.shape == (d,):
        M = np.diag(M)
    if M.shape != (d, d):
        raise InvalidArgumentError("%s must be a scalar, a diagonal or a %dx%d matrix" % (what, d, d))
    return M


def _opnorm(M):
    return float(np.linalg.norm(M, 2))


def _is_dissipative(M):
    return bool(np.linalg.eigvalsh(M + M.T).max() <= 1e-12)


def _state(spec, d):
    """State form ``f(x) -> (n, d)`` with its constants."""
    form = spec.get("form", "zero")
    if form == "zero":
        return Form(lambda x: np.zeros_like(x), 0.0, 0.0, 0.0, True)
    if form == "constant":
        c = _vec(spec.get("value", 0.0), d, "value")
        return Form(lambda x: np.broadcast_to(c, x.shape), 0.0, float(np.linalg.norm(c)),
                    float(np.linalg.norm(c)), not np.any(c))
    if form == "linear":
        M = _mat(spec.get("matrix", 0.0), d, "matrix")
        L = _opnorm(M)
        return Form(lambda x: x @ M.T, L, L, None, _is_dissipative(M))
    if form == "ou":
        theta = float(spec.get("theta", 1.0))
        mean = _vec(spec.get("mean", 0.0), d, "mean")
        if theta < 0:
            raise InvalidArgumentError("ou theta must be nonnegative")
        return Form(lambda x: -theta * (x - mean), theta,
                    theta * max(1.0, float(np.linalg.norm(mean))), None, True)
    if form == "sine":
        amp = float(spec.get("amplitude", 1.0))
        return Form(lambda x: amp * np.sin(x), abs(amp), abs(amp) * np.sqrt(d), abs(amp) * np.sqrt(d), False)
    raise InvalidArgumentError("unknown state form %r" % (form,))


DRIFT_FORMS = ("zero", "constant", "linear", "ou", "sine", "sup_past")
DIFFUSION_FORMS = ("constant", "bounded_sine", "geometric")
PERTURBATION_FORMS = ("zero", "constant", "linear_time", "sine_state")
OPERATOR_KINDS = ("linear", "box", "halfspace", "ordered", "dyson")


def drift_form(spec: dict, d: int) -> Form:
    """Path drift ``b(t, past)``; ``sup_past`` is the only truly path-dependent form."""
    if spec.get("form") == "sup_past":
        scale = float(spec.get("scale", 1.0))
        # componentwise running max: |max xi - max eta| <= sup |xi - eta|
        return Form(lambda t, past: scale * past.max(axis=1), abs(scale), abs(scale), None, False)
    f = _state(spec, d)
    fn = f.fn
    return Form(lambda t, past: fn(past[:, -1, :]), f.lipschitz, f.growth, f.sup, f.dissipative)


def state_form(spec: dict, d: int) -> Form:
    f = _state(spec, d)
    fn = f.fn
    return Form(lambda t, x: fn(x), f.lipschitz, f.growth, f.sup, f.dissipative)


def diffusion_form(spec: dict, d: int) -> Form:
    form = spec.get("form", "constant")
    if form == "constant":
        S = _mat(spec.get("scale", 1.0), d, "scale")
        return Form(lambda t, x: S, 0.0, 0.0, _opnorm(S))
    if form == "bounded_sine":
        base = float(spec.get("base", 1.0))
        amp = float(spec.get("amplitude", 0.5))
        eye = np.eye(d)

        def sig(t, x):
            return (base + amp * np.sin(x))[:, :, None] * eye
        return Form(sig, abs(amp), 0.0, abs(base) + abs(amp))
    if form == "geometric":
        scale = float(spec.get("scale", 1.0))
        eye = np.eye(d)

        def sig(t, x):
            return (scale * x)[:, :, None] * eye
        return Form(sig, abs(scale), 0.0, None)
    raise InvalidArgumentError("unknown diffusion form %r" % (form,))


def perturbation_form(spec: dict, d: int) -> DriftPerturbation:
    form = spec.get("form", "zero")
    budget = spec.get("budget")
    if form == "zero":
        ev = lambda t, past: np.zeros((past.shape[0], d))
    elif form == "constant":
        c = _vec(spec.get("value", 1.0), d, "value")
        ev = lambda t, past: np.broadcast_to(c, (past.shape[0], d))
    elif form == "linear_time":
        s = _vec(spec.get("slope", 1.0), d, "slope")
        ev = lambda t, past: np.broadcast_to(s * t, (past.shape[0], d))
    elif form == "sine_state":
        amp = float(spec.get("amplitude", 1.0))
        ev = lambda t, past: amp * np.sin(past[:, -1, :])
    else:
        raise InvalidArgumentError("unknown perturbation form %r" % (form,))
    return DriftPerturbation(ev, budget=budget, name=form)


def operator_from_spec(spec: dict, d: int) -> MonotoneOperator:
    kind = spec.get("kind")
    if kind == "linear":
        return LinearMonotone(_mat(spec.get("matrix", 1.0), d, "matrix"))
    if kind == "box":
        return NormalCone("box", d, lower=spec.get("lower"), upper=spec.get("upper"))
    if kind == "halfspace":
        return NormalCone("halfspace", d, normal=spec.get("normal"), offset=float(spec.get("offset", 0.0)))
    if kind == "ordered":
        return NormalCone("ordered", d)
    if kind == "dyson":
        return ConcaveLogPotentialGradient(float(spec.get("gamma", 0.0)), d)
    raise InvalidArgumentError("unknown operator kind %r" % (kind,))


def build_problem(spec: dict, yosida: Optional[tuple] = None) -> SdeProblem:
    """SdeProblem from a ``problem`` config section.

    ``yosida=(operator, n)`` replaces the drift ``b`` by the Yosida drift of
    ``operator``.
    """
    d = int(spec["dimension"])
    z = _vec(spec.get("initial_point", 0.0), d, "initial_point")
    b = drift_form(spec.get("drift_b", {"form": "zero"}), d)
    m_spec = spec.get("drift_m", {"form": "zero"})
    m = state_form(m_spec, d)
    s = diffusion_form(spec.get("diffusion", {"form": "constant"}), d)
    K = spec.get("lipschitz_K")
    if K is None:
        K = max(s.lipschitz, m.lipschitz)
    sigma_sup = spec.get("sigma_sup", s.sup)
    dissipative = bool(spec.get("dissipative", b.dissipative))
    base = SdeProblem(
        dimension=d, initial_point=z, diffusion_sigma=s.fn,
        drift_b=None if spec.get("drift_b", {}).get("form", "zero") == "zero" else b.fn,
        drift_m=None if m_spec.get("form", "zero") == "zero" else m.fn,
        lipschitz_K=float(K), growth_N=float(spec.get("growth_N", b.growth)),
        sigma_sup=None if sigma_sup is None else float(sigma_sup),
        drift_lipschitz=float(spec.get("drift_lipschitz", b.lipschitz)),
        dissipative=dissipative, name=spec.get("name", ""),
    )
    if yosida is not None:
        op, n = yosida
        return make_yosida_problem(base, YosidaApprox(op, n))
    return base
