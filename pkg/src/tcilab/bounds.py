"""Explicit transport-inequality constants and verdicts.

Three inequalities are supported, all bounding the squared uniform-norm
Wasserstein distance ``d_W^2(P, Q)`` by the relative entropy ``H = H(Q|P)``:

``thm1``
    Lipschitz drift and diffusion: ``d_W^2 <= 6 exp(15 K^2) H``.
``prop1``
    dissipative drift plus ``K``-Lipschitz ``m`` and bounded ``sigma``:
    ``d_W^2 <= E1 sqrt(H) + E2 H``.
``prop2``
    as ``prop1`` with unbounded ``sigma``; a free parameter ``a`` with
    ``a c K < 1`` is minimised numerically.

``c`` is the constant of the Davis (BDG, p = 1) inequality; it has no
canonical value, so it is configurable and echoed in every report.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import InvalidArgumentError

__all__ = [
    "DEFAULT_C_DAVIS",
    "BoundParams",
    "BoundReport",
    "theorem1_constant",
    "gronwall_envelope",
    "prop1_coefficients",
    "prop1_bound",
    "prop2_coefficient",
    "prop2_bound",
    "golden_section",
    "verify_inequality",
    "REPORT_CSV_FIELDS",
    "reports_to_csv",
]

DEFAULT_C_DAVIS = 2.0 * math.sqrt(2.0)
BRACKETS = ("nested", "factored")
TAGS = ("thm1", "prop1", "prop2")


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the constants.

    ``bracket`` selects the reading of the second coefficient of ``prop1``:
    ``"nested"`` is ``2 s e^q (1 + K(K+2) e^q)``, ``"factored"`` is
    ``2 s e^q (1 + K(K+2)) e^q`` with ``q = (K^2 + 2K + 1) / 2``.
    """

    K: float = 0.0
    sigma_sup: Optional[float] = None
    c_davis: float = DEFAULT_C_DAVIS
    a: Optional[float] = None
    delta: Optional[float] = None
    horizon: float = 1.0
    bracket: str = "nested"

    def __post_init__(self):
        if self.K < 0:
            raise InvalidArgumentError("K must be nonnegative")
        if not self.c_davis > 0:
            raise InvalidArgumentError("c_davis must be positive")
        if self.bracket not in BRACKETS:
            raise InvalidArgumentError("bracket must be one of %s" % (BRACKETS,))
        if self.a is not None:
            if not self.a > 0:
                raise InvalidArgumentError("a must be positive")
            if self.a * self.c_davis * self.K >= 1:
                raise InvalidArgumentError("a * c * K must be < 1 (got %g)" % (self.a * self.c_davis * self.K))


def theorem1_constant(K: float) -> float:
    """``6 exp(15 K^2)``."""
    if K < 0:
        raise InvalidArgumentError("K must be nonnegative")
    return 6.0 * math.exp(15.0 * K * K)


def gronwall_envelope(K: float, t: float) -> float:
    """``3 t exp(3 K^2 (4 + t))``, the factor in front of ``E int_0^t |vdot|^2``.

    At ``t = 1`` twice this equals :func:`theorem1_constant`.
    """
    if K < 0:
        raise InvalidArgumentError("K must be nonnegative")
    if not 0 < t <= 1:
        raise InvalidArgumentError("t must lie in (0, 1]")
    return 3.0 * t * math.exp(3.0 * K * K * (4.0 + t))


def prop1_coefficients(K: float, sigma_sup: float, c_davis: float = DEFAULT_C_DAVIS,
                       bracket: str = "nested") -> tuple:
    """``(E1, E2)`` such that the bound reads ``E1 sqrt(H) + E2 H``."""
    if sigma_sup is None or not math.isfinite(sigma_sup):
        raise InvalidArgumentError(
            "prop1 needs a finite sigma_sup; for unbounded diffusions use prop2_bound")
    if bracket not in BRACKETS:
        raise InvalidArgumentError("bracket must be one of %s" % (BRACKETS,))
    e = math.exp(0.5 * (K * K + 2.0 * K + 1.0))
    e1 = c_davis * 2.0 ** 1.5 * sigma_sup ** 1.5 * e
    if bracket == "nested":
        e2 = 2.0 * sigma_sup * e * (1.0 + K * (K + 2.0) * e)
    else:
        e2 = 2.0 * sigma_sup * e * (1.0 + K * (K + 2.0)) * e
    return e1, e2


def prop1_bound(H: float, params: BoundParams) -> float:
    if H < 0:
        raise InvalidArgumentError("H must be nonnegative")
    e1, e2 = prop1_coefficients(params.K, params.sigma_sup, params.c_davis, params.bracket)
    return e1 * math.sqrt(H) + e2 * H


def prop2_coefficient(K: float, c_davis: float, a: float) -> float:
    """``2/(1-acK)^2 * exp((cK/a + 1 - acK + 2K + K^2) / (1 - acK))``."""
    r = 1.0 - a * c_davis * K
    if r <= 0:
        raise InvalidArgumentError("a * c * K must be < 1")
    return 2.0 / (r * r) * math.exp((c_davis * K / a + r + 2.0 * K + K * K) / r)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo, hi, xtol=1e-13, max_iter=500):
    """Minimiser of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xtol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _minimise_prop2(K, c):
    # work in u = a c K in (0, 1); the log-coefficient is convex in u
    def f(u):
        r = 1.0 - u
        return -2.0 * math.log(r) + (c * c * K * K / u + r + 2.0 * K + K * K) / r

    if c * K < 1e-8:
        # small-K asymptote: f ~ 1 + 2K + 2u + (cK)^2/u, so u* ~ cK/sqrt(2)
        return 1.0 / math.sqrt(2.0)
    u = golden_section(f, 1e-15, 1.0 - 1e-12)
    return u / (c * K)


def prop2_bound(H: float, K: float, c_davis: float = DEFAULT_C_DAVIS,
                a: Optional[float] = None) -> tuple:
    """``(value, a_used)`` for the unbounded-diffusion inequality.

    With ``a`` omitted the coefficient is minimised over ``a in (0, 1/(cK))``.
    At ``K = 0`` the constraint disappears and the coefficient is ``2e``;
    ``a_used`` is then ``None``.
    """
    if H < 0:
        raise InvalidArgumentError("H must be nonnegative")
    if K < 0:
        raise InvalidArgumentError("K must be nonnegative")
    if K == 0:
        return 2.0 * math.e * H, None
    if a is not None:
        if not a > 0 or a * c_davis * K >= 1:
            raise InvalidArgumentError("need a > 0 and a * c * K < 1")
        return prop2_coefficient(K, c_davis, a) * H, float(a)
    a_opt = _minimise_prop2(K, c_davis)
    return prop2_coefficient(K, c_davis, a_opt) * H, a_opt


@dataclass
class BoundReport:
    tag: str
    lhs: float
    lhs_stderr: float
    H: float
    H_stderr: float
    rhs: float
    rhs_stderr: float
    margin: float
    verdict: str
    params: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    def csv_row(self, **extra) -> dict:
        row = {
            "tag": self.tag, "K": self.params.get("K"), "c": self.params.get("c_davis"),
            "sigma_sup": self.params.get("sigma_sup"), "bracket": self.params.get("bracket"),
            "H": self.H, "H_stderr": self.H_stderr, "lhs": self.lhs,
            "lhs_stderr": self.lhs_stderr, "rhs": self.rhs, "margin": self.margin,
            "verdict": self.verdict,
        }
        row.update(extra)
        return row


REPORT_CSV_FIELDS = ["tag", "K", "c", "sigma_sup", "bracket", "H", "H_stderr",
                     "lhs", "lhs_stderr", "rhs", "margin", "verdict"]


def verify_inequality(tag: str, lhs: tuple, H: tuple, params: BoundParams) -> BoundReport:
    """Compare a measured ``(lhs, stderr)`` against the bound at ``(H, stderr)``.

    The verdict is ``holds`` when ``lhs + 3 s <= rhs``, ``violated`` when
    ``lhs - 3 s > rhs`` and ``inconclusive`` otherwise, where ``s`` combines
    the two standard errors in quadrature. The entropy error is pushed
    through the bound linearly (delta method for the ``sqrt(H)`` term).
    """
    if tag not in TAGS:
        raise InvalidArgumentError("unknown inequality tag %r" % (tag,))
    lhs_v, lhs_se = float(lhs[0]), float(lhs[1])
    h, h_se = float(H[0]), float(H[1])
    echo = {"K": params.K, "c_davis": params.c_davis, "sigma_sup": params.sigma_sup,
            "bracket": params.bracket, "a": params.a}
    if tag == "thm1":
        c = theorem1_constant(params.K)
        rhs, rhs_se = c * h, c * h_se
    elif tag == "prop1":
        e1, e2 = prop1_coefficients(params.K, params.sigma_sup, params.c_davis, params.bracket)
        rhs = e1 * math.sqrt(max(h, 0.0)) + e2 * h
        deriv = e2 + (e1 / (2.0 * math.sqrt(h)) if h > 0 else 0.0)
        rhs_se = deriv * h_se
    else:
        coef, a_used = prop2_bound(1.0, params.K, params.c_davis, params.a)
        rhs, rhs_se = coef * h, coef * h_se
        echo["a"] = a_used
    s = math.hypot(lhs_se, rhs_se)
    if lhs_v + 3.0 * s <= rhs:
        verdict = "holds"
    elif lhs_v - 3.0 * s > rhs:
        verdict = "violated"
    else:
        verdict = "inconclusive"
    return BoundReport(tag, lhs_v, lhs_se, h, h_se, rhs, rhs_se, rhs - lhs_v, verdict, echo)


def reports_to_csv(rows, fields=None) -> str:
    """Render report rows (dicts from :meth:`BoundReport.csv_row`) as CSV text."""
    rows = list(rows)
    fields = list(fields or REPORT_CSV_FIELDS)
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                    for k in fields})
    return buf.getvalue()
