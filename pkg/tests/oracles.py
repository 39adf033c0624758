"""Independent reference computations used by the test-suite.

Nothing here imports tcilab. Values produced by these functions are frozen
in ``frozen_values.json`` by ``freeze_oracles.py``; tests compare the package
against the frozen numbers and check that the oracles still reproduce them.
"""

from fractions import Fraction
from itertools import permutations

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def thm1_constant(K):
    K = mp.mpf(K)
    return 6 * mp.e ** (15 * K ** 2)


def gronwall(K, t):
    K, t = mp.mpf(K), mp.mpf(t)
    return 3 * t * mp.e ** (3 * K ** 2 * (4 + t))


def prop1(H, K, s, c, bracket="nested"):
    H, K, s, c = (mp.mpf(v) for v in (H, K, s, c))
    q = mp.e ** ((K ** 2 + 2 * K + 1) / 2)
    e1 = c * mp.mpf(2) ** mp.mpf(1.5) * s ** mp.mpf(1.5) * q
    if bracket == "nested":
        e2 = 2 * s * q * (1 + K * (K + 2) * q)
    else:
        e2 = 2 * s * q * (1 + K * (K + 2)) * q
    return e1 * mp.sqrt(H) + e2 * H


def prop2_coef(K, c, a):
    K, c, a = (mp.mpf(v) for v in (K, c, a))
    r = 1 - a * c * K
    return 2 / r ** 2 * mp.e ** ((c * K / a + r + 2 * K + K ** 2) / r)


def prop2_grid(K, c, n=10_000):
    """Grid search over ``a`` in ``(0, 1/(cK))``, refined twice around the best point."""
    hi = 1.0 / (c * K)
    lo_, hi_ = 0.0, hi
    best = None
    for _ in range(3):
        a = np.linspace(lo_, hi_, n + 2)[1:-1]
        a = a[(a > 0) & (a < hi)]
        r = 1 - a * c * K
        logf = np.log(2) - 2 * np.log(r) + (c * K / a + r + 2 * K + K * K) / r
        j = int(np.argmin(logf))
        best = (float(a[j]), float(np.exp(logf[j])))
        step = a[1] - a[0]
        lo_, hi_ = max(a[j] - step, 1e-300), min(a[j] + step, hi * (1 - 1e-15))
    return best


def prop2_min_mp(K, c):
    """High-precision minimiser from the stationarity condition in ``u = acK``."""
    K, c = mp.mpf(K), mp.mpf(c)

    def logf(a):
        r = 1 - a * c * K
        return mp.log(2) - 2 * mp.log(r) + (c * K / a + r + 2 * K + K ** 2) / r

    hi = 1 / (c * K)
    ag = mp.mpf(prop2_grid(float(K), float(c))[0])
    a0 = mp.findroot(lambda a: mp.diff(logf, a), (ag * mp.mpf("0.99"), ag * mp.mpf("1.01")),
                     solver="anderson")
    assert 0 < a0 < hi
    return a0, mp.e ** logf(a0)


def brute_force_assignment(C):
    n = C.shape[0]
    return min(sum(C[i, p[i]] for i in range(n)) for p in permutations(range(n))) / n


def euler_linear_shift(theta, n_steps, horizon=1.0):
    """Euler recursion for the deterministic difference ``d' = -theta d + 1``."""
    h = Fraction(horizon) / n_steps
    d = Fraction(0)
    out = [d]
    for _ in range(n_steps):
        d = d + h * (1 - theta * d)
        out.append(d)
    return out


def left_point_entropy_2t(n_steps):
    """``1/2 sum (2 t_k)^2 h`` over ``t_k = k h``, ``k < n`` as an exact rational."""
    h = Fraction(1, n_steps)
    return sum(Fraction(1, 2) * (2 * k * h) ** 2 * h for k in range(n_steps))


def two_particle_resolvent(x, lam):
    """``J`` for the log potential with two particles: the gap solves ``s^2 - D s - 2 lam = 0``."""
    x = np.asarray(x, dtype=float)
    D = x[..., 1] - x[..., 0]
    s = 0.5 * (D + np.sqrt(D * D + 8 * lam))
    m = 0.5 * (x[..., 0] + x[..., 1])
    return np.stack([m - s / 2, m + s / 2], axis=-1)


def dyson_direct(x, gamma):
    x = [mp.mpf(v) for v in x]
    return [gamma * sum(1 / (x[i] - x[j]) for j in range(len(x)) if j != i) for i in range(len(x))]


def gbm_exact(x0, mu, sigma, W_T, T):
    return x0 * np.exp((mu - 0.5 * sigma ** 2) * T + sigma * W_T)
