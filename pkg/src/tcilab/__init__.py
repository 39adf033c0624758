"""tcilab: numerical checks of transportation-cost inequalities for diffusions.

Submodules: :mod:`~tcilab.sde` (grids, Euler-Maruyama), :mod:`~tcilab.girsanov`
(shifted couplings and entropy), :mod:`~tcilab.transport` (empirical OT),
:mod:`~tcilab.monotone` (resolvents, Yosida and Dyson drifts),
:mod:`~tcilab.bounds` (constants and verdicts) and :mod:`~tcilab.experiments`
(config-driven runs, also exposed as the ``tcilab`` command).
"""

__version__ = "0.1.0"
