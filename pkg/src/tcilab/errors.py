"""Exception hierarchy shared by all tcilab modules."""


class TcilabError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TcilabError, ValueError):
    pass


class SimulationError(TcilabError, RuntimeError):
    """A drift, diffusion or perturbation produced a non-finite value.

    ``step`` and ``path_index`` locate the first offending evaluation.
    """

    def __init__(self, message, step=None, path_index=None):
        super().__init__(message)
        self.step = step
        self.path_index = path_index


class SizeError(TcilabError, ValueError):
    pass


class DomainError(TcilabError, ValueError):
    pass


class NumericalError(TcilabError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(TcilabError, ValueError):
    """Schema violations found while parsing an experiment config.

    All violations are collected; ``errors`` holds ``(path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = ["%s: %s" % (p or "<root>", m) for p, m in self.errors]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))
