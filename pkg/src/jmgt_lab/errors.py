"""Exception types raised by the lab."""


class JMGTError(Exception):
    """Base class for all lab failures."""


class ConfigError(JMGTError, ValueError):
    """Invalid configuration; the message names the offending key path."""


class DegeneracyError(JMGTError, RuntimeError):
    """The tau = 0 Westervelt coefficient 1 + 2*eta*u fell below the margin."""


class NonConvergenceError(JMGTError, RuntimeError):
    """An iteration (steady state or fixed point) failed to converge."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NearSingularError(JMGTError, ArithmeticError):
    """A Helmholtz symbol is (numerically) resonant."""

    def __init__(self, message, m=None, j=None):
        super().__init__(message)
        self.m = m
        self.j = j
