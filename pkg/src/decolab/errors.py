"""Exception hierarchy shared by the library and the command-line runner."""


class DecolabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(DecolabError):
    exit_code = 2


class DimensionMismatch(DecolabError, ValueError):
    exit_code = 2


class TruncationError(DecolabError):
    """A Fock truncation discards more probability than the policy allows."""

    exit_code = 3


class ValidityError(DecolabError):
    """A closed form was requested outside the domain it was derived for."""

    exit_code = 3


class ConvergenceError(DecolabError):
    exit_code = 3


class EnsembleExplosion(DecolabError):
    exit_code = 3


class DegenerateModel(DecolabError):
    """Spectral weight (or a fit) vanishes where a finite answer is needed."""

    exit_code = 4


class InfiniteTimescale(DecolabError):
    """The requested rate is exactly zero; the timescale is infinite."""

    exit_code = 4


class QuadratureError(DecolabError):
    exit_code = 4


class NoCrossing(DecolabError):
    """The separability verdict does not change over the scanned bracket."""

    exit_code = 0

    def __init__(self, verdict: bool, message: str = ""):
        self.verdict = verdict
        super().__init__(message or f"uniform verdict {'PASS' if verdict else 'FAIL'}")
