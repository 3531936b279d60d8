"""Exception hierarchy shared by every module."""


class PslpError(Exception):
    """Base class. ``seed`` is filled in when the failure happened inside an episode."""

    seed = None

    def __str__(self):
        msg = super().__str__()
        if self.seed is not None:
            msg = f"{msg} (episode seed {self.seed})"
        return msg


class MalformedHeader(PslpError):
    pass


class DimensionMismatch(PslpError):
    pass


class ParseError(PslpError):
    pass


class EmptyBank(PslpError):
    pass


class DimensionError(PslpError):
    pass


class BadNeighborCount(PslpError):
    pass


class BadAlpha(PslpError):
    pass


class SingularSystem(PslpError):
    pass


class NoConvergence(PslpError):
    pass


class LabelOutOfRange(PslpError):
    pass


class EmptyClass(PslpError):
    pass


class InsufficientClasses(PslpError):
    pass


class InsufficientSamples(PslpError):
    pass


class IndivisibleQueryCount(PslpError):
    pass


class ConfigError(PslpError):
    pass


class ConvergenceWarning(UserWarning):
    """Iterative scaling stopped at ``max_iter`` before reaching tolerance."""
