"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError`; violations of a
physical constraint (pit too wide, aliasing, infeasible control problem...)
derive from :class:`PhysicsError`.  The CLI maps the two families onto
distinct exit codes.
"""


class RareQCError(Exception):
    """Base class for all package errors."""


class ConfigError(RareQCError, ValueError):
    """Invalid configuration or unknown experiment name."""


class ConfigInvalid(ConfigError):
    """Config failed validation; ``diagnostics`` maps field paths to messages."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class UnknownRecipe(ConfigError):
    pass


class PhysicsError(RareQCError, ValueError):
    """A request that violates a physical or numerical constraint."""


class PitTooWide(PhysicsError):
    pass


class NoPit(PhysicsError):
    pass


class TruncationError(PhysicsError):
    pass


class AliasingError(PhysicsError):
    pass


class OutOfBand(PhysicsError):
    pass


class SidebandOverlap(PhysicsError):
    pass


class StepSizeTooLarge(PhysicsError):
    pass


class AdiabaticityViolation(PhysicsError):
    pass


class Infeasible(PhysicsError):
    pass


class Stalled(PhysicsError):
    """Optimizer made no progress; the best result so far is kept on ``result``."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateMeans(PhysicsError):
    pass


class NoChain(PhysicsError):
    pass
