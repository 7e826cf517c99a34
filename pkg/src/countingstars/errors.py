"""Exception hierarchy shared across the package."""


class CountingStarsError(Exception):
    """Base class for every error raised by this package."""


# orbit / TLE
class TLEError(CountingStarsError, ValueError):
    pass


class ChecksumMismatch(TLEError):
    pass


class MalformedField(TLEError):
    pass


class LineLength(TLEError):
    pass


class NoConvergence(CountingStarsError, ArithmeticError):
    pass


class TimestampMismatch(CountingStarsError, ValueError):
    pass


# topology / routing
class PolicyInfeasible(CountingStarsError):
    """A mandated grid link failed the visibility test."""


class Unreachable(CountingStarsError):
    pass


# hashing
class CantorOverflow(CountingStarsError, OverflowError):
    pass


class EmptySet(CountingStarsError, ValueError):
    pass


class SeedSearchOverflow(CountingStarsError):
    pass


# on-board node
class NoActiveSeed(CountingStarsError):
    pass


class StaleSeed(CountingStarsError):
    pass


# traffic
class NoAccessSatellite(CountingStarsError):
    pass


# metrics
class EmptyTruth(CountingStarsError, ValueError):
    pass


class ZeroTruth(CountingStarsError, ValueError):
    pass


class MissingGridPoint(CountingStarsError, KeyError):
    pass


# configuration / harness
class ConfigError(CountingStarsError, ValueError):
    """Scenario configuration problem; carries per-field diagnostics."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class InvariantBreach(CountingStarsError, RuntimeError):
    pass
