"""Exception types shared across the package."""


class HybridctlError(Exception):
    """Base class for all package-specific failures."""


class NumericalDivergenceError(HybridctlError):
    """A simulation produced a non-finite state or control."""


class SynthesisError(HybridctlError):
    """Gain synthesis is impossible for the given system (e.g. not stabilizable)."""


class RiccatiConvergenceError(HybridctlError):
    """The Riccati solver finished but its residual is above tolerance."""


class PolicyParseError(HybridctlError):
    """A policy file could not be parsed.

    Carries the 1-based line number at which parsing failed.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class PolicyVersionError(PolicyParseError):
    """The policy file declares a format version this build does not read."""
