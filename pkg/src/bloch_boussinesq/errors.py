"""Exception types raised across the package.

Every error derives from :class:`BoussinesqError`; the ones that flag a bad
argument also derive from :class:`ValueError` so callers can catch either.
"""


class BoussinesqError(Exception):
    """Base class for all package errors."""


class NonZeroMean(BoussinesqError, ValueError):
    """A field that must be mean-free (for an inverse derivative) is not."""


class DegenerateBranch(BoussinesqError):
    """The first two Bloch bands touch inside the requested gap region."""


class GapViolation(BoussinesqError, ValueError):
    """A Bloch number lies outside the spectral-gap region of the first band."""


class StencilOutsideGap(BoussinesqError, ValueError):
    """A finite-difference stencil reaches outside the spectral gap."""


class BlowUp(BoussinesqError):
    """A time integration exceeded its norm ceiling or produced NaN/Inf."""


class ShockTooClose(BoussinesqError, ValueError):
    """The requested end time is too close to gradient blow-up."""


class HyperbolicityLoss(BoussinesqError):
    """The Whitham flux derivative became non-positive."""


class CutoffViolation(BoussinesqError, ValueError):
    """Amplitude spectrum leaks past the Bloch cutoff."""


class NoContraction(BoussinesqError):
    """A fixed-point iteration failed to contract."""


class NotPositiveDefinite(BoussinesqError, ValueError):
    """The energy operator lost positive definiteness."""


class NonPositiveValue(BoussinesqError, ValueError):
    """A log-log fit received a non-positive value."""


class ConfigError(BoussinesqError, ValueError):
    """An experiment configuration is invalid."""
