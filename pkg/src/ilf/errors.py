"""Shared exception hierarchy."""


class IlfError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(IlfError):
    """Input or request rejected before doing any work."""
