"""Exception types shared across the package."""


class GerbeError(Exception):
    """Base class for all package errors."""


class TagMismatchError(GerbeError):
    """An element was passed to an operation expecting the other group/algebra."""


class ContainmentError(GerbeError):
    """A path or cell leaves the open set it was claimed to lie in."""


class MarginError(ContainmentError):
    """A finite-difference stencil would exit the open set."""


class DomainError(GerbeError):
    """Input outside the valid domain of an operation (e.g. log far from identity)."""


class ConstructionError(GerbeError):
    """A fixture or cocycle could not be built consistently."""


class GridNotFoundError(GerbeError):
    """No grid assignment exists up to the search depth."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class GridDriftError(GerbeError):
    """A grid assignment stops being valid for perturbed members of a family."""


class EdgeMismatchError(GerbeError):
    """Two squares were glued along edges whose labels disagree."""


class TargetGateError(GerbeError):
    """A transport's target relation residual exceeded the configured gate."""


class ConfigError(GerbeError):
    """Invalid CLI/scenario configuration."""
