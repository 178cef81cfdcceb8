"""Exception taxonomy shared by all modules."""


class SphereLabError(Exception):
    """Base class for all library errors."""


class DomainError(SphereLabError):
    """An argument lies outside the documented domain of an operation."""


class PoleError(SphereLabError):
    """A point is too close to a projection pole for stable evaluation."""


class DegeneracyError(SphereLabError):
    """An immersion loses rank, or a construction hits a principal radius."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class NumericError(SphereLabError):
    """A numerical kernel failed (eigensolver, ill conditioning, ...)."""


class HemisphereError(SphereLabError):
    """A point set is not contained in an open hemisphere."""


class ResolutionError(SphereLabError):
    """A discrete answer is ambiguous at the current sampling resolution."""
