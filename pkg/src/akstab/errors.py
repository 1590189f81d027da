"""Exception hierarchy for the toolkit."""


class AkstabError(Exception):
    """Base class for every error raised by akstab."""


class InvalidField(AkstabError, ValueError):
    pass


class InvalidDensity(AkstabError, ValueError):
    pass


class RankError(AkstabError, ValueError):
    pass


class MetricError(AkstabError, ValueError):
    pass


class StructureError(AkstabError, ValueError):
    pass


class DegenerateStructure(StructureError):
    pass


class SymplecticError(AkstabError, ValueError):
    pass


class PathRangeError(AkstabError, ValueError):
    pass


class PrimitivityError(AkstabError, ValueError):
    pass


class AmbiguousKernel(AkstabError, RuntimeError):
    """Raised when the spectral gap above the kernel threshold is too small."""

    def __init__(self, message, eigenvalues=None, tol=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.tol = tol


class SolveError(AkstabError, RuntimeError):
    pass


class NotAPotential(AkstabError, ValueError):
    """The deformed tensor g_f failed to be positive definite somewhere."""


class DegenerateBasis(AkstabError, ValueError):
    pass


class Diverged(AkstabError, RuntimeError):
    pass


class FormatError(AkstabError, ValueError):
    pass
