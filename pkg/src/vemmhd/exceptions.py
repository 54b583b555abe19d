"""Exception hierarchy shared by all modules."""


class VemError(Exception):
    """Base class for every error raised by vemmhd."""


class ParseError(VemError):
    """Malformed mesh or configuration file."""


class GeometryError(VemError):
    """A mesh violates one of the geometric invariants."""

    def __init__(self, message, cell=None):
        super().__init__(message if cell is None else f"cell {cell}: {message}")
        self.cell = cell


class NumericalRankError(VemError):
    """A local Gram matrix is rank deficient (degenerate cell)."""


class SingularSystemError(VemError):
    """A local projector solve failed."""


class SolveError(VemError):
    """A global linear solve failed or returned a large residual."""


class DegenerateScalarError(VemError):
    """The scalar auxiliary equation has a vanishing coefficient."""


class NonmonotoneEnergyError(VemError):
    """Discrete energy increased during an unforced run."""


class ConfigError(VemError):
    """Invalid run configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DivergenceCheckError(VemError):
    """A computed velocity or current is not divergence free to tolerance."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = list(cells)
