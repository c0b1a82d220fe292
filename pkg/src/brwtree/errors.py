class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class ResourceError(RuntimeError):
    """Raised when a request would exceed the configured memory or depth budget."""


class TruncationError(RuntimeError):
    """Raised when a Poisson-Dirichlet sample cannot reach its tail tolerance."""

    def __init__(self, message, *, atoms, tail_mass):
        super().__init__(f"{message} (atoms={atoms}, tail_mass={tail_mass:.3e})")
        self.atoms = atoms
        self.tail_mass = tail_mass
