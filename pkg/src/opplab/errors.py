"""Exception types shared across the package."""


class OppLabError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateForm(OppLabError):
    """The quadratic form is singular (or numerically indistinguishable from one)."""


class DefiniteForm(OppLabError):
    """An operation that needs an indefinite form received a definite one."""


class SignatureMismatch(OppLabError):
    """The form is not congruent to the reference hyperbolic form of determinant -1."""


class CapacityExceeded(OppLabError):
    """An enumeration would touch more lattice points than the configured ceiling."""


class NoCandidate(OppLabError):
    """A search space turned out to contain no admissible candidate."""


class EmptyConfig(OppLabError):
    """A finite point configuration with zero points was passed where mass is required."""
