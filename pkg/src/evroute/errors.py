"""Exception hierarchy shared by all solvers and the CLI.

Exit-code mapping used by the command line front end:

* 3 -- :class:`ParseError`, :class:`ValidationError`
* 4 -- :class:`InfeasibleError`
* 5 -- :class:`SolverError` (negative cycles, enumeration caps,
  non-convergence)
"""


class EvrouteError(Exception):
    """Base class for all library errors."""


class ParseError(EvrouteError):
    """Instance file is malformed or misses required fields."""


class ValidationError(EvrouteError):
    """Instance parsed but violates a structural invariant."""


class InfeasibleError(EvrouteError):
    """No feasible solution exists for the requested problem."""


class SolverError(EvrouteError):
    """A solver could not produce a trustworthy answer."""


class NegativeCycleError(SolverError):
    """A negative-weight cycle lies on an origin-to-destination walk."""


class CapExceededError(SolverError):
    """An enumeration exceeded its configured size cap."""
