"""Exception hierarchy shared by all fockmrf modules."""


class FockMrfError(Exception):
    """Base class for library errors."""


class ValidationError(FockMrfError, ValueError):
    """A model document violates the schema or a model invariant.

    ``path`` locates the offending field, e.g. ``two_cliques[0].p[1][2]``.
    """

    def __init__(self, message, path=None):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ModelError(FockMrfError):
    """The model cannot perform a requested update (e.g. all creation weights vanish)."""


class ModeError(FockMrfError):
    """An operation was called on a state outside its domain (e.g. multi-occupancy for HCE)."""


class CapacityError(FockMrfError):
    """A state space or operator expansion exceeds the configured size guard."""

    def __init__(self, message, size=None):
        self.size = size
        super().__init__(message)


class ReducibilityError(FockMrfError):
    """The transition kernel has more than one closed communicating class."""

    def __init__(self, message, classes=()):
        self.classes = [list(c) for c in classes]
        super().__init__(message)


class ConvergenceError(FockMrfError):
    """Power iteration did not reach the requested tolerance within the iteration cap."""
