"""Exception hierarchy shared across the package."""


class RecurLabError(Exception):
    """Base class for all recurlab errors."""


class DomainError(RecurLabError, ValueError):
    """Input outside the valid domain (e.g. x not in [0,1], bad grid)."""


class SingularInput(RecurLabError, ValueError):
    """Evaluation requested exactly at a singular point where the map is undefined."""


class SingularOrbit(RecurLabError):
    """An orbit iterate landed too close to the singular set to continue."""


class GrazingCollision(RecurLabError):
    """Billiard state too close to tangential (|phi| ~ pi/2) to propagate."""


class HorizonExceeded(RecurLabError):
    """No scatterer intersection within the table's horizon bound."""


class BoundaryBall(RecurLabError, ValueError):
    """Requested phase ball touches the boundary |phi| = pi/2."""


class BoundaryState(RecurLabError, ValueError):
    """Phase point lies exactly on the boundary |phi| = pi/2."""


class OrderError(RecurLabError, ValueError):
    """Time tuple not strictly increasing / out of range."""


class EmptySeriesError(RecurLabError):
    """No qualifying checkpoint in a log-law series."""


class ConfigError(RecurLabError, ValueError):
    """Experiment configuration fails schema or consistency checks."""


class TableError(RecurLabError, ValueError):
    """Billiard table geometry invalid (overlap or open corridor)."""


class MissingInputError(RecurLabError, FileNotFoundError):
    """A required input file is absent."""
