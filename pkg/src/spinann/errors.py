"""Exception types shared across the simulator."""


class SpinAnnError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SpinAnnError):
    """Invalid configuration: bad parameter values, malformed tables or files."""


class DomainError(SpinAnnError, ValueError):
    """An argument is outside the physically valid range of an operation."""


class DisturbanceError(SpinAnnError):
    """A vertical sense current large enough to disturb the domain wall.

    The simulator refuses such reads instead of modeling read-induced drift.
    """


class WriteError(SpinAnnError):
    """A memristor write did not converge within the allowed pulse budget."""


class TieError(SpinAnnError):
    """Two output neurons tied at machine precision; the winner is undefined."""


class SearchError(SpinAnnError):
    """A hidden-size search hit its cap without reaching the target accuracy."""


class TrainingError(SpinAnnError):
    """A fixed training schedule failed to reach its required accuracy."""
