"""Exception hierarchy shared by all spinebound modules."""


class SpineBoundError(Exception):
    """Base class for every error raised by this package."""


class UnreachableTarget(SpineBoundError, ValueError):
    """A requested foot position lies outside the reachable annulus."""


class NearSingular(SpineBoundError, ValueError):
    """A requested foot position is within the singularity margin."""


class JointLimitViolation(SpineBoundError, ValueError):
    """A joint angle falls outside its mechanical range."""


class NumericalDivergence(SpineBoundError, FloatingPointError):
    """A simulation or optimisation state became non-finite or blew up."""


class EpisodeFinished(SpineBoundError, RuntimeError):
    """``step`` was called on an environment whose episode already ended."""


class ZeroDistance(SpineBoundError, ValueError):
    """Cost of transport requested for a log with no forward progress."""


class InsufficientStrides(SpineBoundError, ValueError):
    """Fewer than two touchdowns were found for the requested foot."""


class ConfigMismatch(SpineBoundError, ValueError):
    """Artifacts produced under different configurations were combined."""


class ConfigError(SpineBoundError, ValueError):
    """A configuration file or override is invalid.

    Attributes
    ----------
    field : str
        Dotted path of the offending field.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class IncompatibleArtifact(SpineBoundError, ValueError):
    """A checkpoint or log does not match the expected format or config."""
