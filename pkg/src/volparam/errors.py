"""Exception types shared across the pipeline."""


class VolparamError(Exception):
    """Base class for every error raised by this package."""


class ParseError(VolparamError):
    """A mesh file could not be parsed in its declared format."""


class TopologyError(VolparamError):
    """Mesh connectivity violates the closed, orientable, genus-0 requirements.

    Offending elements (edge vertex pairs, triangle indices, ...) are listed
    in the message and kept in structured form on the instance.
    """

    def __init__(self, message, *, edges=None, triangles=None):
        super().__init__(message)
        self.edges = list(edges) if edges is not None else []
        self.triangles = list(triangles) if triangles is not None else []


class IoError(VolparamError):
    """Reading or writing a pipeline artifact failed."""


class ResolutionTooCoarse(VolparamError):
    """The voxel grid has no usable interior at the requested resolution."""


class NoInterior(VolparamError):
    """A grid operation needed interior nodes but none exist."""


class NotConverged(VolparamError):
    """Iteration cap reached before the residual dropped below tolerance.

    Carries the partially solved grid and the report for diagnosis.
    """

    def __init__(self, message, *, grid=None, report=None):
        super().__init__(message)
        self.grid = grid
        self.report = report


class UndefinedCorner(VolparamError):
    """A cell touches far-exterior nodes that carry no usable potential."""


class OutOfDomain(VolparamError):
    """A query point lies outside the region where the field is defined."""


class StalledError(VolparamError):
    """A streamline stopped making progress before reaching terminal potential."""

    def __init__(self, message, *, position=None, streamline=None):
        super().__init__(message)
        self.position = position
        self.streamline = streamline


class StepLimitError(VolparamError):
    """A streamline exceeded its step budget."""

    def __init__(self, message, *, streamline=None):
        super().__init__(message)
        self.streamline = streamline


class BatchError(VolparamError):
    """Too many seeds failed in a batch trace; per-seed errors attached."""

    def __init__(self, message, *, failures=None):
        super().__init__(message)
        self.failures = dict(failures) if failures else {}


class TooManyFailures(VolparamError):
    """Atlas construction aborted because the failed-seed fraction is too high."""

    def __init__(self, message, *, failures=None):
        super().__init__(message)
        self.failures = dict(failures) if failures else {}


class DegenerateEndpoint(VolparamError):
    """Angles are undefined because the point coincides with the shape center."""


class NoNearbySamples(VolparamError):
    """A parameter-space query fell farther than the threshold from every sample."""


class InvalidParams(VolparamError):
    """Shape-generator parameters are out of their valid range."""


class ConfigError(VolparamError):
    """The pipeline configuration file or flag set is invalid."""


class StageError(VolparamError):
    """A pipeline stage failed; names the stage and wraps the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
