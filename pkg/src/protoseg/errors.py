"""Exception types shared across the package."""


class ProtosegError(Exception):
    """Base class for all package errors."""


class DimensionError(ProtosegError):
    """Vector lengths do not match the schema."""


class ParameterError(ProtosegError):
    """Invalid parameter value (e.g. negative gamma)."""


class SchemaError(ProtosegError):
    """Malformed schema or data not conforming to it."""


class EmptyClusterError(ProtosegError):
    """Operation on a cluster with no members."""


class InfeasibleKError(ProtosegError):
    """Requested cluster count cannot be satisfied by the data."""


class DegenerateCategoricalsError(ProtosegError):
    """All categorical attributes are constant; gamma estimate undefined."""


class UnknownCategoryError(ProtosegError):
    """Unseen category encountered in strict mode."""


class InsufficientCurveError(ProtosegError):
    """Elbow detection needs at least three curve points."""


class JoinError(ProtosegError):
    """A data join cannot proceed (e.g. empty lookup table)."""


class EmptyDatasetError(ProtosegError):
    """No usable rows after filtering / feature selection."""
