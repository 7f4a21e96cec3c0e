"""Errors."""


class SmclError(Exception):
    """Base of every error raised by this package."""

    pass


class MapError(SmclError):
    """A map or annotation file is missing, corrupt or inconsistent."""

    pass


class TraceError(SmclError):
    """A ray was started outside the map."""

    pass


class UnknownClassError(SmclError):
    """A detection refers to a class that the map's class table does not contain."""

    pass


class TrajectoryError(SmclError):
    """Waypoints cannot be connected by a collision-free trajectory."""

    pass


class SequenceFormatError(SmclError):
    """A sequence file violates its schema."""

    pass


class EstimationError(SmclError):
    """A pose cannot be estimated from the particle set."""

    pass


class EvaluationError(SmclError):
    """Estimates and checkpoints cannot be evaluated together."""

    pass


class ConfigError(SmclError):
    """A configuration or manifest file contains unknown keys or invalid values."""

    pass
