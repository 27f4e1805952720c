"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid configuration value, shape mismatch, or incompatible inputs."""


class PartitionError(RuntimeError):
    """Data partitioning could not satisfy the per-client minimums."""
