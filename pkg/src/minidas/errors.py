"""Exception types shared across the pipeline."""


class MiniDasError(Exception):
    """Base class for all package errors."""


class ConfigError(MiniDasError):
    """Invalid configuration value or malformed config file."""


class SchemaError(MiniDasError):
    """Schema violation: unknown attribute, bad cardinality, universe mismatch."""


class DataError(MiniDasError):
    """Malformed or inconsistent data: unknown unit ids, negative counts, bad joins."""


class SolverError(MiniDasError):
    """Constraint system infeasible or solver invariant broken (never expected)."""


class ManifestError(MiniDasError):
    """Artifact tree does not match its recorded manifest."""
