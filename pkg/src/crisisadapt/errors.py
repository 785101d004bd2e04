"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 2, data
problems exit 3, incomplete experiments exit 4.
"""

from __future__ import annotations


class CrisisAdaptError(Exception):
    """Base class for all package errors."""


class ConfigError(CrisisAdaptError):
    """Invalid configuration or hyperparameters (exit code 2)."""


class DataError(CrisisAdaptError):
    """Base class for dataset problems (exit code 3)."""


class SchemaError(DataError):
    """Dataset file violates the TSV schema; message carries the line number."""


class UnknownEventError(DataError):
    """A record references an event id absent from the registry."""


class LabelError(DataError):
    """Raw labels outside the active unification map, or missing unified labels."""


class PlanError(DataError):
    """Invalid adaptation plan (e.g. target inside a multi-event source set)."""


class VocabError(DataError):
    """Vocabulary construction or lookup failure."""


class CheckpointError(CrisisAdaptError):
    """Base class for checkpoint persistence failures."""


class IntegrityError(CheckpointError):
    """Checkpoint payload does not match its manifest (length or digest)."""


class CompatibilityError(CheckpointError):
    """Checkpoint was produced against a different vocabulary or config."""


class IncompleteExperimentError(CrisisAdaptError):
    """An experiment finished with failing cells (exit code 4)."""
