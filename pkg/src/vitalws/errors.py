"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``code`` so the CLI can emit
single-line diagnostics (``error: <code>: <message>``).
"""


class VitalwsError(Exception):
    """Base class for all package errors."""

    code = "error"


class DataFormatError(VitalwsError):
    """Base for ingestion problems (manifest / channel files)."""

    code = "data-format"


class MissingChannelFileError(DataFormatError):
    code = "missing-channel-file"


class MalformedRowError(DataFormatError):
    code = "malformed-row"


class SamplingRateError(DataFormatError):
    code = "fs-mismatch"


class DuplicateChannelError(DataFormatError):
    code = "duplicate-channel"


class UnknownChannelError(DataFormatError):
    code = "unknown-channel"


class MissingTriggerChannelError(VitalwsError):
    """The record lacks the numeric channel that defines the alert type."""

    code = "missing-trigger-channel"


class MissingLabelError(VitalwsError):
    """A detected event has no ground-truth label in a labeled experiment."""

    code = "missing-label"


class OptimizationError(VitalwsError):
    """Label-model fitting produced a non-finite loss."""

    code = "diverged"


class SingleClassError(VitalwsError):
    """An operation requiring both classes saw only one."""

    code = "single-class"


class ConfigError(VitalwsError):
    """Experiment configuration failed validation."""

    code = "config"
