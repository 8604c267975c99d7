"""Exception hierarchy.

Every error carries a short machine-readable ``category`` so the CLI can print
``<category>: <detail>`` on a single line.
"""


class FingerMotionError(Exception):
    category = "error"


class ContractError(FingerMotionError, ValueError):
    """A precondition of an operation was violated by the caller."""

    category = "contract"


class ShapeError(ContractError):
    category = "shape"


class TrainingError(FingerMotionError, RuntimeError):
    category = "training"


class IngestionError(FingerMotionError, ValueError):
    category = "ingestion"


class HorizonError(ContractError):
    """A horizon cannot be represented as a whole number of frames."""

    category = "horizon"


class SpecError(FingerMotionError, ValueError):
    """Synthetic-data settings that cannot be satisfied."""

    category = "synth-spec"


class CheckpointError(FingerMotionError, ValueError):
    category = "checkpoint"


class ConfigError(FingerMotionError, ValueError):
    category = "config"
