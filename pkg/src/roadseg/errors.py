"""Exception types shared across the toolkit."""


class RoadSegError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(RoadSegError, ValueError):
    """Array dimensions disagree with an operation's contract."""


class MaskFormatError(RoadSegError, ValueError):
    """Image or mask data is not in the expected format."""


class ManifestError(RoadSegError):
    """Dataset discovery failed (unpaired or missing files)."""


class EmptyDatasetError(ManifestError):
    """No samples were found under the dataset root."""


class SplitError(RoadSegError):
    """Dataset cannot be partitioned as requested."""


class SampleError(RoadSegError):
    """A sample could not be loaded or its files are inconsistent."""


class ConfigError(RoadSegError, ValueError):
    """Invalid configuration value or configuration file."""


class CheckpointError(RoadSegError):
    """Checkpoint file is unreadable or does not match the model."""


class WeightAcquisitionError(RoadSegError):
    """Pretrained encoder weights could not be acquired."""


class DivergenceError(RoadSegError):
    """Training produced a non-finite loss."""


class DegenerateInputError(RoadSegError, ValueError):
    """A metric was requested over zero pixels."""
