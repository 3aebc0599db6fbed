from typing import Optional


class HARError(Exception):
    """Base exception for the activity-recognition toolkit."""

    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ConfigurationError(HARError):
    """Raised when a run configuration or generator config is invalid."""

    pass


class ShapeError(HARError):
    """Raised when tensor extents disagree; names the offending dimension."""

    def __init__(
        self,
        message: str,
        dimension: Optional[str] = None,
        expected: Optional[int] = None,
        found: Optional[int] = None,
    ):
        self.dimension = dimension
        self.expected = expected
        self.found = found
        if dimension is not None:
            message = f"{message} (dimension {dimension}: expected {expected}, found {found})"
        super().__init__(message, "shape_mismatch")


class GraphError(HARError):
    """Raised on autodiff misuse: repeated backward, cycles, non-scalar roots."""

    def __init__(self, message: str):
        super().__init__(message, "graph_error")


class NonFiniteError(HARError):
    """Raised when NaN or Inf appears in a tensor."""

    def __init__(self, message: str, parameter: Optional[str] = None):
        self.parameter = parameter
        super().__init__(message, "non_finite")


class DatasetError(HARError):
    """Raised when a dataset cannot be loaded or used."""

    pass


class DatasetFormatError(DatasetError):
    """Raised when a dataset file violates its on-disk format."""

    def __init__(self, message: str, path: str, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = f"{path}:{line_number}" if line_number is not None else path
        super().__init__(f"{location}: {message}", "dataset_format")


class CheckpointError(HARError):
    """Raised when a checkpoint file is missing or corrupt."""

    pass


class CheckpointVersionError(CheckpointError):
    """Raised when a checkpoint was written by an incompatible format version."""

    def __init__(self, found: object, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(
            f"Unsupported checkpoint version {found!r}; expected {expected}",
            "checkpoint_version",
        )


class ModelSpecMismatchError(HARError):
    """Raised when parameters or data do not fit a model specification."""

    pass


class LocalizationError(HARError):
    """Raised when localization inputs are invalid."""

    pass


class TrainingError(HARError):
    """Raised when a training run has to abort."""

    pass


class NonFiniteLossError(TrainingError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(
            f"Non-finite loss {value!r} at epoch {epoch}, batch {batch}", "non_finite_loss"
        )
