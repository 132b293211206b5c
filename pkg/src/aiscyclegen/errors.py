"""Exception types shared across the pipeline."""


class AisCycleGenError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AisCycleGenError, ValueError):
    pass


class DegenerateBatchError(AisCycleGenError, ValueError):
    pass


class ContractError(AisCycleGenError):
    pass


class ParameterError(AisCycleGenError, ValueError):
    pass


class ConfigError(AisCycleGenError, ValueError):
    pass


class SchemaError(AisCycleGenError):
    pass


class InputError(AisCycleGenError, ValueError):
    pass


class ImputationError(AisCycleGenError):
    pass


class DataError(AisCycleGenError):
    pass


class HorizonError(AisCycleGenError):
    pass


class NumericalError(AisCycleGenError, ArithmeticError):
    pass


class TrainingDivergedError(AisCycleGenError):
    """A loss component became non-finite during training."""

    def __init__(self, component, step, value):
        super().__init__(f"non-finite {component} loss ({value}) at step {step}")
        self.component = component
        self.step = step
        self.value = value


class CheckpointError(AisCycleGenError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    def __init__(self, found, expected):
        super().__init__(f"checkpoint format version {found} is not supported (expected {expected})")
        self.found = found
        self.expected = expected
