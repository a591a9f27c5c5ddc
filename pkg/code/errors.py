"""
Exceptions raised by the unlearning simulator
Everything except StageError is a ValueError
"""


class ParameterError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class FimInvariantError(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


class DatasetFormatError(ValueError):
    def __init__(self, row: int, message: str):
        """
        @param row: 1-based row index of the offending record (0 for the header)
        """
        self.row = row
        super().__init__("row %d: %s" % (row, message))


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__("stage %s failed: %s" % (stage, cause))
