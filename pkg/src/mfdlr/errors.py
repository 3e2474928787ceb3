"""Exception hierarchy shared across the package."""


class MfdlrError(Exception):
    """Base class for all package errors."""


class InvalidPopulationError(MfdlrError, ValueError):
    pass


class InvalidInputError(MfdlrError, ValueError):
    pass


class BoundsError(MfdlrError, IndexError):
    pass


class InvalidClassError(MfdlrError, ValueError):
    pass


class DegenerateJammerError(MfdlrError, ValueError):
    pass


class SizeError(MfdlrError, ValueError):
    pass


class NumericError(MfdlrError, ArithmeticError):
    pass


class DegenerateCombineError(MfdlrError, ArithmeticError):
    pass


class InvalidConfigError(MfdlrError, ValueError):
    pass


class SingularSystemError(MfdlrError, ArithmeticError):
    pass


class LabelError(MfdlrError, ValueError):
    pass


class ShapeError(MfdlrError, ValueError):
    pass


class MissingDeviceError(MfdlrError, KeyError):
    pass


class CalibrationInfeasibleError(MfdlrError, RuntimeError):
    def __init__(self, message, achieved_rate):
        super().__init__(message)
        self.achieved_rate = achieved_rate


class PipelineConfigError(MfdlrError, ValueError):
    pass


class ProtocolError(MfdlrError, ValueError):
    pass


class FormatError(MfdlrError, ValueError):
    pass
