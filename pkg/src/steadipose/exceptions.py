"""Exception hierarchy shared by every stage of the stabilizer."""


class SteadiposeError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SteadiposeError, ValueError):
    pass


class PointAtInfinityError(SteadiposeError, ArithmeticError):
    pass


class OutOfRangeError(SteadiposeError, ValueError):
    pass


class InvalidTraceError(SteadiposeError, ValueError):
    pass


class ParseError(InvalidTraceError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(InvalidTraceError):
    pass


class ConfigError(SteadiposeError, ValueError):
    pass


class SolverError(SteadiposeError, RuntimeError):
    """Raised when the damped solve cannot proceed.

    ``last_pose`` carries the last pose whose energy was evaluated successfully.
    """

    def __init__(self, message, last_pose=None):
        super().__init__(message)
        self.last_pose = last_pose


class StreamError(SteadiposeError, RuntimeError):
    def __init__(self, message, frame_index=None):
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
