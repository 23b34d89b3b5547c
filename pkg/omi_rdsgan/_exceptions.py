from typing import Any

from ._exit_code import exit_codes, trace_codes


class RDSGANException(Exception):
    exit_code: int = exit_codes.DATA_ERROR
    trace_code: int = trace_codes.UNKNOWN

    def __init__(
            self, detail: Any = None, exit_code: int = None, trace_code: int = None
    ) -> None:
        if exit_code is not None:
            self.exit_code = exit_code
        if trace_code is not None:
            self.trace_code = trace_code
        if detail is None:
            detail = exit_codes.get_reason_phrase(self.exit_code)
        self.detail = detail
        super().__init__(detail)

    def __str__(self) -> str:
        return str(self.detail)

    def __repr__(self) -> str:
        class_name = self.__class__.__name__
        return f"{class_name}(exit_code={self.exit_code!r},trace_code={self.trace_code!r},detail={self.detail!r})"


def exception_decorator(**kwargs):
    def decorator(cls):
        for key, val in kwargs.items():
            if val is not None:
                setattr(cls, key, val)
        return cls

    return decorator


# core math
@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.SHAPE_MISMATCH)
class ShapeMismatchError(RDSGANException, ValueError):
    pass


@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.EMPTY_INPUT)
class EmptyInputError(RDSGANException, ValueError):
    pass


@exception_decorator(exit_code=exit_codes.USAGE_ERROR, trace_code=trace_codes.INVALID_ARGUMENT)
class InvalidArgumentError(RDSGANException, ValueError):
    pass


@exception_decorator(exit_code=exit_codes.NUMERICAL_FAILURE, trace_code=trace_codes.NON_FINITE)
class NonFiniteError(RDSGANException, ArithmeticError):
    pass


# corpus
@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.PARSE)
class ParseError(RDSGANException, ValueError):
    def __init__(self, detail: Any = None, line_number: int = 0, **kwargs) -> None:
        self.line_number = line_number
        if line_number:
            detail = f"line {line_number}: {detail}"
        super().__init__(detail, **kwargs)


@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.ENCODE)
class EncodeError(RDSGANException, ValueError):
    pass


@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.CORPUS)
class CorpusError(RDSGANException):
    pass


@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.VOCABULARY_MISMATCH)
class VocabularyMismatchError(RDSGANException, ValueError):
    pass


# checkpoint
@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.CHECKPOINT_VERSION)
class CheckpointVersionError(RDSGANException):
    pass


@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.CHECKPOINT_CHECKSUM)
class CheckpointChecksumError(RDSGANException):
    pass


@exception_decorator(exit_code=exit_codes.DATA_ERROR, trace_code=trace_codes.CHECKPOINT_SHAPE)
class CheckpointShapeError(RDSGANException):
    def __init__(self, detail: Any = None, tensor_name: str = "", **kwargs) -> None:
        self.tensor_name = tensor_name
        super().__init__(detail, **kwargs)


# configuration, training
@exception_decorator(exit_code=exit_codes.USAGE_ERROR, trace_code=trace_codes.CONFIG)
class ConfigError(RDSGANException, ValueError):
    pass


@exception_decorator(exit_code=exit_codes.NUMERICAL_FAILURE, trace_code=trace_codes.GRADIENT_CHECK)
class GradientCheckError(RDSGANException):
    pass


@exception_decorator(exit_code=exit_codes.NUMERICAL_FAILURE, trace_code=trace_codes.TRAINING_STEP)
class TrainingStepError(RDSGANException):
    def __init__(self, detail: Any = None, phase: str = "", iteration: int = -1, **kwargs) -> None:
        self.phase = phase
        self.iteration = iteration
        super().__init__(detail, **kwargs)
