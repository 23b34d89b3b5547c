from enum import IntEnum


class ExitCode(IntEnum):
    """Process exit codes and reason phrases for the rdsgan command line
        * 0 success
        * 1 usage error, bad flags, missing files or checkpoints
        * 2 data error, malformed corpus, vocabulary mismatch, corrupt checkpoint
        * 3 numerical failure, non-finite loss or failed gradient check
    """

    def __new__(cls, value: int, phrase: str = "") -> "ExitCode":
        obj = int.__new__(cls, value)  # type: ignore
        obj._value_ = value

        obj.phrase = phrase
        return obj

    def __str__(self) -> str:
        return str(self.value)

    @classmethod
    def get_reason_phrase(cls, value: int) -> str:
        try:
            return ExitCode(value).phrase  # type: ignore
        except ValueError:
            return ""

    @classmethod
    def is_error(cls, value: int) -> bool:
        return value != ExitCode.OK

    @classmethod
    def is_data_error(cls, value: int) -> bool:
        return value == ExitCode.DATA_ERROR

    @classmethod
    def is_numerical_failure(cls, value: int) -> bool:
        return value == ExitCode.NUMERICAL_FAILURE

    OK = 0, "Success"
    USAGE_ERROR = 1, "Usage Error"
    DATA_ERROR = 2, "Data Error"
    NUMERICAL_FAILURE = 3, "Numerical Failure"


class TraceCode(IntEnum):
    """Identifies which check raised, independent of the exit code it maps to."""

    UNKNOWN = 199
    SHAPE_MISMATCH = 201
    EMPTY_INPUT = 202
    INVALID_ARGUMENT = 203
    NON_FINITE = 204
    PARSE = 301
    ENCODE = 302
    CORPUS = 303
    VOCABULARY_MISMATCH = 304
    CHECKPOINT_VERSION = 401
    CHECKPOINT_CHECKSUM = 402
    CHECKPOINT_SHAPE = 403
    CONFIG = 501
    GRADIENT_CHECK = 601
    TRAINING_STEP = 602


exit_codes = ExitCode
trace_codes = TraceCode
