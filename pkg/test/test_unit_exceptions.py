import sys

import pytest

sys.path.append("../")

from omi_rdsgan._exceptions import (
    CheckpointShapeError,
    ParseError,
    RDSGANException,
    ShapeMismatchError,
    TrainingStepError,
)
from omi_rdsgan._exit_code import exit_codes, trace_codes


@pytest.fixture(scope='module')
def setup_module(request):
    def teardown_module():
        print("teardown_module called.")

    request.addfinalizer(teardown_module)
    print('setup_module called.')


def test_enum(setup_module):
    assert exit_codes.is_error(2)
    assert exit_codes.is_error(0) is False
    assert exit_codes.is_data_error(2)
    assert exit_codes.is_numerical_failure(3)
    assert exit_codes.get_reason_phrase(9) == ""
    assert exit_codes.get_reason_phrase(0) == "Success"
    assert str(exit_codes.USAGE_ERROR) == "1"


def test_exception(setup_module):
    try:
        raise ShapeMismatchError("bad shape")
    except ValueError as e:
        assert e.exit_code == exit_codes.DATA_ERROR
        assert e.trace_code == trace_codes.SHAPE_MISMATCH
        assert repr(e) == ("ShapeMismatchError(exit_code=<ExitCode.DATA_ERROR: 2>,"
                           "trace_code=<TraceCode.SHAPE_MISMATCH: 201>,detail='bad shape')")

    e = RDSGANException(exit_code=exit_codes.NUMERICAL_FAILURE)
    assert e.detail == "Numerical Failure"

    e = TrainingStepError("boom", phase="discriminator", iteration=3, exit_code=exit_codes.DATA_ERROR)
    assert (e.phase, e.iteration, e.exit_code) == ("discriminator", 3, exit_codes.DATA_ERROR)
    assert e.trace_code == trace_codes.TRAINING_STEP


def test_context_fields(setup_module):
    e = ParseError("missing ###END###", line_number=7)
    assert e.line_number == 7
    assert e.detail == "line 7: missing ###END###"
    assert e.trace_code == trace_codes.PARSE

    e = CheckpointShapeError("too wide", tensor_name="encoder.word_embed")
    assert e.tensor_name == "encoder.word_embed"
    assert exit_codes.is_data_error(e.exit_code)


if __name__ == "__main__":
    pytest.main(["test_unit_exceptions.py"])
