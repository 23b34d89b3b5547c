import sys

import pytest

sys.path.append("../")

from omi_rdsgan._exceptions import GradientCheckError
from omi_rdsgan.gradcheck import SMALL_VOCAB, SUITES, TOLERANCE, run_gradcheck_suites, small_corpus, small_model


def test_every_suite_passes():
    results = run_gradcheck_suites(seed=0)
    assert set(results) == set(SUITES)
    for name, error in results.items():
        assert error < TOLERANCE, name


def test_suites_are_reproducible():
    assert run_gradcheck_suites(seed=2, suites=["core"]) == run_gradcheck_suites(seed=2, suites=["core"])


def test_unknown_suite():
    with pytest.raises(GradientCheckError):
        run_gradcheck_suites(suites=["nope"])


def test_zero_tolerance_reports_failure():
    results = run_gradcheck_suites(suites=["core"], tolerance=0.0, raise_on_failure=False)
    assert results["core"] >= 0.0
    with pytest.raises(GradientCheckError):
        run_gradcheck_suites(suites=["core"], tolerance=0.0)


def test_small_model_runs_in_float64():
    corpus = small_corpus()
    model = small_model(corpus)
    assert all(p.dtype.name == "float64" for p in model.parameters())
    assert model.dims.max_len == corpus.max_len
    assert len(corpus.token_vocab) == SMALL_VOCAB == 50
    assert (model.dims.filters, model.dims.gen_hidden, len(corpus.relation_vocab)) == (8, 6, 4)
    corpus.validate_ids()
