# coding=utf-8
"""
Finite-difference suites over every differentiable path of the model, run in
float64 on a small configuration.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._exceptions import GradientCheckError
from ._model import ModelDims, SynthConfig
from .core_math import (
    Tensor,
    activation,
    affine,
    concat,
    constant,
    exp,
    finite_diff_check,
    log,
    log_softmax,
    matmul,
    max_over_time,
    mean,
    mul,
    pad_axis,
    parameter,
    reshape,
    slice_axis,
    softmax,
    stack,
    take,
)
from .corpus import (
    Corpus,
    TokenVocab,
    build_corpus,
    build_vocabs,
    make_synthetic_mentions,
    synthetic_relation_names,
)
from .gan import discriminator_objective, generator_adv_objective
from .rdsgan_model import RDSGANModel, rdsgan_model_builder
from .trainer import rank_phase_loss

logger = logging.getLogger(__name__)

TOLERANCE = 1e-5
COORDS_PER_TENSOR = 12
SMALL_VOCAB = 50
SUITES = ("core", "encoder", "discriminator_objective", "generator_adversarial", "combined_rank_classification")


def small_dims() -> ModelDims:
    return ModelDims(word_dim=5, pos_dim=2, filters=8, window=3, max_len=12, gen_hidden=6, disc_hidden=5,
                     dropout=0.5, dtype="float64")


def small_corpus(seed: int = 0, n_pairs: int = 4) -> Corpus:
    """Synthetic train split whose token vocabulary is padded with unused fillers to SMALL_VOCAB entries."""
    cfg = SynthConfig(n_relations=4, n_pairs=n_pairs, instances_per_bag=2, vocab_size=8, sentence_len=12)
    mentions = make_synthetic_mentions(cfg, seed, "train")
    token_vocab, relation_vocab = build_vocabs(mentions, 1, synthetic_relation_names(cfg.n_relations))
    tokens = token_vocab.to_list()[2:]
    spare = cfg.vocab_size
    while len(tokens) + 2 < SMALL_VOCAB:
        tokens.append(f"w{spare}")
        spare += 1
    return build_corpus(mentions, TokenVocab(tokens), relation_vocab, "train", 12)


def small_model(corpus: Corpus, seed: int = 0) -> RDSGANModel:
    return rdsgan_model_builder(small_dims(), len(corpus.token_vocab), len(corpus.relation_vocab),
                                seed=seed, dtype="float64")


def _core_suite(seed: int) -> Tuple[Callable, List[Tensor]]:
    rng = np.random.default_rng([seed, 1])
    table = parameter(rng.normal(size=(6, 4)), name="table")
    W = parameter(rng.normal(size=(3, 4)), name="W")
    b = parameter(rng.normal(size=3), name="b")
    M = parameter(rng.normal(size=(9, 3)), name="M")
    ids = np.asarray([[0, 2, 5], [1, 1, 3]])

    def f(params: Sequence[Tensor]) -> Tensor:
        table, W, b, M = params
        h = activation(affine(take(table, ids), W, b), "tanh")
        padded = pad_axis(h, 1, 1, axis=-2)
        windows = concat([slice_axis(padded, j, j + 3, axis=-2) for j in range(3)], axis=-1)
        proj = matmul(max_over_time(windows), M)
        gate = activation(proj, "sigmoid")
        rows = [reshape(slice_axis(gate, i, i + 1, axis=0), (3,)) for i in range(2)]
        probs = softmax(stack(rows, axis=0), axis=-1)
        mixed = mul(probs, exp(log_softmax(proj, axis=-1)))
        return mean(log(mixed))

    return f, [table, W, b, M]


def _model_suite(name: str, seed: int) -> Tuple[Callable, List[Tensor]]:
    corpus = small_corpus(seed)
    model = small_model(corpus, seed)
    bags = corpus.bags
    direction = constant(np.random.default_rng([seed, 2]).normal(size=(model.dims.filters,)))

    def f(params: Sequence[Tensor]) -> Tensor:
        rng = np.random.default_rng([seed, 3])
        if name == "encoder":
            xs, _ = model.encode_bags(bags, training=True, rng=rng)
            return mean(matmul(xs, reshape(direction, (direction.shape[0], 1))))
        if name == "discriminator_objective":
            real, _ = model.encode_bags(bags, training=True, rng=rng)
            fake = model.generated_instances(bags, training=True, rng=rng)
            return discriminator_objective(real, fake, model.discriminator)
        if name == "generator_adversarial":
            fake = model.generated_instances(bags, training=True, rng=rng)
            return generator_adv_objective(fake, model.discriminator)
        loss, _, _, _ = rank_phase_loss(model, bags, 1.0, 1.0, 1, training=True, rng=rng)
        return loss

    groups = {
        "encoder": ("encoder",),
        "discriminator_objective": ("encoder", "generator", "discriminator"),
        "generator_adversarial": ("encoder", "generator", "discriminator"),
        "combined_rank_classification": ("encoder", "generator", "classifier"),
    }[name]
    return f, model.parameters(groups)


def run_gradcheck_suites(seed: int = 0, suites: Optional[Sequence[str]] = None,
                         tolerance: float = TOLERANCE, raise_on_failure: bool = True) -> Dict[str, float]:
    """
    Run the named suites (all by default) and return suite -> max relative error.

    Exceptions::
        GradientCheckError, a suite reached ``tolerance`` and raise_on_failure is set
    """
    results: Dict[str, float] = {}
    for name in (suites or SUITES):
        if name not in SUITES:
            raise GradientCheckError(f"unknown gradient check suite {name!r}")
        f, params = _core_suite(seed) if name == "core" else _model_suite(name, seed)
        error = finite_diff_check(f, params, eps=1e-5, max_coords_per_param=COORDS_PER_TENSOR, seed=seed)
        results[name] = error
        logger.info(f"<GradCheck>:SUITE={name},MAX_REL_ERROR={error:.3e},PASSED={error < tolerance}")
    failed = sorted(k for k, v in results.items() if not v < tolerance)
    if failed and raise_on_failure:
        raise GradientCheckError(
            "gradient check failed for " + ", ".join(f"{k} ({results[k]:.3e})" for k in failed))
    return results
