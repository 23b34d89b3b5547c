# coding=utf-8
"""
Triplet-seeded generator and the real/generated discriminator.

The generator turns (head word, relation, tail word) into a seed
z = e_h + W_g·A[relation] + e_t, projects it to an initial hidden state and unrolls
a bidirectional GRU for exactly L steps. Each step's input is the previous hidden
state, so no token is ever fed back. The L×token_dim output lives in the same space
as the encoder's token rows and is encoded by the shared encoder.
"""
import logging
from typing import Optional, Sequence, Union

import numpy as np

from ._exceptions import EmptyInputError, NonFiniteError
from ._model import ModelDims
from .core_math import (
    ParamGroup,
    Tensor,
    activation,
    affine,
    add,
    all_finite,
    concat,
    dropout,
    log,
    mean,
    mul,
    parameter,
    reshape,
    scale,
    stack,
    take,
    xavier_uniform,
)

logger = logging.getLogger(__name__)

Instances = Union[Tensor, Sequence[Tensor]]


class GRUCell(ParamGroup):
    names = ("W_r", "W_z", "W_n", "U_r", "U_z", "U_n", "b_r", "b_z", "b_n")

    def __init__(self, hidden: int, rng: np.random.Generator, dtype, prefix: str = ""):
        for name in self.names:
            if name.startswith("b_"):
                data = np.zeros(hidden, dtype=dtype)
            else:
                data = xavier_uniform(rng, (hidden, hidden), dtype)
            setattr(self, name, parameter(data, name=f"{prefix}{name}"))

    @property
    def hidden(self) -> int:
        return self.b_r.shape[0]

    def step(self, h: Tensor) -> Tensor:
        """
        One autonomous update, the previous state is also the input:
            r = σ(W_r h + U_r h + b_r), u = σ(W_z h + U_z h + b_z)
            n = tanh(W_n h + r ⊙ (U_n h) + b_n), h' = (1 - u) ⊙ n + u ⊙ h
        """
        r = activation(add(affine(h, self.W_r, self.b_r), affine(h, self.U_r)), "sigmoid", clamp=False)
        u = activation(add(affine(h, self.W_z, self.b_z), affine(h, self.U_z)), "sigmoid", clamp=False)
        n = activation(add(affine(h, self.W_n, self.b_n), mul(r, affine(h, self.U_n))), "tanh")
        return add(mul(scale(u, -1.0, 1.0), n), mul(u, h))


class GeneratorParams(ParamGroup):
    names = ("relation_matrix", "W_g", "seed_proj", "gru_fwd", "gru_bwd", "out_proj", "out_bias")

    def __init__(self, dims: ModelDims, n_relations: int, rng: np.random.Generator, dtype):
        dtype = np.dtype(dtype)
        h = dims.gen_hidden
        self.relation_matrix = parameter(
            xavier_uniform(rng, (n_relations, dims.filters), dtype), name="relation_matrix")
        self.W_g = parameter(xavier_uniform(rng, (dims.word_dim, dims.filters), dtype), name="W_g")
        self.seed_proj = parameter(xavier_uniform(rng, (h, dims.word_dim), dtype), name="seed_proj")
        self.gru_fwd = GRUCell(h, rng, dtype, prefix="fwd.")
        self.gru_bwd = GRUCell(h, rng, dtype, prefix="bwd.")
        self.out_proj = parameter(xavier_uniform(rng, (dims.token_dim, 2 * h), dtype), name="out_proj")
        self.out_bias = parameter(np.zeros(dims.token_dim, dtype=dtype), name="out_bias")


class DiscriminatorParams(ParamGroup):
    names = ("W1", "b1", "W2", "b2")

    def __init__(self, dims: ModelDims, rng: np.random.Generator, dtype):
        dtype = np.dtype(dtype)
        self.W1 = parameter(xavier_uniform(rng, (dims.disc_hidden, dims.filters), dtype), name="W1")
        self.b1 = parameter(np.zeros(dims.disc_hidden, dtype=dtype), name="b1")
        self.W2 = parameter(xavier_uniform(rng, (1, dims.disc_hidden), dtype), name="W2")
        self.b2 = parameter(np.zeros(1, dtype=dtype), name="b2")


def seed_vector(head_word_id, relation_id, tail_word_id, gen: GeneratorParams, word_embed: Tensor) -> Tensor:
    """
    z = e_h + W_g·A[relation] + e_t.
    head_word_id, relation_id, tail_word_id - int or int arrays of equal shape (B,)
    word_embed - Tensor, the encoder's word table (shared with real instances)

    Returns Tensor (word_dim,) for scalar ids or (B, word_dim) for arrays

    Exceptions::
        InvalidArgumentError, an id lies outside its table
    """
    e_h = take(word_embed, head_word_id)
    e_t = take(word_embed, tail_word_id)
    e_r = take(gen.relation_matrix, relation_id)
    return add(add(e_h, affine(e_r, gen.W_g)), e_t)


def generate(z: Tensor, gen: GeneratorParams, length: int, training: bool = False,
             rng: Optional[np.random.Generator] = None, p: float = 0.0) -> Tensor:
    """
    Unroll the bidirectional GRU from h_0 = seed_proj·z for exactly ``length`` steps.
    z - Tensor (word_dim,) or (B, word_dim)
    p - float, dropout on the concatenated hidden states when training

    Returns Tensor (length, token_dim) or (B, length, token_dim)

    Memo::
        Both directions start from the same h_0 and position t pairs the t-th state
        of each chain.
    """
    h0 = affine(z, gen.seed_proj)
    fwd, bwd = [], []
    h_f = h_b = h0
    for _ in range(length):
        h_f = gen.gru_fwd.step(h_f)
        h_b = gen.gru_bwd.step(h_b)
        fwd.append(h_f)
        bwd.append(h_b)
    hidden = concat([stack(fwd, axis=-2), stack(bwd, axis=-2)], axis=-1)
    hidden = dropout(hidden, p, rng, training)
    return affine(hidden, gen.out_proj, gen.out_bias)


def _as_matrix(xs: Instances, what: str) -> Tensor:
    if isinstance(xs, Tensor):
        if xs.ndim == 1:
            xs = reshape(xs, (1, xs.shape[0]))
    else:
        if len(xs) == 0:
            raise EmptyInputError(f"{what}: no instances")
        xs = stack(list(xs), axis=0)
    if xs.shape[0] == 0:
        raise EmptyInputError(f"{what}: no instances")
    return xs


def discriminate(x: Tensor, disc: DiscriminatorParams) -> Tensor:
    """
    Probability that x (d_s,) or each row of x (B, d_s) is a real instance.
    Values are clamped to [1e-7, 1-1e-7].

    Exceptions::
        NonFiniteError, x has NaN or infinite entries
    """
    if not all_finite([x]):
        raise NonFiniteError("discriminate: instance vector is not finite")
    hidden = activation(affine(x, disc.W1, disc.b1), "tanh")
    out = activation(affine(hidden, disc.W2, disc.b2), "sigmoid")
    return reshape(out, out.shape[:-1])


def discriminator_objective(real_xs: Instances, fake_xs: Instances, disc: DiscriminatorParams) -> Tensor:
    """
    mean log D(real) + mean log(1 - D(fake)), to be maximised.
    Each term is normalised by the number of instances feeding it.
    """
    real = _as_matrix(real_xs, "discriminator_objective")
    fake = _as_matrix(fake_xs, "discriminator_objective")
    real_term = mean(log(discriminate(real, disc)))
    fake_term = mean(log(scale(discriminate(fake, disc), -1.0, 1.0)))
    return add(real_term, fake_term)


def generator_adv_objective(fake_xs: Instances, disc: DiscriminatorParams, non_saturating: bool = False) -> Tensor:
    """
    mean log(1 - D(fake)), to be minimised by the generator.
    non_saturating - bool, minimise -mean log D(fake) instead
    """
    fake = _as_matrix(fake_xs, "generator_adv_objective")
    d_fake = discriminate(fake, disc)
    if non_saturating:
        return scale(mean(log(d_fake)), -1.0)
    return mean(log(scale(d_fake, -1.0, 1.0)))
