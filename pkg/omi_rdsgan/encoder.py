# coding=utf-8
"""
Sentence encoder shared by real instances and generated sequences.

A token row is the concatenation word ⊕ head-position ⊕ tail-position embedding.
The default backend is a single-window convolution with same padding, followed by
max pooling over time, tanh and dropout.

Usage::
    >>> backend = resolve_encoder_backend("omi_rdsgan.encoder.CNNEncoderBackend")
    >>> params = backend.init_params(dims, n_tokens, rng, "float32")
    >>> x = backend.encode(backend.embed(ids, head_pos, tail_pos, params), params)
"""
import logging
from typing import Optional, Type, Union

import numpy as np

from ._exceptions import ConfigError, InvalidArgumentError, ShapeMismatchError
from ._model import ModelDims
from .core_math import (
    ParamGroup,
    Tensor,
    activation,
    affine,
    concat,
    dropout,
    max_over_time,
    pad_axis,
    parameter,
    slice_axis,
    take,
    xavier_uniform,
)
from .corpus import EncodedInstance

logger = logging.getLogger(__name__)

WORD_INIT_RANGE = 0.25


class EncoderParams(ParamGroup):
    names = ("word_embed", "head_pos_embed", "tail_pos_embed", "conv_filters", "conv_bias")

    def __init__(self, word_embed: Tensor, head_pos_embed: Tensor, tail_pos_embed: Tensor,
                 conv_filters: Tensor, conv_bias: Tensor):
        self.word_embed = word_embed
        self.head_pos_embed = head_pos_embed
        self.tail_pos_embed = tail_pos_embed
        self.conv_filters = conv_filters
        self.conv_bias = conv_bias

    @property
    def token_dim(self) -> int:
        return self.word_embed.shape[1] + self.head_pos_embed.shape[1] + self.tail_pos_embed.shape[1]

    @property
    def window(self) -> int:
        return self.conv_filters.shape[1] // self.token_dim

    @property
    def filters(self) -> int:
        return self.conv_filters.shape[0]


class EncoderBackend:
    """Interface for instance encoders. Implementations are resolved by dotted class path."""

    def init_params(self, dims: ModelDims, n_tokens: int, rng: np.random.Generator, dtype) -> EncoderParams:
        """
        Allocate and initialise encoder parameters.
        dims - ModelDims
        n_tokens - int, size of the token vocabulary (rows of the word table)
        rng - numpy Generator used for every random draw
        dtype - numpy dtype or its name
        """
        raise NotImplementedError

    def embed(self, token_ids, head_rel_pos, tail_rel_pos, params: EncoderParams) -> Tensor:
        """
        Token rows for one instance (arrays of shape (L,)) or a stack of instances ((m, L)).
        Returns Tensor (L, token_dim) or (m, L, token_dim).

        Exceptions::
            InvalidArgumentError, an id lies outside its table
        """
        raise NotImplementedError

    def encode(self, seq: Tensor, params: EncoderParams, training: bool = False,
               rng: Optional[np.random.Generator] = None, p: float = 0.0) -> Tensor:
        """
        Instance vector(s) for a token-embedding sequence (L, D) or a batch (B, L, D).
        Returns Tensor (d_s,) or (B, d_s).
        """
        raise NotImplementedError


class CNNEncoderBackend(EncoderBackend):

    def init_params(self, dims: ModelDims, n_tokens: int, rng: np.random.Generator, dtype) -> EncoderParams:
        dtype = np.dtype(dtype)
        n_pos = dims.n_pos_buckets
        word = rng.uniform(-WORD_INIT_RANGE, WORD_INIT_RANGE, size=(n_tokens, dims.word_dim)).astype(dtype)
        params = EncoderParams(
            word_embed=parameter(word, name="word_embed"),
            head_pos_embed=parameter(xavier_uniform(rng, (n_pos, dims.pos_dim), dtype), name="head_pos_embed"),
            tail_pos_embed=parameter(xavier_uniform(rng, (n_pos, dims.pos_dim), dtype), name="tail_pos_embed"),
            conv_filters=parameter(
                xavier_uniform(rng, (dims.filters, dims.window * dims.token_dim), dtype), name="conv_filters"),
            conv_bias=parameter(np.zeros(dims.filters, dtype=dtype), name="conv_bias"),
        )
        logger.debug(f"<CNNEncoder>:N_TOKENS={n_tokens},TOKEN_DIM={dims.token_dim},FILTERS={dims.filters}")
        return params

    def embed(self, token_ids, head_rel_pos, tail_rel_pos, params: EncoderParams) -> Tensor:
        token_ids = np.asarray(token_ids, dtype=np.int64)
        head_rel_pos = np.asarray(head_rel_pos, dtype=np.int64)
        tail_rel_pos = np.asarray(tail_rel_pos, dtype=np.int64)
        if token_ids.shape != head_rel_pos.shape or token_ids.shape != tail_rel_pos.shape:
            raise ShapeMismatchError(
                f"embed: token ids {token_ids.shape} and positions {head_rel_pos.shape}/{tail_rel_pos.shape} differ")
        return concat([
            take(params.word_embed, token_ids),
            take(params.head_pos_embed, head_rel_pos),
            take(params.tail_pos_embed, tail_rel_pos),
        ], axis=-1)

    def encode(self, seq: Tensor, params: EncoderParams, training: bool = False,
               rng: Optional[np.random.Generator] = None, p: float = 0.0) -> Tensor:
        if seq.ndim not in (2, 3) or seq.shape[-1] != params.token_dim:
            raise ShapeMismatchError(
                f"encode: sequence shape {seq.shape} does not conform to token width {params.token_dim}")
        window = params.window
        length = seq.shape[-2]
        if length < window:
            raise InvalidArgumentError(f"encode: sequence length {length} is shorter than the window {window}")
        half = window // 2
        padded = pad_axis(seq, half, half, axis=-2)
        columns = concat([slice_axis(padded, j, j + length, axis=-2) for j in range(window)], axis=-1)
        feature_map = affine(columns, params.conv_filters, params.conv_bias)
        pooled = activation(max_over_time(feature_map), "tanh")
        return dropout(pooled, p, rng, training)


def resolve_encoder_backend(encoder_backend: Union[str, EncoderBackend, Type[EncoderBackend]]) -> EncoderBackend:
    """
    Return an EncoderBackend instance from a dotted class path, a class or an instance.

    Exceptions::
        ConfigError, the path cannot be imported or names something that is not an EncoderBackend
    """
    if isinstance(encoder_backend, EncoderBackend):
        return encoder_backend
    if isinstance(encoder_backend, type):
        found = encoder_backend
    else:
        if not encoder_backend:
            raise ConfigError("encoder_backend can not be empty")
        name = encoder_backend.split('.')
        used = name.pop(0)
        try:
            found = __import__(used)
            for frag in name:
                used += '.' + frag
                try:
                    found = getattr(found, frag)
                except AttributeError:
                    __import__(used)
                    found = getattr(found, frag)
        except (ImportError, AttributeError):
            raise ConfigError('Cannot resolve encoder_backend type %s' % encoder_backend)
    if not (isinstance(found, type) and issubclass(found, EncoderBackend)):
        raise ConfigError('Cannot resolve encoder_backend type %s' % encoder_backend)
    return found()


def embed(inst: EncodedInstance, params: EncoderParams) -> Tensor:
    """Token rows (L, token_dim) of one encoded instance with the CNN backend."""
    return CNNEncoderBackend().embed(inst.token_ids, inst.head_rel_pos, inst.tail_rel_pos, params)


def encode(seq: Tensor, params: EncoderParams, training: bool = False,
           rng: Optional[np.random.Generator] = None, p: float = 0.5) -> Tensor:
    return CNNEncoderBackend().encode(seq, params, training=training, rng=rng, p=p)
