# coding=utf-8
import hashlib
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ._exceptions import ShapeMismatchError, VocabularyMismatchError
from ._model import ModelDims
from .bag_attention import AttentionClassifierParams
from .core_math import Tensor
from .corpus import Bag, Corpus
from .encoder import EncoderBackend, EncoderParams, resolve_encoder_backend
from .gan import DiscriminatorParams, GeneratorParams, generate, seed_vector

logger = logging.getLogger(__name__)

GROUPS = ("encoder", "generator", "discriminator", "classifier")


class RDSGANModel:
    """
    All trainable state: the shared encoder, the generator, the discriminator and the
    attention classifier. Parameter names are "<group>.<tensor>".
    """

    dims: ModelDims
    encoder_backend: EncoderBackend
    encoder: EncoderParams
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    classifier: AttentionClassifierParams

    def __init__(
            self,
            dims: ModelDims,
            n_tokens: int,
            n_relations: int,
            seed: int = 0,
            dtype: Optional[str] = None,
    ):
        """
        dims - ModelDims
        n_tokens - int, token vocabulary size, rows of the word table
        n_relations - int, relation vocabulary size including NA
        seed - int, every initial value is drawn from default_rng(seed)
        dtype - (Optional) str, "float32" or "float64", defaults to dims.dtype

        Exceptions::
            ConfigError, dims.encoder_backend cannot be resolved
        """
        self.dims = dims
        self.n_tokens = n_tokens
        self.n_relations = n_relations
        self.dtype = np.dtype(dtype or dims.dtype)
        self.encoder_backend = resolve_encoder_backend(dims.encoder_backend)
        rng = np.random.default_rng(seed)
        self.encoder = self.encoder_backend.init_params(dims, n_tokens, rng, self.dtype)
        self.generator = GeneratorParams(dims, n_relations, rng, self.dtype)
        self.discriminator = DiscriminatorParams(dims, rng, self.dtype)
        self.classifier = AttentionClassifierParams(dims, n_relations, rng, self.dtype)
        logger.info(f"<RDSGANModel>:N_TOKENS={n_tokens},N_RELATIONS={n_relations},"
                    f"PARAMS={self.parameter_count()},DTYPE={self.dtype.name}")

    def named_parameters(self, groups: Optional[Iterable[str]] = None) -> List[Tuple[str, Tensor]]:
        pairs = []
        for group in (GROUPS if groups is None else groups):
            pairs.extend(getattr(self, group).named_parameters(f"{group}."))
        return pairs

    def parameters(self, groups: Optional[Iterable[str]] = None) -> List[Tensor]:
        return [p for _, p in self.named_parameters(groups)]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def parameter_digest(self, groups: Optional[Iterable[str]] = None) -> str:
        """sha256 over names and raw bytes of the selected groups."""
        digest = hashlib.sha256()
        for name, tensor in self.named_parameters(groups):
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(tensor.data).tobytes())
        return digest.hexdigest()

    def check_corpus(self, corpus: Corpus) -> None:
        """
        Exceptions::
            VocabularyMismatchError, vocabulary sizes differ from the model's tables
            ShapeMismatchError, the corpus was aligned to another sentence length
        """
        if len(corpus.token_vocab) != self.n_tokens or len(corpus.relation_vocab) != self.n_relations:
            raise VocabularyMismatchError(
                f"corpus vocabulary ({len(corpus.token_vocab)} tokens, {len(corpus.relation_vocab)} relations) "
                f"does not match the model ({self.n_tokens} tokens, {self.n_relations} relations)")
        if corpus.max_len != self.dims.max_len:
            raise ShapeMismatchError(
                f"corpus sentence length {corpus.max_len} does not match the model's {self.dims.max_len}")

    def encode_bags(self, bags: Sequence[Bag], training: bool = False,
                    rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, List[int]]:
        """
        Encode every real instance of ``bags`` in one batch.
        Returns (xs, offsets): xs Tensor (total instances, d_s); bag i owns rows offsets[i]:offsets[i+1]
        """
        arrays = [bag.arrays() for bag in bags]
        ids = np.concatenate([a[0] for a in arrays])
        head = np.concatenate([a[1] for a in arrays])
        tail = np.concatenate([a[2] for a in arrays])
        seq = self.encoder_backend.embed(ids, head, tail, self.encoder)
        xs = self.encoder_backend.encode(seq, self.encoder, training=training, rng=rng, p=self.dims.dropout)
        offsets = [0]
        for bag in bags:
            offsets.append(offsets[-1] + bag.size)
        return xs, offsets

    def generated_sequences(self, bags: Sequence[Bag], training: bool = False,
                            rng: Optional[np.random.Generator] = None) -> Tensor:
        """Token-embedding sequences (B, L, token_dim) for each bag's (head word, gold relation, tail word)."""
        z = seed_vector(
            np.asarray([b.head_word_id for b in bags], dtype=np.int64),
            np.asarray([b.relation_id for b in bags], dtype=np.int64),
            np.asarray([b.tail_word_id for b in bags], dtype=np.int64),
            self.generator,
            self.encoder.word_embed,
        )
        return generate(z, self.generator, self.dims.max_len, training=training, rng=rng, p=self.dims.dropout)

    def generated_instances(self, bags: Sequence[Bag], training: bool = False,
                            rng: Optional[np.random.Generator] = None) -> Tensor:
        """Instance vectors (B, d_s) of the generated sentences, through the shared encoder."""
        seq = self.generated_sequences(bags, training=training, rng=rng)
        return self.encoder_backend.encode(seq, self.encoder, training=training, rng=rng, p=self.dims.dropout)


def rdsgan_model_builder(
        dims: Optional[ModelDims] = None,
        n_tokens: int = 2,
        n_relations: int = 2,
        seed: int = 0,
        dtype: Optional[str] = None,
) -> RDSGANModel:
    """
    Build a freshly initialised model.

    Usage::
        >>> model = RDSGAN(ModelDims(), len(corpus.token_vocab), len(corpus.relation_vocab), seed=7)
    """
    return RDSGANModel(dims or ModelDims(), n_tokens, n_relations, seed=seed, dtype=dtype)


RDSGAN = rdsgan_model_builder
