# coding=utf-8
"""
Selective attention over the instances of a bag, the relation classifier, and the
losses that train them: the generated-instance rank loss, bag cross-entropy and
their weighted sum.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._exceptions import EmptyInputError, InvalidArgumentError, ShapeMismatchError
from ._model import ModelDims
from .core_math import (
    ParamGroup,
    Tensor,
    add,
    affine,
    exp,
    log_softmax,
    matmul,
    mean,
    parameter,
    reshape,
    scale,
    softmax,
    stack,
    take,
    xavier_uniform,
)

logger = logging.getLogger(__name__)


class AttentionClassifierParams(ParamGroup):
    names = ("query_table", "attn_bilinear", "W_r", "b_2")

    def __init__(self, dims: ModelDims, n_relations: int, rng: np.random.Generator, dtype):
        dtype = np.dtype(dtype)
        d_s = dims.filters
        self.query_table = parameter(xavier_uniform(rng, (n_relations, d_s), dtype), name="query_table")
        self.attn_bilinear = parameter(np.eye(d_s, dtype=dtype), name="attn_bilinear")
        self.W_r = parameter(xavier_uniform(rng, (n_relations, d_s), dtype), name="W_r")
        self.b_2 = parameter(np.zeros(n_relations, dtype=dtype), name="b_2")

    @property
    def n_relations(self) -> int:
        return self.b_2.shape[0]


class BagForward:
    """Everything computed for one bag under one relation query."""

    def __init__(self, scores: Tensor, weights: Tensor, representation: Tensor,
                 logits: Tensor, probs: Tensor, gen_index: Optional[int] = None):
        self.scores = scores
        self.weights = weights
        self.representation = representation
        self.logits = logits
        self.probs = probs
        self.gen_index = gen_index

    def __repr__(self) -> str:
        return f"BagForward(instances={self.scores.shape[0]},gen_index={self.gen_index})"


def match_score(x: Tensor, relation_id: int, params: AttentionClassifierParams) -> Tensor:
    """
    e = xᵀ·A_q·R[relation_id] for one instance (d_s,) or every row of (n, d_s).

    Exceptions::
        InvalidArgumentError, relation id outside the query table
    """
    query = take(params.query_table, relation_id)
    column = reshape(query, (query.shape[0], 1))
    e = matmul(matmul(x, params.attn_bilinear), column)
    return reshape(e, e.shape[:-1])


def attention_weights(e: Tensor) -> Tensor:
    if e.ndim != 1 or e.shape[0] == 0:
        raise EmptyInputError(f"attention_weights: need a non-empty score vector, got shape {e.shape}")
    return softmax(e, axis=-1)


def bag_representation(alpha: Tensor, xs: Tensor) -> Tensor:
    """q = Σ α_i x_i. alpha - Tensor (n,); xs - Tensor (n, d_s)"""
    if alpha.ndim != 1 or xs.ndim != 2 or alpha.shape[0] != xs.shape[0]:
        raise ShapeMismatchError(
            f"bag_representation: {alpha.shape} weights do not conform to instances {xs.shape}")
    return matmul(alpha, xs)


def relation_distribution(q: Tensor, params: AttentionClassifierParams) -> Tuple[Tensor, Tensor]:
    """o = W_r q + b_2 and p = softmax(o). q may be (d_s,) or a stack (B, d_s)."""
    o = affine(q, params.W_r, params.b_2)
    return o, softmax(o, axis=-1)


def bag_forward(xs: Tensor, relation_id: int, params: AttentionClassifierParams,
                gen_index: Optional[int] = None) -> BagForward:
    e = match_score(xs, relation_id, params)
    alpha = attention_weights(e)
    q = bag_representation(alpha, xs)
    o, p = relation_distribution(q, params)
    return BagForward(e, alpha, q, o, p, gen_index)


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    # stable, so equal scores keep their instance order
    return np.argsort(-scores, kind="stable")[:k]


def rank_loss_generated(e_all: Tensor, gen_index: int, k: int, literal: bool = False) -> Optional[Tensor]:
    """
    Rank loss of the generated instance among the bag's scores.
    e_all - Tensor (m+1,), scores of the generated instance and m real instances
    gen_index - int, position of the generated instance in e_all
    k - int, 1 <= k <= m
    literal - bool, return exp(e_g)/Σ_{top-k} exp(e_j) with g forced into the top k,
        instead of the default -log(exp(e_g) / Σ_{TopK(real) ∪ {g}} exp(e_j))

    Returns None when the bag has no real instance.

    Exceptions::
        InvalidArgumentError, k outside [1, m] or gen_index outside the bag
    """
    n = e_all.shape[0]
    if not 0 <= gen_index < n:
        raise InvalidArgumentError(f"rank_loss_generated: gen_index {gen_index} outside a bag of {n}")
    m = n - 1
    if m == 0:
        return None
    if not 1 <= k <= m:
        raise InvalidArgumentError(f"rank_loss_generated: k={k} outside [1, {m}]")
    if literal:
        top = [int(i) for i in _top_k(e_all.data, k)]
        if gen_index not in top:
            top[-1] = gen_index
        top.remove(gen_index)
        selected = np.asarray([gen_index] + top, dtype=np.int64)
        return exp(take(log_softmax(take(e_all, selected)), 0))
    real = np.asarray([i for i in range(n) if i != gen_index], dtype=np.int64)
    top = real[_top_k(e_all.data[real], k)]
    selected = np.concatenate([[gen_index], top]).astype(np.int64)
    return scale(take(log_softmax(take(e_all, selected)), 0), -1.0)


def total_rank_loss(bags: Sequence[Tuple[Tensor, int]], k: int, literal: bool = False) -> Tensor:
    """
    Mean rank loss over the bags of a batch. Each entry is (scores, gen_index).
    Bags with fewer than k real instances use k = m; bags with none are skipped.

    Exceptions::
        EmptyInputError, the batch is empty or every bag was skipped
    """
    if not bags:
        raise EmptyInputError("total_rank_loss: empty batch")
    losses = []
    for e_all, gen_index in bags:
        m = e_all.shape[0] - 1
        loss = rank_loss_generated(e_all, gen_index, min(k, m), literal) if m > 0 else None
        if loss is not None:
            losses.append(loss)
    if not losses:
        raise EmptyInputError("total_rank_loss: every bag lacks real instances")
    return mean(stack(losses))


def classification_loss(logits: Sequence[Tensor], gold: Sequence[int]) -> Tensor:
    """-(1/N_b) Σ log p(gold | bag). logits - one (N_r,) Tensor per bag, or a stacked (N_b, N_r) Tensor"""
    if isinstance(logits, Tensor):
        stacked = logits
    else:
        if not logits:
            raise EmptyInputError("classification_loss: empty batch")
        stacked = stack(list(logits))
    n_bags, n_rel = stacked.shape
    gold = np.asarray(gold, dtype=np.int64)
    if gold.shape != (n_bags,):
        raise ShapeMismatchError(f"classification_loss: {gold.shape[0]} labels for {n_bags} bags")
    if gold.size and (gold.min() < 0 or gold.max() >= n_rel):
        raise InvalidArgumentError(f"classification_loss: gold relation outside [0, {n_rel})")
    flat = reshape(log_softmax(stacked, axis=-1), (n_bags * n_rel,))
    picked = take(flat, np.arange(n_bags) * n_rel + gold)
    return scale(mean(picked), -1.0)


def combined_loss(l1: Tensor, l2: Tensor, lambda1: float, lambda2: float) -> Tensor:
    """L = λ1·L1 + λ2·L2 with λ1, λ2 > 0."""
    if lambda1 <= 0 or lambda2 <= 0:
        raise InvalidArgumentError(f"combined_loss: weights must be positive, got {lambda1}, {lambda2}")
    return add(scale(l1, lambda1), scale(l2, lambda2))


def relation_scores(xs: np.ndarray, params: AttentionClassifierParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Held-out scoring of one bag against every relation at once.
    xs - ndarray (m, d_s), real instance vectors

    Returns (scores, weights): scores[r] = p(r | bag attended with query r), shape (N_r,);
    weights[:, r] the attention over instances under query r, shape (m, N_r)
    """
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise EmptyInputError(f"relation_scores: need at least one instance, got shape {xs.shape}")
    e = (xs @ params.attn_bilinear.data) @ params.query_table.data.T
    e = e - e.max(axis=0, keepdims=True)
    weights = np.exp(e)
    weights /= weights.sum(axis=0, keepdims=True)
    reps = weights.T @ xs
    logits = reps @ params.W_r.data.T + params.b_2.data
    logits = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return np.diagonal(probs).copy(), weights


def gen_rank(e_all: np.ndarray, gen_index: int) -> int:
    """1-based position of the generated instance when the bag is sorted by score (1 = top)."""
    return int(np.sum(e_all > e_all[gen_index])) + 1


def batch_forward(xs_per_bag: List[Tensor], relation_ids: Sequence[int],
                  params: AttentionClassifierParams, gen_index: Optional[int] = None) -> List[BagForward]:
    return [bag_forward(xs, rel, params, gen_index) for xs, rel in zip(xs_per_bag, relation_ids)]
