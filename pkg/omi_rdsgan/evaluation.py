# coding=utf-8
"""
Held-out evaluation: bag-level predictions, P@N, the non-interpolated PR curve, AUC
and report files, plus attention and generated-instance exports.
"""
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from ._exceptions import EmptyInputError, InvalidArgumentError
from ._model import BagAttention, GeneratedRecord, MetricsReport, PRPoint, Prediction
from .bag_attention import gen_rank, relation_scores
from .core_math import constant
from .corpus import Bag, Corpus
from .gan import discriminate
from .rdsgan_model import RDSGANModel

logger = logging.getLogger(__name__)

P_AT = (100, 200, 300)
CHUNK = 64

GoldKey = Tuple[str, str, int]


def _chunks(bags: Sequence[Bag], size: int = CHUNK) -> List[Sequence[Bag]]:
    return [bags[i:i + size] for i in range(0, len(bags), size)]


def _map_ordered(fn, items: Sequence, threads: int) -> List:
    """Apply ``fn`` to every item, in parallel when threads > 1, keeping input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _instance_vectors(model: RDSGANModel, bags: Sequence[Bag]) -> List[np.ndarray]:
    xs, offsets = model.encode_bags(bags, training=False)
    return [xs.data[offsets[i]:offsets[i + 1]] for i in range(len(bags))]


def predict(model: RDSGANModel, corpus: Corpus, threads: int = 1) -> List[Prediction]:
    """
    Score every (bag, non-NA relation) with relation-specific attention.
    Sorted by descending score, ties by (head_id, tail_id, relation_id).

    Exceptions::
        VocabularyMismatchError, the corpus was encoded with other vocabularies
    """
    model.check_corpus(corpus)
    na_id = corpus.relation_vocab.na_id

    def score_chunk(bags: Sequence[Bag]) -> List[Prediction]:
        out = []
        for bag, xs in zip(bags, _instance_vectors(model, bags)):
            scores, _ = relation_scores(xs, model.classifier)
            for rel_id, score in enumerate(scores):
                if rel_id == na_id:
                    continue
                out.append(Prediction(head_id=bag.head_id, tail_id=bag.tail_id, relation_id=rel_id,
                                      score=min(1.0, max(0.0, float(score)))))
        return out

    predictions = [p for chunk in _map_ordered(score_chunk, _chunks(corpus.bags), threads) for p in chunk]
    predictions.sort(key=lambda p: (-p.score, p.head_id, p.tail_id, p.relation_id))
    logger.info(f"<Evaluation>:BAGS={len(corpus.bags)},PREDICTIONS={len(predictions)},THREADS={threads}")
    return predictions


def gold_set(corpus: Corpus) -> Set[GoldKey]:
    """Every (head_id, tail_id, relation_id) fact of the corpus, NA excluded."""
    na_id = corpus.relation_vocab.na_id
    return {(b.head_id, b.tail_id, r) for b in corpus.bags for r in b.relation_ids if r != na_id}


def _hits(predictions: Sequence[Prediction], gold: Set[GoldKey]) -> np.ndarray:
    return np.asarray([(p.head_id, p.tail_id, p.relation_id) in gold for p in predictions], dtype=bool)


def precision_at_n(predictions: Sequence[Prediction], gold: Set[GoldKey], n: int) -> float:
    """Fraction of the top ``n`` predictions found in ``gold``; 1 <= n <= len(predictions)."""
    if not 1 <= n <= len(predictions):
        raise InvalidArgumentError(f"precision_at_n: N={n} outside [1, {len(predictions)}]")
    return float(np.sum(_hits(predictions[:n], gold))) / n


def pr_curve(predictions: Sequence[Prediction], gold: Set[GoldKey]) -> List[PRPoint]:
    """One point per prediction: precision = correct(r)/r, recall = correct(r)/|gold|."""
    if not gold:
        raise EmptyInputError("pr_curve: gold set is empty")
    correct = np.cumsum(_hits(predictions, gold))
    return [
        PRPoint(rank=r, score=p.score, precision=float(c) / r, recall=float(c) / len(gold))
        for r, (p, c) in enumerate(zip(predictions, correct), start=1)
    ]


def _trapezoid(points: Sequence[PRPoint]) -> float:
    recall = np.asarray([0.0] + [p.recall for p in points])
    precision = np.asarray([points[0].precision] + [p.precision for p in points])
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def auc(points: Sequence[PRPoint]) -> float:
    """
    Trapezoid area under the non-interpolated PR curve over recall, anchored at
    (recall 0, precision of the first point).
    """
    if not points:
        raise EmptyInputError("auc: no PR points")
    return _trapezoid(points)


def auc_at_recall(points: Sequence[PRPoint], max_recall: float = 0.4) -> float:
    """Area of the same curve restricted to points with recall <= max_recall."""
    kept = [p for p in points if p.recall <= max_recall]
    return _trapezoid(kept) if kept else 0.0


def compute_metrics(predictions: Sequence[Prediction], gold: Set[GoldKey],
                    counts: Optional[Dict[str, int]] = None) -> Tuple[MetricsReport, List[PRPoint]]:
    points = pr_curve(predictions, gold)
    p_at = {str(n): (precision_at_n(predictions, gold, n) if n <= len(predictions) else None) for n in P_AT}
    values = list(p_at.values())
    report = MetricsReport(
        p_at=p_at,
        mean=None if None in values else float(np.mean(values)),
        auc=auc(points) if points else 0.0,
        auc_recall_0_4=auc_at_recall(points),
        counts={
            **(counts or {}),
            "predictions": len(predictions),
            "gold": len(gold),
            "correct": int(np.sum(_hits(predictions, gold))),
        },
    )
    return report, points


def emit_report(metrics: MetricsReport, points: Sequence[PRPoint], directory: str) -> Tuple[str, str]:
    """Write metrics.json and pr_curve.csv under ``directory``; the same inputs give the same bytes."""
    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, "pr_curve.csv")
    json_path = os.path.join(directory, "metrics.json")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write("rank,score,precision,recall\n")
        for p in points:
            fp.write(f"{p.rank},{p.score!r},{p.precision!r},{p.recall!r}\n")
    with open(json_path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(json.dumps(metrics.model_dump(), sort_keys=True, indent=2) + "\n")
    logger.info(f"<Evaluation>:REPORT={directory},AUC={metrics.auc:.4f},MEAN_P_AT={metrics.mean}")
    return json_path, csv_path


def evaluate(model: RDSGANModel, corpus: Corpus, output_dir: Optional[str] = None,
             threads: int = 1) -> Tuple[MetricsReport, List[PRPoint]]:
    predictions = predict(model, corpus, threads=threads)
    report, points = compute_metrics(predictions, gold_set(corpus), counts={"bags": len(corpus.bags)})
    if output_dir is not None:
        emit_report(report, points, output_dir)
    return report, points


def attention_report(model: RDSGANModel, corpus: Corpus, threads: int = 1) -> List[BagAttention]:
    """Attention weights of every bag under its gold relation query, alongside instance noise flags."""
    model.check_corpus(corpus)

    def chunk_report(bags: Sequence[Bag]) -> List[BagAttention]:
        out = []
        for bag, xs in zip(bags, _instance_vectors(model, bags)):
            _, weights = relation_scores(xs, model.classifier)
            out.append(BagAttention(
                head_id=bag.head_id, tail_id=bag.tail_id,
                relation=corpus.relation_vocab.name_of(bag.relation_id),
                weights=[float(w) for w in weights[:, bag.relation_id]],
                noise_flags=[bool(i.noise_flag) for i in bag.instances],
            ))
        return out

    return [r for chunk in _map_ordered(chunk_report, _chunks(corpus.bags), threads) for r in chunk]


def denoising_rate(report: Iterable[BagAttention]) -> Optional[float]:
    """
    Among bags holding both noisy and clean instances, the fraction where noisy
    instances receive lower mean attention than clean ones. None when no bag qualifies.
    """
    wins = total = 0
    for bag in report:
        weights = np.asarray(bag.weights)
        flags = np.asarray(bag.noise_flags, dtype=bool)
        if flags.all() or not flags.any():
            continue
        total += 1
        wins += int(weights[flags].mean() < weights[~flags].mean())
    return wins / total if total else None


def generated_instance_records(model: RDSGANModel, corpus: Corpus, threads: int = 1) -> List[GeneratedRecord]:
    """
    For each bag: the generated instance vector, its discriminator score, and its rank,
    match score and attention weight when placed at index 0 among the bag's real instances.
    """
    model.check_corpus(corpus)
    q = model.classifier

    def chunk_records(bags: Sequence[Bag]) -> List[GeneratedRecord]:
        fake = model.generated_instances(bags, training=False).data
        d_fake = discriminate(constant(fake), model.discriminator).data
        out = []
        for i, (bag, xs) in enumerate(zip(bags, _instance_vectors(model, bags))):
            rows = np.concatenate([fake[i:i + 1], xs], axis=0)
            e = (rows @ q.attn_bilinear.data) @ q.query_table.data[bag.relation_id]
            alpha = np.exp(e - e.max())
            alpha /= alpha.sum()
            out.append(GeneratedRecord(
                head_id=bag.head_id, tail_id=bag.tail_id, head=bag.head, tail=bag.tail,
                relation=corpus.relation_vocab.name_of(bag.relation_id),
                rank=gen_rank(e, 0), bag_size=bag.size + 1,
                score=min(1.0, max(0.0, float(d_fake[i]))),
                match_score=float(e[0]),
                attention=min(1.0, max(0.0, float(alpha[0]))),
                vector=[float(v) for v in fake[i]],
            ))
        return out

    return [r for chunk in _map_ordered(chunk_records, _chunks(corpus.bags), threads) for r in chunk]
