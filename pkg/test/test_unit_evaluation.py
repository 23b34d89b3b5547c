import json
import os
import sys

import numpy as np
import pytest

sys.path.append("../")

from omi_rdsgan._exceptions import EmptyInputError, InvalidArgumentError, VocabularyMismatchError
from omi_rdsgan._model import BagAttention, PRPoint, Prediction
from omi_rdsgan.evaluation import (
    attention_report,
    auc,
    auc_at_recall,
    compute_metrics,
    denoising_rate,
    emit_report,
    evaluate,
    generated_instance_records,
    gold_set,
    pr_curve,
    precision_at_n,
    predict,
)
from omi_rdsgan import trainer

from test.mock.mock_corpus import tiny_corpus, tiny_model, tiny_train_config, tiny_train_test


@pytest.fixture(scope='module')
def trained_pair(request):
    train, test = tiny_train_test()
    model = tiny_model(train)

    def teardown_module():
        print("teardown_module called.")

    request.addfinalizer(teardown_module)
    return model, train, test


def _preds(hits, gold_size=None):
    """Predictions in the given order; hits[i] says whether prediction i is a gold fact."""
    preds, gold = [], set()
    for i, hit in enumerate(hits):
        pred = Prediction(head_id=f"h{i}", tail_id=f"t{i}", relation_id=1, score=1.0 - i / (len(hits) + 1))
        preds.append(pred)
        if hit:
            gold.add((pred.head_id, pred.tail_id, 1))
    for j in range((gold_size or len(gold)) - len(gold)):
        gold.add((f"missing{j}", "x", 1))
    return preds, gold


def _oracle_curve(hits, gold_size):
    correct, points = 0, []
    for r, hit in enumerate(hits, start=1):
        correct += int(hit)
        points.append((correct / r, correct / gold_size))
    return points


def _oracle_auc(points, max_recall=None):
    if max_recall is not None:
        points = [p for p in points if p[1] <= max_recall]
    if not points:
        return 0.0
    area, prev_p, prev_r = 0.0, points[0][0], 0.0
    for p, r in points:
        area += (r - prev_r) * (p + prev_p) / 2.0
        prev_p, prev_r = p, r
    return area


def test_precision_at_n_matches_counting():
    rng = np.random.default_rng(0)
    hits = list(rng.random(350) < 0.4)
    preds, gold = _preds(hits)
    for n in (1, 7, 100, 200, 300, 350):
        assert precision_at_n(preds, gold, n) == pytest.approx(sum(hits[:n]) / n)
    with pytest.raises(InvalidArgumentError):
        precision_at_n(preds, gold, 351)
    with pytest.raises(InvalidArgumentError):
        precision_at_n(preds, gold, 0)


def test_pr_curve_and_auc_match_brute_force():
    rng = np.random.default_rng(1)
    for trial in range(20):
        n = int(rng.integers(1, 60))
        hits = list(rng.random(n) < rng.random())
        gold_size = sum(hits) + int(rng.integers(1, 5))
        preds, gold = _preds(hits, gold_size)
        points = pr_curve(preds, gold)
        oracle = _oracle_curve(hits, gold_size)
        assert [p.precision for p in points] == pytest.approx([o[0] for o in oracle])
        assert [p.recall for p in points] == pytest.approx([o[1] for o in oracle])
        assert [p.rank for p in points] == list(range(1, n + 1))
        assert auc(points) == pytest.approx(_oracle_auc(oracle))
        assert auc_at_recall(points) == pytest.approx(_oracle_auc(oracle, 0.4))
        assert 0.0 <= auc(points) <= 1.0


def test_perfect_ranking_has_unit_auc():
    preds, gold = _preds([True] * 5 + [False] * 5)
    points = pr_curve(preds, gold)
    assert points[4].recall == 1.0
    assert auc(points) == pytest.approx(1.0)


def test_constant_precision_curve():
    # precision held at 0.5 while recall climbs to 1
    points = [PRPoint(rank=r, score=0.5, precision=0.5, recall=r / 10) for r in range(1, 11)]
    assert auc(points) == pytest.approx(0.5)
    assert auc_at_recall(points) == pytest.approx(0.2)
    assert auc_at_recall(points[5:]) == 0.0


def test_empty_inputs():
    preds, _ = _preds([False, False])
    with pytest.raises(EmptyInputError):
        pr_curve(preds, set())
    with pytest.raises(EmptyInputError):
        auc([])


def test_compute_metrics_handles_short_prediction_lists():
    hits = [True, False] * 75
    preds, gold = _preds(hits, gold_size=100)
    report, points = compute_metrics(preds, gold, counts={"bags": 150})
    assert report.p_at == {"100": 0.5, "200": None, "300": None}
    assert report.mean is None
    assert report.counts == {"bags": 150, "predictions": 150, "gold": 100, "correct": 75}
    assert len(points) == 150


def test_mean_covers_all_three_cutoffs():
    hits = [True] * 100 + [True, False] * 50 + [False] * 100
    preds, gold = _preds(hits, gold_size=200)
    report, _ = compute_metrics(preds, gold)
    assert report.p_at == {"100": 1.0, "200": 0.75, "300": 0.5}
    assert report.mean == pytest.approx(0.75)


def test_emit_report_is_byte_stable(tmpdir):
    preds, gold = _preds([True, False, True, True, False], gold_size=4)
    report, points = compute_metrics(preds, gold)
    first = emit_report(report, points, os.path.join(str(tmpdir), "a"))
    second = emit_report(report, points, os.path.join(str(tmpdir), "b"))
    for x, y in zip(first, second):
        with open(x, "rb") as fa, open(y, "rb") as fb:
            assert fa.read() == fb.read()
    json_path, csv_path = first
    with open(csv_path, encoding="utf-8") as fp:
        lines = fp.read().splitlines()
    assert lines[0] == "rank,score,precision,recall"
    assert len(lines) == 6
    assert lines[1].startswith("1,")
    with open(json_path, encoding="utf-8") as fp:
        data = json.load(fp)
    assert list(data) == sorted(data)
    assert data["p_at"] == {"100": None, "200": None, "300": None}
    assert data["mean"] is None


def test_predict_scores_every_non_na_relation(trained_pair):
    model, _, test = trained_pair
    preds = predict(model, test)
    n_rel = len(test.relation_vocab)
    assert len(preds) == len(test.bags) * (n_rel - 1)
    assert all(p.relation_id != test.relation_vocab.na_id for p in preds)
    assert all(0.0 <= p.score <= 1.0 for p in preds)
    keys = [(-p.score, p.head_id, p.tail_id, p.relation_id) for p in preds]
    assert keys == sorted(keys)
    assert predict(model, test, threads=4) == preds


def test_predict_rejects_foreign_vocabulary(trained_pair):
    model, _, _ = trained_pair
    with pytest.raises(VocabularyMismatchError):
        predict(model, tiny_corpus(vocab_size=40))


def test_evaluate_writes_reports(trained_pair, tmpdir):
    model, _, test = trained_pair
    out = os.path.join(str(tmpdir), "eval")
    report, points = evaluate(model, test, output_dir=out)
    assert os.path.exists(os.path.join(out, "metrics.json"))
    assert os.path.exists(os.path.join(out, "pr_curve.csv"))
    assert report.counts["gold"] == len(gold_set(test))
    assert report.counts["predictions"] == len(points)
    assert 0.0 <= report.auc <= 1.0


def test_attention_report_and_denoising_rate(trained_pair):
    model, train, _ = trained_pair
    report = attention_report(model, train)
    assert len(report) == len(train.bags)
    for bag, entry in zip(train.bags, report):
        assert len(entry.weights) == bag.size
        assert sum(entry.weights) == pytest.approx(1.0, abs=1e-5)

    handmade = [
        BagAttention(head_id="a", tail_id="b", relation="r", weights=[0.1, 0.9], noise_flags=[True, False]),
        BagAttention(head_id="c", tail_id="d", relation="r", weights=[0.7, 0.3], noise_flags=[True, False]),
        BagAttention(head_id="e", tail_id="f", relation="r", weights=[0.2, 0.2, 0.6], noise_flags=[True, True, False]),
        BagAttention(head_id="g", tail_id="h", relation="r", weights=[0.5, 0.5], noise_flags=[False, False]),
    ]
    assert denoising_rate(handmade) == pytest.approx(2 / 3)
    assert denoising_rate(handmade[3:]) is None


def test_training_lowers_attention_on_planted_noise():
    corpus = tiny_corpus(0, n_pairs=40, instances_per_bag=4, noise_rate=0.3)
    model = tiny_model(corpus, filters=32, dropout=0.0)
    cfg = tiny_train_config(outer_iterations=500, batch_size=len(corpus.bags), lr_g=0.05, lr_d=1e-2,
                            lambda1=0.1, lambda2=10.0, gen_in_class_loss=False)
    trainer.train(cfg, corpus, model=model)
    report = attention_report(model, corpus)
    assert sum(any(b.noise_flags) and not all(b.noise_flags) for b in report) >= 10
    assert denoising_rate(report) >= 0.8


def test_generated_instance_records(trained_pair):
    model, train, _ = trained_pair
    records = generated_instance_records(model, train, threads=2)
    assert len(records) == len(train.bags)
    for bag, record in zip(train.bags, records):
        assert record.bag_size == bag.size + 1
        assert 1 <= record.rank <= record.bag_size
        assert 0.0 <= record.score <= 1.0
        assert len(record.vector) == model.dims.filters
