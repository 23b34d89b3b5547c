import os
import sys

import pytest

sys.path.append("../")

from omi_rdsgan._exceptions import CorpusError, EncodeError, InvalidArgumentError, ParseError
from omi_rdsgan._model import SynthConfig
from omi_rdsgan.corpus import (
    NA,
    PAD_ID,
    UNK_ID,
    RelationVocab,
    TokenVocab,
    build_corpus,
    build_vocabs,
    convert_nyt_to_jsonl,
    corpus_statistics,
    decode_instance,
    encode_instance,
    load_corpus,
    load_vocabs,
    make_synthetic,
    make_synthetic_mentions,
    parse_nyt_line,
    read_mentions,
    save_vocabs,
    write_jsonl,
)

from test.mock.mock_corpus import mention, tiny_corpus

NYT_LINE = "m.01 m.02 obama hawaii /people/person/place_of_birth obama was born in hawaii ###END###"


def test_parse_nyt_line():
    m = parse_nyt_line(NYT_LINE)
    assert (m.head, m.tail, m.relation) == ("obama", "hawaii", "/people/person/place_of_birth")
    assert m.tokens == ["obama", "was", "born", "in", "hawaii"]
    assert (m.head_pos, m.tail_pos) == (0, 4)

    assert parse_nyt_line("a b x y NA x and y").relation == NA

    try:
        parse_nyt_line("a b c d", line_number=7)
        assert False, "expected ParseError"
    except ParseError as err:
        assert err.line_number == 7
        assert str(err).startswith("line 7:")


def test_parse_flags_absent_entity():
    m = parse_nyt_line("a b obama paris NA obama was here")
    assert m.flagged
    assert m.tail_pos is None


def test_build_vocabs_order_and_min_count():
    mentions = [
        mention("a", "b", "x", "y", "r1", "x beta alpha y"),
        mention("a", "b", "x", "y", "r1", "x beta alpha y once"),
    ]
    tokens, relations = build_vocabs(mentions, min_count=2)
    assert tokens.to_list()[:2] == ["<PAD>", "<UNK>"]
    # alpha, beta, x, y all have frequency 2: alphabetical
    assert tokens.to_list()[2:] == ["alpha", "beta", "x", "y"]
    assert tokens.id_of("once") == UNK_ID
    assert relations.to_list() == [NA, "r1"]
    assert all(tokens.id_of(tokens.token_of(i)) == i for i in range(len(tokens)))


def test_relation_vocab_rules():
    assert RelationVocab([NA, "r1"]).na_id == 0
    with pytest.raises(CorpusError):
        RelationVocab(["r1", NA, "r2"])
    with pytest.raises(CorpusError):
        RelationVocab([NA])
    assert RelationVocab(["r2", "r1"]).to_list() == [NA, "r2", "r1"]


def test_encode_instance_buckets():
    L = 8
    tv = TokenVocab(["x", "was", "y"])
    inst = encode_instance(mention("a", "b", "x", "y", "r", "x was y"), tv, max_len=L)
    assert len(inst.token_ids) == L
    assert inst.true_length == 3
    assert inst.token_ids[3:] == [PAD_ID] * 5
    assert inst.head_rel_pos[0] == L - 1
    assert inst.head_rel_pos[2] == 2 + L - 1
    assert inst.tail_rel_pos[0] == -2 + L - 1
    assert all(b == L - 1 for b in inst.head_rel_pos[3:])
    assert all(0 <= b <= 2 * L - 2 for b in inst.head_rel_pos + inst.tail_rel_pos)


def test_encode_instance_full_length_and_truncation():
    tv = TokenVocab([f"w{i}" for i in range(200)])
    tokens = [f"w{i}" for i in range(200)]
    full = mention("a", "b", "w0", "w5", "r", " ".join(tokens[:120]))
    inst = encode_instance(full, tv, max_len=120)
    assert inst.true_length == 120
    assert PAD_ID not in inst.token_ids

    far = mention("a", "b", "w0", "w150", "r", " ".join(tokens))
    with pytest.raises(EncodeError):
        encode_instance(far, tv, max_len=120)


def test_decode_then_encode_is_idempotent():
    corpus = tiny_corpus()
    inst = corpus.bags[0].instances[0]
    again = encode_instance(decode_instance(inst, corpus.token_vocab), corpus.token_vocab, corpus.max_len)
    assert again.token_ids == inst.token_ids
    assert again.head_rel_pos == inst.head_rel_pos
    assert again.tail_rel_pos == inst.tail_rel_pos


def test_grouping_train_and_test():
    mentions = [
        mention("a", "b", "x", "y", "r1", "x likes y"),
        mention("a", "b", "x", "y", "r1", "x met y"),
        mention("a", "b", "x", "y", "r2", "x hates y"),
        mention("c", "d", "u", "v", "r1", "u likes v"),
    ]
    tv, rv = build_vocabs(mentions)
    train = build_corpus(mentions, tv, rv, "train", max_len=6)
    assert [(b.head_id, b.tail_id, b.relation_id, b.size) for b in train.bags] == [
        ("a", "b", rv.id_of("r1"), 2), ("a", "b", rv.id_of("r2"), 1), ("c", "d", rv.id_of("r1"), 1)]
    assert sum(b.size for b in train.bags) == len(mentions)

    test = build_corpus(mentions, tv, rv, "test", max_len=6)
    assert len(test.bags) == 2
    assert test.bags[0].relation_ids == sorted([rv.id_of("r1"), rv.id_of("r2")])
    assert test.bags[0].size == 3


def test_unknown_relation_maps_to_na_and_drops_are_counted():
    tv, rv = build_vocabs([mention("a", "b", "x", "y", "r1", "x likes y")])
    mentions = [
        mention("a", "b", "x", "y", "r9", "x likes y"),
        parse_nyt_line("c d u v r1 nobody here"),
    ]
    corpus = build_corpus(mentions, tv, rv, "test", max_len=6)
    assert corpus.bags[0].relation_ids == [rv.na_id]
    assert corpus.dropped == {"unknown_relation_as_na": 1, "entity_absent": 1}
    with pytest.raises(CorpusError):
        build_corpus([parse_nyt_line("c d u v r1 nobody here")], tv, rv, "train", max_len=6)


def test_synthetic_determinism_and_noise():
    cfg = SynthConfig(n_relations=5, n_pairs=50, instances_per_bag=4, vocab_size=30)
    first = [m.to_record() for m in make_synthetic_mentions(cfg, 3)]
    assert first == [m.to_record() for m in make_synthetic_mentions(cfg, 3)]
    assert not any(r["noise_flag"] for r in first)

    noisy = SynthConfig(n_relations=5, n_pairs=2500, instances_per_bag=4, vocab_size=30, noise_rate=0.3)
    flags = [m.noise_flag for m in make_synthetic_mentions(noisy, 1)]
    assert len(flags) == 10000
    assert abs(sum(flags) / len(flags) - 0.3) < 0.02

    with pytest.raises(InvalidArgumentError):
        make_synthetic_mentions(cfg.model_copy(update={"noise_rate": 1.0}), 0)


def test_synthetic_instances_keep_invariants():
    for seed in range(5):
        corpus = make_synthetic(SynthConfig(n_pairs=20, vocab_size=20, noise_rate=0.2), seed)
        corpus.validate_ids()
        L = corpus.max_len
        for bag in corpus.bags:
            for inst in bag.instances:
                assert len(inst.token_ids) == L
                assert all(0 <= b <= 2 * L - 2 for b in inst.head_rel_pos + inst.tail_rel_pos)


def test_corpus_statistics():
    stats = corpus_statistics(tiny_corpus(noise_rate=0.5))
    assert stats["instances"] == 36
    assert stats["bags"] >= 1
    assert 0 < stats["noise_instances"] < 36


def test_files_round_trip(tmpdir):
    src = os.path.join(str(tmpdir), "nyt.txt")
    with open(src, "w", encoding="utf-8") as fp:
        fp.write(NYT_LINE + "\n")
        fp.write("m.03 m.04 paris france /location/contains paris is in france ###END###\n")
        fp.write("m.05 m.06 ghost town NA nothing matches ###END###\n")
    dst = os.path.join(str(tmpdir), "nyt.jsonl")
    counts = convert_nyt_to_jsonl(src, dst)
    assert counts == {"read": 3, "written": 2, "dropped_entity_absent": 1}
    with open(dst, encoding="utf-8") as fp:
        assert fp.readline().startswith("# source_sha256=")
    assert [m.head for m in read_mentions(dst)] == ["obama", "paris"]

    corpus = load_corpus(dst, "jsonl", "train", max_len=10)
    vocab_path = os.path.join(str(tmpdir), "vocab.json")
    save_vocabs(vocab_path, corpus.token_vocab, corpus.relation_vocab)
    tokens, relations = load_vocabs(vocab_path)
    assert tokens.to_list() == corpus.token_vocab.to_list()
    assert relations.to_list() == corpus.relation_vocab.to_list()

    copy = os.path.join(str(tmpdir), "copy.jsonl")
    assert write_jsonl(read_mentions(dst), copy) == 2
    assert [m.to_record() for m in read_mentions(copy)] == [m.to_record() for m in read_mentions(dst)]


def test_read_errors(tmpdir):
    with pytest.raises(CorpusError):
        read_mentions(os.path.join(str(tmpdir), "missing.jsonl"))
    bad = os.path.join(str(tmpdir), "bad.jsonl")
    with open(bad, "w", encoding="utf-8") as fp:
        fp.write("{not json}\n")
    with pytest.raises(ParseError):
        read_mentions(bad)
    with pytest.raises(InvalidArgumentError):
        read_mentions(bad, "csv")
