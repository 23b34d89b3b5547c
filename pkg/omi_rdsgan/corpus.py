# coding=utf-8
"""
Relation-extraction corpora: mention parsing (NYT tab format and canonical JSONL),
vocabularies, fixed-length instance encoding with relative-position buckets,
grouping into entity-pair bags, and a synthetic corpus with planted label noise.
"""
import hashlib
import json
import logging
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from ._exceptions import CorpusError, EncodeError, InvalidArgumentError, ParseError
from ._model import SynthConfig

logger = logging.getLogger(__name__)

PAD = "<PAD>"
UNK = "<UNK>"
PAD_ID = 0
UNK_ID = 1
NA = "NA"
NYT_END = "###END###"
FORMATS = ("nyt-tsv", "jsonl")


class RawMention(BaseModel):
    head_id: str
    tail_id: str
    head: str
    tail: str
    relation: str
    tokens: List[str]
    head_pos: Optional[int] = None
    tail_pos: Optional[int] = None
    noise_flag: Optional[bool] = None
    line_number: int = Field(0, exclude=True)

    @property
    def flagged(self) -> bool:
        """True when an entity surface could not be located in the tokens."""
        return self.head_pos is None or self.tail_pos is None

    def to_record(self) -> Dict:
        record = {
            "head": self.head,
            "tail": self.tail,
            "head_id": self.head_id,
            "tail_id": self.tail_id,
            "relation": self.relation,
            "tokens": self.tokens,
            "head_pos": self.head_pos,
            "tail_pos": self.tail_pos,
        }
        if self.noise_flag is not None:
            record["noise_flag"] = self.noise_flag
        return record


class EncodedInstance(BaseModel):
    token_ids: List[int]
    head_rel_pos: List[int]
    tail_rel_pos: List[int]
    true_length: int
    head_pos: int
    tail_pos: int
    noise_flag: Optional[bool] = None


class TokenVocab:
    """PAD=0, UNK=1, then tokens by descending frequency, ties alphabetical."""

    def __init__(self, tokens: Sequence[str]):
        self._tokens = [PAD, UNK] + [t for t in tokens if t not in (PAD, UNK)]
        self._ids = {t: i for i, t in enumerate(self._tokens)}

    @classmethod
    def build(cls, counts: Counter, min_count: int = 1) -> "TokenVocab":
        kept = [t for t, c in counts.items() if c >= min_count]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls(kept)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.id_of(t) for t in tokens]

    def to_list(self) -> List[str]:
        return list(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens)


class RelationVocab:
    """Relation names with NA at id 0."""

    def __init__(self, names: Sequence[str]):
        names = list(names)
        if NA in names and names.index(NA) != 0:
            raise CorpusError(f"relation vocabulary must place {NA} at id 0")
        if not names or names[0] != NA:
            names = [NA] + [n for n in names if n != NA]
        if len(names) < 2:
            raise CorpusError(f"relation vocabulary needs {NA} plus at least one relation")
        self._names = names
        self._ids = {n: i for i, n in enumerate(names)}

    @classmethod
    def from_file(cls, path: str) -> "RelationVocab":
        """Read a relation2id style file, one ``name id`` pair per line."""
        pairs = []
        with open(path, encoding="utf-8") as fp:
            for line in fp:
                parts = line.split()
                if len(parts) >= 2:
                    pairs.append((int(parts[1]), parts[0]))
        return cls([name for _, name in sorted(pairs)])

    @property
    def na_id(self) -> int:
        return 0

    def id_of(self, name: str) -> Optional[int]:
        return self._ids.get(name)

    def name_of(self, idx: int) -> str:
        return self._names[idx]

    def to_list(self) -> List[str]:
        return list(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)


class Bag(BaseModel):
    head_id: str
    tail_id: str
    head: str
    tail: str
    head_word_id: int
    tail_word_id: int
    relation_ids: List[int]
    instances: List[EncodedInstance]

    _arrays: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = PrivateAttr(default=None)

    @property
    def relation_id(self) -> int:
        """Gold relation used for generation and attention (first one for test bags)."""
        return self.relation_ids[0]

    @property
    def size(self) -> int:
        return len(self.instances)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(token_ids, head_rel_pos, tail_rel_pos), each (m, L) int64."""
        if self._arrays is None:
            self._arrays = (
                np.asarray([i.token_ids for i in self.instances], dtype=np.int64),
                np.asarray([i.head_rel_pos for i in self.instances], dtype=np.int64),
                np.asarray([i.tail_rel_pos for i in self.instances], dtype=np.int64),
            )
        return self._arrays


class Corpus(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    bags: List[Bag]
    token_vocab: TokenVocab
    relation_vocab: RelationVocab
    split: str = "train"
    max_len: int = 120
    dropped: Dict[str, int] = Field(default_factory=dict)

    @property
    def n_instances(self) -> int:
        return sum(b.size for b in self.bags)

    def validate_ids(self) -> None:
        n_tokens, n_rel = len(self.token_vocab), len(self.relation_vocab)
        for bag in self.bags:
            if bag.size < 1:
                raise CorpusError(f"bag ({bag.head_id},{bag.tail_id}) has no instances")
            if any(r >= n_rel for r in bag.relation_ids):
                raise CorpusError(f"bag ({bag.head_id},{bag.tail_id}) has a relation id >= {n_rel}")
            ids, _, _ = bag.arrays()
            if ids.max() >= n_tokens:
                raise CorpusError(f"bag ({bag.head_id},{bag.tail_id}) has a token id >= {n_tokens}")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def find_entity(surface: str, tokens: Sequence[str]) -> Optional[int]:
    """First index where ``surface`` occurs, as one token or as its '_'/space separated pieces."""
    for i, tok in enumerate(tokens):
        if tok == surface:
            return i
    pieces = surface.replace("_", " ").split()
    n = len(pieces)
    if n > 1:
        for i in range(len(tokens) - n + 1):
            if list(tokens[i:i + n]) == pieces:
                return i
    return None


def parse_nyt_line(line: str, line_number: int = 0) -> RawMention:
    """
    Parse one Riedel/NYT line:
        head_id tail_id head tail relation token ... [###END###]
    Fields are separated by tabs or spaces. Mentions whose entity surface is not in the
    sentence come back flagged (head_pos/tail_pos None); the loader decides what to do.

    Exceptions::
        ParseError, fewer than 6 fields
    """
    fields = line.split()
    if len(fields) < 6:
        raise ParseError(f"expected at least 6 fields, found {len(fields)}", line_number=line_number)
    head_id, tail_id, head, tail, relation = fields[:5]
    tokens = fields[5:]
    if tokens and tokens[-1] == NYT_END:
        tokens = tokens[:-1]
    return RawMention(
        head_id=head_id,
        tail_id=tail_id,
        head=head,
        tail=tail,
        relation=relation,
        tokens=tokens,
        head_pos=find_entity(head, tokens),
        tail_pos=find_entity(tail, tokens),
        line_number=line_number,
    )


def parse_jsonl_line(line: str, line_number: int = 0) -> RawMention:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON: {err.msg}", line_number=line_number)
    missing = [k for k in ("head", "tail", "head_id", "tail_id", "relation", "tokens") if k not in record]
    if missing:
        raise ParseError(f"missing fields {missing}", line_number=line_number)
    tokens = list(record["tokens"])
    head_pos = record.get("head_pos")
    tail_pos = record.get("tail_pos")
    return RawMention(
        head_id=str(record["head_id"]),
        tail_id=str(record["tail_id"]),
        head=record["head"],
        tail=record["tail"],
        relation=record["relation"],
        tokens=tokens,
        head_pos=find_entity(record["head"], tokens) if head_pos is None else int(head_pos),
        tail_pos=find_entity(record["tail"], tokens) if tail_pos is None else int(tail_pos),
        noise_flag=record.get("noise_flag"),
        line_number=line_number,
    )


def read_mentions(path: str, format: str = "jsonl") -> List[RawMention]:
    """
    Read every mention of a UTF-8 corpus file. Blank lines are skipped, and in JSONL so are
    '#' comment lines (the converter header).
    """
    if format not in FORMATS:
        raise InvalidArgumentError(f"unknown corpus format {format!r}, expected one of {FORMATS}")
    mentions = []
    try:
        with open(path, encoding="utf-8") as fp:
            for number, line in enumerate(fp, start=1):
                if not line.strip():
                    continue
                if format == "jsonl":
                    if line.lstrip().startswith("#"):
                        continue
                    mentions.append(parse_jsonl_line(line, number))
                else:
                    mentions.append(parse_nyt_line(line, number))
    except OSError as err:
        raise CorpusError(f"cannot read corpus {path}: {err}")
    logger.info(f"<Corpus>:READ={path},FORMAT={format},MENTIONS={len(mentions)}")
    return mentions


# ---------------------------------------------------------------------------
# vocabularies and encoding
# ---------------------------------------------------------------------------

def build_vocabs(
        mentions: Sequence[RawMention], min_count: int = 1, relation_names: Optional[Sequence[str]] = None
) -> Tuple[TokenVocab, RelationVocab]:
    """
    Token vocabulary from mention tokens (frequency < min_count maps to UNK) and relation
    vocabulary (NA first, then relation names alphabetically unless ``relation_names`` fixes them).
    """
    if not mentions:
        raise CorpusError("cannot build vocabularies from an empty corpus")
    counts = Counter(tok for m in mentions for tok in m.tokens)
    token_vocab = TokenVocab.build(counts, min_count)
    if relation_names is None:
        relation_names = [NA] + sorted({m.relation for m in mentions} - {NA})
    relation_vocab = RelationVocab(relation_names)
    logger.info(f"<Corpus>:TOKENS={len(token_vocab)},RELATIONS={len(relation_vocab)},MIN_COUNT={min_count}")
    return token_vocab, relation_vocab


def _bucket(offset: int, max_len: int) -> int:
    return int(np.clip(offset, -(max_len - 1), max_len - 1)) + max_len - 1


def encode_instance(raw: RawMention, token_vocab: TokenVocab, max_len: int = 120) -> EncodedInstance:
    """
    Token ids padded with PAD (or truncated) to ``max_len``; head and tail offsets i - pos
    clipped to [-(L-1), L-1] and shifted by L-1. PAD slots get the offset-0 bucket.

    Exceptions::
        EncodeError, an entity is missing or lies at position >= max_len
    """
    if raw.flagged:
        raise EncodeError(f"entity surface not found in sentence ({raw.head!r}, {raw.tail!r})")
    if raw.head_pos >= max_len or raw.tail_pos >= max_len:
        raise EncodeError(
            f"entity position ({raw.head_pos}, {raw.tail_pos}) truncated away by aligned length {max_len}")
    true_length = min(len(raw.tokens), max_len)
    token_ids = token_vocab.encode(raw.tokens[:true_length]) + [PAD_ID] * (max_len - true_length)
    zero = max_len - 1
    head_rel = [_bucket(i - raw.head_pos, max_len) if i < true_length else zero for i in range(max_len)]
    tail_rel = [_bucket(i - raw.tail_pos, max_len) if i < true_length else zero for i in range(max_len)]
    return EncodedInstance(
        token_ids=token_ids,
        head_rel_pos=head_rel,
        tail_rel_pos=tail_rel,
        true_length=true_length,
        head_pos=raw.head_pos,
        tail_pos=raw.tail_pos,
        noise_flag=raw.noise_flag,
    )


def decode_instance(inst: EncodedInstance, token_vocab: TokenVocab, relation: str = NA) -> RawMention:
    """Inverse of ``encode_instance`` up to UNK replacement and truncation."""
    tokens = [token_vocab.token_of(i) for i in inst.token_ids[:inst.true_length]]
    return RawMention(
        head_id="",
        tail_id="",
        head=tokens[inst.head_pos],
        tail=tokens[inst.tail_pos],
        relation=relation,
        tokens=tokens,
        head_pos=inst.head_pos,
        tail_pos=inst.tail_pos,
        noise_flag=inst.noise_flag,
    )


def entity_word_id(surface: str, token_vocab: TokenVocab) -> int:
    """Word id standing for an entity in the generator triplet: its first token."""
    first = surface.split()[0] if surface.split() else surface
    if first in token_vocab:
        return token_vocab.id_of(first)
    return token_vocab.id_of(first.split("_")[0])


# ---------------------------------------------------------------------------
# bags
# ---------------------------------------------------------------------------

def build_corpus(
        mentions: Sequence[RawMention],
        token_vocab: TokenVocab,
        relation_vocab: RelationVocab,
        split: str = "train",
        max_len: int = 120,
) -> Corpus:
    """
    Group mentions into bags. Train bags are keyed by (head_id, tail_id, relation); test bags
    by (head_id, tail_id) and record every gold relation of the pair. Bags are sorted by key.
    Mentions with a missing or truncated entity are dropped and counted.

    Exceptions::
        CorpusError, no valid mention remains
    """
    if split not in ("train", "test"):
        raise InvalidArgumentError(f"split must be 'train' or 'test', got {split!r}")
    dropped = Counter()
    groups: Dict[Tuple, List[Tuple[RawMention, EncodedInstance, int]]] = {}
    for m in mentions:
        rel_id = relation_vocab.id_of(m.relation)
        if rel_id is None:
            dropped["unknown_relation_as_na"] += 1
            rel_id = relation_vocab.na_id
        if m.flagged:
            dropped["entity_absent"] += 1
            continue
        try:
            inst = encode_instance(m, token_vocab, max_len)
        except EncodeError:
            dropped["entity_truncated"] += 1
            continue
        key = (m.head_id, m.tail_id, rel_id) if split == "train" else (m.head_id, m.tail_id)
        groups.setdefault(key, []).append((m, inst, rel_id))

    if not groups:
        raise CorpusError("corpus has zero valid mentions")
    for reason, count in sorted(dropped.items()):
        logger.warning(f"<Corpus>:SPLIT={split},DROPPED={reason},COUNT={count}")

    bags = []
    for key in sorted(groups):
        members = groups[key]
        first = members[0][0]
        bags.append(Bag(
            head_id=first.head_id,
            tail_id=first.tail_id,
            head=first.head,
            tail=first.tail,
            head_word_id=entity_word_id(first.head, token_vocab),
            tail_word_id=entity_word_id(first.tail, token_vocab),
            relation_ids=sorted({rel for _, _, rel in members}),
            instances=[inst for _, inst, _ in members],
        ))
    corpus = Corpus(
        bags=bags,
        token_vocab=token_vocab,
        relation_vocab=relation_vocab,
        split=split,
        max_len=max_len,
        dropped=dict(dropped),
    )
    corpus.validate_ids()
    logger.info(f"<Corpus>:SPLIT={split},BAGS={len(bags)},INSTANCES={corpus.n_instances}")
    return corpus


def load_corpus(
        path: str,
        format: str = "jsonl",
        split: str = "train",
        vocabs: Optional[Tuple[TokenVocab, RelationVocab]] = None,
        min_count: int = 1,
        max_len: int = 120,
        relation_names: Optional[Sequence[str]] = None,
) -> Corpus:
    """
    Read, (optionally) build vocabularies, encode and group a corpus file.
    vocabs - (Optional) vocabularies of the training corpus; required for a test split
        to share ids with a trained model
    """
    mentions = read_mentions(path, format)
    if not mentions:
        raise CorpusError(f"corpus {path} has zero mentions")
    if vocabs is None:
        vocabs = build_vocabs(mentions, min_count, relation_names)
    return build_corpus(mentions, vocabs[0], vocabs[1], split, max_len)


def corpus_statistics(corpus: Corpus) -> Dict[str, int]:
    flags = [i.noise_flag for b in corpus.bags for i in b.instances]
    return {
        "bags": len(corpus.bags),
        "instances": corpus.n_instances,
        "multi_instance_bags": sum(1 for b in corpus.bags if b.size > 1),
        "noise_instances": sum(1 for f in flags if f),
        "tokens": len(corpus.token_vocab),
        "relations": len(corpus.relation_vocab),
    }


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_jsonl(mentions: Iterable[RawMention], path: str, header: Optional[str] = None) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        if header:
            fp.write(f"# {header}\n")
        for m in mentions:
            fp.write(json.dumps(m.to_record(), ensure_ascii=False) + "\n")
            count += 1
    return count


def write_noise_sidecar(mentions: Iterable[RawMention], path: str) -> int:
    """One {"index", "head_id", "tail_id", "noise"} record per mention, in corpus order."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for index, m in enumerate(mentions):
            record = {"index": index, "head_id": m.head_id, "tail_id": m.tail_id, "noise": bool(m.noise_flag)}
            fp.write(json.dumps(record) + "\n")
            count += 1
    return count


def convert_nyt_to_jsonl(src: str, dst: str) -> Dict[str, int]:
    """
    Convert an NYT tab file into canonical JSONL with a ``# source_sha256=<hex>`` header.
    Mentions whose entities cannot be located are dropped and counted.
    """
    mentions = read_mentions(src, "nyt-tsv")
    kept = [m for m in mentions if not m.flagged]
    written = write_jsonl(kept, dst, header=f"source_sha256={file_sha256(src)}")
    counts = {"read": len(mentions), "written": written, "dropped_entity_absent": len(mentions) - len(kept)}
    logger.info(f"<Corpus>:CONVERT={src},TO={dst},COUNTS={counts}")
    return counts


def save_vocabs(path: str, token_vocab: TokenVocab, relation_vocab: RelationVocab) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        json.dump({"tokens": token_vocab.to_list(), "relations": relation_vocab.to_list()}, fp, ensure_ascii=False)


def write_relation_file(relation_vocab: RelationVocab, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for idx, name in enumerate(relation_vocab.to_list()):
            fp.write(f"{name} {idx}\n")


def load_vocabs(path: str) -> Tuple[TokenVocab, RelationVocab]:
    try:
        with open(path, encoding="utf-8") as fp:
            data = json.load(fp)
    except (OSError, json.JSONDecodeError) as err:
        raise CorpusError(f"cannot read vocabularies {path}: {err}")
    return TokenVocab(data["tokens"][2:]), RelationVocab(data["relations"])


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

def synthetic_relation_names(n_relations: int) -> List[str]:
    return [NA] + [f"/synthetic/rel_{r}" for r in range(1, n_relations)]


def relation_trigram(relation_index: int) -> List[str]:
    return [f"r{relation_index}a", f"r{relation_index}b", f"r{relation_index}c"]


def make_synthetic_mentions(cfg: SynthConfig, seed: int, split: str = "train") -> List[RawMention]:
    """
    Each relation owns a trigram; a clean instance places its bag relation's trigram between
    head and tail, a noisy one (probability noise_rate) another relation's trigram and carries
    noise_flag=True. Deterministic in (cfg, seed, split).
    """
    if not 0.0 <= cfg.noise_rate < 1.0:
        raise InvalidArgumentError(f"noise rate must lie in [0, 1), got {cfg.noise_rate}")
    rng = np.random.default_rng([seed, 0 if split == "train" else 1])
    names = synthetic_relation_names(cfg.n_relations)
    fillers = [f"w{i}" for i in range(cfg.vocab_size)]
    n_pairs = cfg.n_pairs if split == "train" else cfg.n_test_pairs
    tag = "" if split == "train" else "x"
    free = cfg.sentence_len - 5
    mentions = []
    for p in range(n_pairs):
        rel = int(rng.integers(cfg.n_relations))
        head, tail = f"h{tag}{p}", f"t{tag}{p}"
        for _ in range(cfg.instances_per_bag):
            noisy = bool(rng.random() < cfg.noise_rate)
            pattern = rel
            if noisy:
                pattern = int(rng.integers(cfg.n_relations - 1))
                if pattern >= rel:
                    pattern += 1
            before = int(rng.integers(free + 1))
            words = [fillers[i] for i in rng.integers(cfg.vocab_size, size=free)]
            tokens = words[:before] + [head] + relation_trigram(pattern) + [tail] + words[before:]
            mentions.append(RawMention(
                head_id=f"/m/{head}",
                tail_id=f"/m/{tail}",
                head=head,
                tail=tail,
                relation=names[rel],
                tokens=tokens,
                head_pos=before,
                tail_pos=before + 4,
                noise_flag=noisy,
            ))
    return mentions


def make_synthetic(
        cfg: SynthConfig,
        seed: int,
        split: str = "train",
        vocabs: Optional[Tuple[TokenVocab, RelationVocab]] = None,
        max_len: Optional[int] = None,
) -> Corpus:
    mentions = make_synthetic_mentions(cfg, seed, split)
    if vocabs is None:
        vocabs = build_vocabs(mentions, 1, synthetic_relation_names(cfg.n_relations))
    return build_corpus(mentions, vocabs[0], vocabs[1], split, max_len or cfg.sentence_len)
