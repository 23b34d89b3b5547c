import json
import os
from typing import Dict, Optional

from omi_rdsgan._model import ModelDims, SynthConfig, TrainConfig
from omi_rdsgan.corpus import Corpus, RawMention, make_synthetic
from omi_rdsgan.gradcheck import small_dims
from omi_rdsgan.rdsgan_model import RDSGAN, RDSGANModel

TINY_LEN = 12


def tiny_synth_config(**overrides) -> SynthConfig:
    values = dict(n_relations=4, n_pairs=12, n_test_pairs=6, instances_per_bag=3, vocab_size=20,
                  noise_rate=0.0, sentence_len=TINY_LEN)
    values.update(overrides)
    return SynthConfig(**values)


def tiny_corpus(seed: int = 0, split: str = "train", vocabs=None, **overrides) -> Corpus:
    return make_synthetic(tiny_synth_config(**overrides), seed, split, vocabs=vocabs, max_len=TINY_LEN)


def tiny_train_test(seed: int = 0, **overrides):
    train = tiny_corpus(seed, "train", **overrides)
    test = tiny_corpus(seed, "test", vocabs=(train.token_vocab, train.relation_vocab), **overrides)
    return train, test


def tiny_dims(dtype: str = "float32", **overrides) -> ModelDims:
    values = small_dims().model_dump()
    values.update(dtype=dtype, **overrides)
    return ModelDims(**values)


def tiny_model(corpus: Corpus, seed: int = 0, dtype: str = "float32", **overrides) -> RDSGANModel:
    return RDSGAN(tiny_dims(dtype, **overrides), len(corpus.token_vocab), len(corpus.relation_vocab),
                  seed=seed, dtype=dtype)


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(outer_iterations=2, batch_size=4, lr_g=1e-3, lr_d=1e-2, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


def mention(head_id: str, tail_id: str, head: str, tail: str, relation: str, text: str,
            noise_flag: Optional[bool] = None) -> RawMention:
    tokens = text.split()
    return RawMention(head_id=head_id, tail_id=tail_id, head=head, tail=tail, relation=relation,
                      tokens=tokens, head_pos=tokens.index(head), tail_pos=tokens.index(tail),
                      noise_flag=noise_flag)


def write_run_config(directory: str, train_corpus: str, test_corpus: Optional[str] = None,
                     train: Optional[Dict] = None, model: Optional[Dict] = None, name: str = "run.json") -> str:
    model_values = tiny_dims().model_dump()
    model_values.update(model or {})
    config = {
        "train_corpus": train_corpus,
        "test_corpus": test_corpus,
        "output_dir": os.path.join(directory, "run"),
        "model": model_values,
        "train": dict(dict(outer_iterations=3, batch_size=4, lr_g=1e-3, lr_d=1e-2), **(train or {})),
    }
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(config, fp)
    return path
