# coding=utf-8
"""
rdsgan command line.

Usage::
    rdsgan synth --output-dir data/synth --n-test-pairs 50
    rdsgan train --config run.json --seed 7
    rdsgan eval --run-dir runs/default --test-corpus data/synth/test.jsonl
    rdsgan generate --run-dir runs/default
    rdsgan gradcheck
"""
import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

from . import __version__
from ._exceptions import ConfigError, RDSGANException
from ._exit_code import exit_codes
from ._model import RunConfigFile, SynthConfig, parse_config
from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .corpus import (
    RelationVocab,
    convert_nyt_to_jsonl,
    corpus_statistics,
    file_sha256,
    load_corpus,
    load_vocabs,
    make_synthetic_mentions,
    save_vocabs,
    synthetic_relation_names,
    write_jsonl,
    write_noise_sidecar,
    write_relation_file,
)
from .evaluation import attention_report, denoising_rate, evaluate, generated_instance_records
from .gradcheck import SUITES, run_gradcheck_suites
from .rdsgan_model import rdsgan_model_builder
from .trainer import train

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
VOCAB_FILE = "vocab.json"
CHECKPOINT_FILE = "checkpoint.bin"
TRAIN_LOG_FILE = "train_log.jsonl"
MANIFEST_FILE = "manifest.json"


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the package's usage exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(int(exit_codes.USAGE_ERROR), f"error: {message}\n")


def _dump_json(data, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _read_json(path: str, what: str) -> Dict:
    try:
        with open(path, encoding="utf-8") as fp:
            return json.load(fp)
    except FileNotFoundError:
        raise ConfigError(f"{what} not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{what} {path} is not valid JSON: {err}")


def _resolved_config(args) -> RunConfigFile:
    data = _read_json(args.config, "config")
    config = parse_config(RunConfigFile, data)
    update = {}
    if args.output_dir:
        update["output_dir"] = args.output_dir
    if args.seed is not None:
        update["train"] = config.train.model_copy(update={"seed": args.seed})
    return config.model_copy(update=update)


def _relation_names(config: RunConfigFile) -> Optional[List[str]]:
    if config.relation_file is None:
        return None
    return RelationVocab.from_file(config.relation_file).to_list()


def _load_run(run_dir: str, checkpoint: Optional[str] = None):
    """Return (config, model, token vocab, relation vocab) of a finished training run."""
    config = parse_config(RunConfigFile, _read_json(os.path.join(run_dir, CONFIG_FILE), "run config"))
    path = checkpoint or os.path.join(run_dir, CHECKPOINT_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint not found: {path} (run `rdsgan train` first or pass --checkpoint)")
    token_vocab, relation_vocab = load_vocabs(os.path.join(run_dir, VOCAB_FILE))
    model = rdsgan_model_builder(config.model, len(token_vocab), len(relation_vocab), dtype="float32")
    load_checkpoint(path, model)
    return config, model, token_vocab, relation_vocab


def cmd_convert(args) -> int:
    counts = convert_nyt_to_jsonl(args.input, args.output)
    print(json.dumps(counts, sort_keys=True))
    return exit_codes.OK


def cmd_synth(args) -> int:
    cfg = parse_config(SynthConfig, dict(
        n_relations=args.n_relations, n_pairs=args.n_pairs, n_test_pairs=args.n_test_pairs,
        instances_per_bag=args.instances_per_bag, vocab_size=args.vocab_size,
        noise_rate=args.noise_rate, sentence_len=args.sentence_len,
    ))
    seed = args.seed or 0
    os.makedirs(args.output_dir, exist_ok=True)
    splits = ["train"] + (["test"] if cfg.n_test_pairs else [])
    for split in splits:
        mentions = make_synthetic_mentions(cfg, seed, split)
        write_jsonl(mentions, os.path.join(args.output_dir, f"{split}.jsonl"))
        write_noise_sidecar(mentions, os.path.join(args.output_dir, f"{split}.noise.jsonl"))
    write_relation_file(RelationVocab(synthetic_relation_names(cfg.n_relations)),
                        os.path.join(args.output_dir, "relation2id.txt"))
    _dump_json({"seed": seed, "synth": cfg.model_dump()}, os.path.join(args.output_dir, "synth.json"))
    logger.info(f"<CLI>:SYNTH={args.output_dir},SPLITS={splits},SEED={seed}")
    return exit_codes.OK


def cmd_train(args) -> int:
    config = _resolved_config(args)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    corpus = load_corpus(config.train_corpus, config.corpus_format, "train", min_count=config.min_count,
                         max_len=config.model.max_len, relation_names=_relation_names(config))
    logger.info(f"<CLI>:TRAIN_CORPUS={config.train_corpus},STATS={corpus_statistics(corpus)}")

    resolved = config.model_dump()
    _dump_json(resolved, os.path.join(out, CONFIG_FILE))
    save_vocabs(os.path.join(out, VOCAB_FILE), corpus.token_vocab, corpus.relation_vocab)
    model = rdsgan_model_builder(config.model, len(corpus.token_vocab), len(corpus.relation_vocab),
                                 seed=config.train.seed)
    train(config.train, corpus, model=model, log_path=os.path.join(out, TRAIN_LOG_FILE))
    save_checkpoint(model, os.path.join(out, CHECKPOINT_FILE))

    corpora = {config.train_corpus: file_sha256(config.train_corpus)}
    if config.test_corpus and os.path.exists(config.test_corpus):
        corpora[config.test_corpus] = file_sha256(config.test_corpus)
    _dump_json({
        "config_sha256": hashlib.sha256(json.dumps(resolved, sort_keys=True).encode("utf-8")).hexdigest(),
        "corpora": corpora,
        "seed": config.train.seed,
        "package_version": __version__,
        "checkpoint_format_version": FORMAT_VERSION,
        "parameter_digest": model.parameter_digest(),
    }, os.path.join(out, MANIFEST_FILE))
    return exit_codes.OK


def cmd_eval(args) -> int:
    config, model, token_vocab, relation_vocab = _load_run(args.run_dir, args.checkpoint)
    test_path = args.test_corpus or config.test_corpus
    if not test_path:
        raise ConfigError("no test corpus: pass --test-corpus or set test_corpus in the run config")
    corpus = load_corpus(test_path, args.format or config.corpus_format, "test",
                         vocabs=(token_vocab, relation_vocab), max_len=config.model.max_len)
    report, _ = evaluate(model, corpus, output_dir=args.output_dir or args.run_dir, threads=args.threads)
    if args.attention:
        rate = denoising_rate(attention_report(model, corpus, threads=args.threads))
        logger.info(f"<CLI>:DENOISING_RATE={rate}")
    print(json.dumps(report.model_dump(), sort_keys=True))
    return exit_codes.OK


def cmd_generate(args) -> int:
    config, model, token_vocab, relation_vocab = _load_run(args.run_dir, args.checkpoint)
    corpus_path = args.corpus or config.train_corpus
    corpus = load_corpus(corpus_path, args.format or config.corpus_format, "train",
                         vocabs=(token_vocab, relation_vocab), max_len=config.model.max_len)
    records = generated_instance_records(model, corpus, threads=args.threads)
    output = args.output or os.path.join(args.run_dir, "generated.jsonl")
    with open(output, "w", encoding="utf-8", newline="\n") as fp:
        for record in records:
            fp.write(record.model_dump_json() + "\n")
    logger.info(f"<CLI>:GENERATED={output},RECORDS={len(records)}")
    return exit_codes.OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck_suites(seed=args.seed or 0, suites=args.suite, raise_on_failure=True)
    print(json.dumps(results, sort_keys=True))
    return exit_codes.OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = CommandParser(add_help=False, formatter_class=fmt)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging level")
    common.add_argument("--threads", type=int, default=1, help="worker threads for evaluation regions")
    common.add_argument("--seed", type=int, default=None, help="run seed, overrides the config file")

    parser = CommandParser(prog="rdsgan", description="Rank-based distant supervision with a triplet GAN",
                           formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=CommandParser)
    sub.required = True

    p = sub.add_parser("convert", help="NYT tab file to canonical JSONL", formatter_class=fmt, parents=[common])
    p.add_argument("--input", required=True, help="NYT tab-separated source file")
    p.add_argument("--output", required=True, help="JSONL destination")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="synthetic corpus with a noise sidecar", formatter_class=fmt,
                       parents=[common])
    defaults = SynthConfig()
    p.add_argument("--output-dir", required=True, help="directory for train/test JSONL and sidecars")
    p.add_argument("--n-relations", type=int, default=defaults.n_relations, help="relations including NA")
    p.add_argument("--n-pairs", type=int, default=defaults.n_pairs, help="training entity pairs")
    p.add_argument("--n-test-pairs", type=int, default=defaults.n_test_pairs, help="test entity pairs")
    p.add_argument("--instances-per-bag", type=int, default=defaults.instances_per_bag, help="mentions per pair")
    p.add_argument("--vocab-size", type=int, default=defaults.vocab_size, help="filler vocabulary size")
    p.add_argument("--noise-rate", type=float, default=defaults.noise_rate, help="planted noise probability")
    p.add_argument("--sentence-len", type=int, default=defaults.sentence_len, help="tokens per sentence")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="alternating GAN and rank training", formatter_class=fmt, parents=[common])
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--output-dir", default=None, help="run directory, overrides the config file")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "held-out metrics of a trained run"),
                                 ("generate", cmd_generate, "export generated instances of a trained run")):
        p = sub.add_parser(name, help=helptext, formatter_class=fmt, parents=[common])
        p.add_argument("--run-dir", required=True, help="directory written by `rdsgan train`")
        p.add_argument("--checkpoint", default=None, help="checkpoint path, defaults to <run-dir>/checkpoint.bin")
        p.add_argument("--format", default=None, choices=["jsonl", "nyt-tsv"],
                       help="corpus format, defaults to the run config")
        if name == "eval":
            p.add_argument("--test-corpus", default=None, help="test corpus, defaults to the run config")
            p.add_argument("--output-dir", default=None, help="report directory, defaults to the run directory")
            p.add_argument("--attention", action="store_true", help="also log the denoising rate")
        else:
            p.add_argument("--corpus", default=None, help="corpus to generate for, defaults to the training corpus")
            p.add_argument("--output", default=None, help="JSONL output, defaults to <run-dir>/generated.jsonl")
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites", formatter_class=fmt,
                       parents=[common])
    p.add_argument("--suite", action="append", choices=list(SUITES), default=None,
                   help="suite to run, repeatable; all when omitted")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            parser.error("--threads must be at least 1")
    except SystemExit as err:
        # --help and usage errors
        return int(err.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")
    try:
        return int(args.func(args))
    except RDSGANException as err:
        logger.debug(repr(err))
        print(f"error: {err.detail}", file=sys.stderr)
        return int(err.exit_code)
    except OSError as err:
        print(f"error: {err.filename or ''}: {err.strerror}", file=sys.stderr)
        return int(exit_codes.USAGE_ERROR)


def main() -> None:
    sys.exit(run())
