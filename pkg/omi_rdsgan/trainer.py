# coding=utf-8
"""
Alternating three-phase optimisation.

Each outer iteration runs s_d discriminator steps (generator fixed), s_g adversarial
generator steps (discriminator fixed) and s_r rank steps that descend
λ1·L1 + λ2·L2 with the generated instance placed at index 0 of every bag.

Trainable sets per phase:
    discriminator   discriminator
    generator_adv   generator, encoder
    generator_rank  generator, classifier
"""
import logging
import time
from typing import IO, List, Optional, Sequence, Tuple

import numpy as np

from ._exceptions import CorpusError, RDSGANException, TrainingStepError
from ._model import ModelDims, TrainConfig, TrainLogRecord
from .bag_attention import (
    bag_forward,
    classification_loss,
    combined_loss,
    gen_rank,
    match_score,
    total_rank_loss,
)
from .core_math import Tape, backward, concat, constant, scale, sgd_step, slice_axis, stack
from .corpus import Bag, Corpus
from .gan import discriminate, discriminator_objective, generator_adv_objective
from .rdsgan_model import GROUPS, RDSGANModel, rdsgan_model_builder

logger = logging.getLogger(__name__)

PHASES = ("discriminator", "generator_adv", "generator_rank")
TRAINABLE = {
    "discriminator": ("discriminator",),
    "generator_adv": ("generator", "encoder"),
    "generator_rank": ("generator", "classifier"),
}


class BagSampler:
    """
    Batches of bag indices without replacement within an epoch; the order is
    reshuffled from default_rng([seed, stream]) whenever the epoch runs out.
    """

    def __init__(self, n_bags: int, batch_size: int, seed: int, stream: int):
        if n_bags < 1:
            raise CorpusError("cannot sample batches from an empty corpus")
        self.n_bags = n_bags
        self.batch_size = min(batch_size, n_bags)
        self.rng = np.random.default_rng([seed, stream])
        self.order = self.rng.permutation(n_bags)
        self.position = 0
        self.epoch = 0

    def next_batch(self) -> List[int]:
        if self.position + self.batch_size > self.n_bags:
            self.order = self.rng.permutation(self.n_bags)
            self.position = 0
            self.epoch += 1
        batch = self.order[self.position:self.position + self.batch_size]
        self.position += self.batch_size
        return [int(i) for i in batch]


def _finite(value: float, phase: str) -> float:
    if not np.isfinite(value):
        raise TrainingStepError(f"{phase} objective is not finite ({value})", phase=phase)
    return float(value)


def step_discriminator(model: RDSGANModel, bags: Sequence[Bag], lr_d: float,
                       rng: Optional[np.random.Generator] = None, training: bool = True) -> TrainLogRecord:
    """
    One ascent step on the discriminator objective; only discriminator parameters move.
    Real and generated vectors are computed first and enter the objective as constants.
    """
    real, _ = model.encode_bags(bags, training=training, rng=rng)
    fake = model.generated_instances(bags, training=training, rng=rng)
    real, fake = constant(real.data), constant(fake.data)
    disc = model.discriminator
    with Tape() as tape:
        objective = discriminator_objective(real, fake, disc)
        loss = scale(objective, -1.0)
    value = _finite(objective.item(), "discriminator")
    mean_d_real = float(np.mean(discriminate(real, disc).data))
    mean_d_fake = float(np.mean(discriminate(fake, disc).data))
    grads = backward(tape, loss)
    sgd_step(disc.parameters(), grads, lr_d)
    return TrainLogRecord(iteration=0, phase="discriminator", step=0, objective=value,
                          mean_d_real=mean_d_real, mean_d_fake=mean_d_fake)


def step_generator_adv(model: RDSGANModel, bags: Sequence[Bag], lr_g: float,
                       rng: Optional[np.random.Generator] = None, training: bool = True,
                       non_saturating: bool = False) -> TrainLogRecord:
    """One descent step on the adversarial generator objective over generator and encoder parameters."""
    with Tape() as tape:
        fake = model.generated_instances(bags, training=training, rng=rng)
        objective = generator_adv_objective(fake, model.discriminator, non_saturating=non_saturating)
    value = _finite(objective.item(), "generator_adv")
    mean_d_fake = float(np.mean(discriminate(constant(fake.data), model.discriminator).data))
    grads = backward(tape, objective)
    sgd_step(model.parameters(TRAINABLE["generator_adv"]), grads, lr_g)
    return TrainLogRecord(iteration=0, phase="generator_adv", step=0, objective=value, mean_d_fake=mean_d_fake)


def rank_phase_loss(model: RDSGANModel, bags: Sequence[Bag], lambda1: float, lambda2: float, k: int,
                    literal: bool = False, gen_in_class_loss: bool = True, training: bool = True,
                    gen_dropout: bool = True, rng: Optional[np.random.Generator] = None):
    """
    Build L = λ1·L1 + λ2·L2 on the active tape with each bag's generated instance at index 0.
    Real instance vectors stay on the tape, so the encoder receives gradients too; which
    groups actually move is decided by the caller's sgd_step.

    Returns (L, L1, L2, generated ranks)
    """
    real, offsets = model.encode_bags(bags, training=training, rng=rng)
    fake = model.generated_instances(bags, training=training and gen_dropout, rng=rng)
    rank_entries, logits, ranks = [], [], []
    for i, bag in enumerate(bags):
        real_rows = slice_axis(real, offsets[i], offsets[i + 1], axis=0)
        xs = concat([slice_axis(fake, i, i + 1, axis=0), real_rows], axis=0)
        e = match_score(xs, bag.relation_id, model.classifier)
        rank_entries.append((e, 0))
        ranks.append(gen_rank(e.data, 0))
        forward = bag_forward(xs if gen_in_class_loss else real_rows, bag.relation_id, model.classifier)
        logits.append(forward.logits)
    l1 = total_rank_loss(rank_entries, k, literal=literal)
    l2 = classification_loss(stack(logits), [bag.relation_id for bag in bags])
    return combined_loss(l1, l2, lambda1, lambda2), l1, l2, ranks


def step_generator_rank(model: RDSGANModel, bags: Sequence[Bag], lr_g: float, lambda1: float, lambda2: float,
                        k: int, rng: Optional[np.random.Generator] = None, training: bool = True,
                        literal: bool = False, gen_in_class_loss: bool = True,
                        gen_dropout: bool = True) -> TrainLogRecord:
    """One descent step on λ1·L1 + λ2·L2 over generator and classifier parameters."""
    with Tape() as tape:
        loss, l1, l2, ranks = rank_phase_loss(
            model, bags, lambda1, lambda2, k, literal=literal, gen_in_class_loss=gen_in_class_loss,
            training=training, gen_dropout=gen_dropout, rng=rng)
    value = _finite(loss.item(), "generator_rank")
    if loss.requires_grad:
        grads = backward(tape, loss)
        sgd_step(model.parameters(TRAINABLE["generator_rank"]), grads, lr_g)
    return TrainLogRecord(iteration=0, phase="generator_rank", step=0, objective=value,
                          l1=l1.item(), l2=l2.item(), mean_gen_rank=float(np.mean(ranks)))


class RDSGANTrainer:
    """
    Runs the outer loop over a corpus, writing one TrainLogRecord per optimizer step.

    Memo::
        Batches come from one BagSampler per phase; the dropout stream of a step is
        default_rng([seed, 100 + phase index, iteration, step]). A run is therefore a
        pure function of (config, corpus, initial parameters).
    """

    def __init__(self, model: RDSGANModel, corpus: Corpus, config: TrainConfig,
                 log_path: Optional[str] = None):
        if not corpus.bags:
            raise CorpusError("training corpus has no bags")
        model.check_corpus(corpus)
        self.model = model
        self.corpus = corpus
        self.config = config
        self.log_path = log_path
        self.samplers = {
            phase: BagSampler(len(corpus.bags), config.batch_size, config.seed, stream)
            for stream, phase in enumerate(PHASES)
        }
        self.records: List[TrainLogRecord] = []

    def _step(self, phase: str, iteration: int, step: int) -> TrainLogRecord:
        cfg = self.config
        bags = [self.corpus.bags[i] for i in self.samplers[phase].next_batch()]
        rng = np.random.default_rng([cfg.seed, 100 + PHASES.index(phase), iteration, step])
        if phase == "discriminator":
            return step_discriminator(self.model, bags, cfg.lr_d, rng=rng)
        if phase == "generator_adv":
            return step_generator_adv(self.model, bags, cfg.lr_g, rng=rng, non_saturating=cfg.non_saturating_g)
        return step_generator_rank(
            self.model, bags, cfg.lr_g, cfg.lambda1, cfg.lambda2, cfg.k, rng=rng, literal=cfg.literal_rank_loss,
            gen_in_class_loss=cfg.gen_in_class_loss, gen_dropout=cfg.gen_dropout_in_rank_phase)

    def _guarded_step(self, phase: str, iteration: int, step: int) -> TrainLogRecord:
        frozen = [g for g in GROUPS if g not in TRAINABLE[phase]]
        before = self.model.parameter_digest(frozen) if self.config.verify_isolation else None
        try:
            record = self._step(phase, iteration, step)
        except TrainingStepError as err:
            raise TrainingStepError(f"iteration {iteration}, {phase} step {step}: {err.detail}",
                                    phase=phase, iteration=iteration) from err
        except RDSGANException as err:
            raise TrainingStepError(f"iteration {iteration}, {phase} step {step}: {err.detail}",
                                    phase=phase, iteration=iteration,
                                    exit_code=err.exit_code, trace_code=err.trace_code) from err
        if before is not None and self.model.parameter_digest(frozen) != before:
            raise TrainingStepError(f"iteration {iteration}, {phase} step {step}: frozen parameters changed",
                                    phase=phase, iteration=iteration)
        return record.model_copy(update={"iteration": iteration, "step": step})

    def _write(self, stream: Optional[IO], record: TrainLogRecord) -> None:
        self.records.append(record)
        if stream is not None:
            exclude = None if self.config.log_wall_time else {"wall_time"}
            stream.write(record.model_dump_json(exclude=exclude) + "\n")
            stream.flush()

    def run(self) -> List[TrainLogRecord]:
        cfg = self.config
        schedule = (("discriminator", cfg.s_d), ("generator_adv", cfg.s_g), ("generator_rank", cfg.s_r))
        started = time.perf_counter()
        stream = open(self.log_path, "w", encoding="utf-8", newline="\n") if self.log_path else None
        logger.info(f"<RDSGANTrainer>:BAGS={len(self.corpus.bags)},ITERATIONS={cfg.outer_iterations},"
                    f"S_D={cfg.s_d},S_G={cfg.s_g},S_R={cfg.s_r},SEED={cfg.seed}")
        try:
            for iteration in range(cfg.outer_iterations):
                for phase, steps in schedule:
                    for step in range(steps):
                        record = self._guarded_step(phase, iteration, step)
                        if cfg.log_wall_time:
                            record.wall_time = time.perf_counter() - started
                        self._write(stream, record)
                if self.records:
                    last = self.records[-1]
                    logger.debug(f"<RDSGANTrainer>:ITERATION={iteration},PHASE={last.phase},"
                                 f"OBJECTIVE={last.objective:.6f}")
        finally:
            if stream is not None:
                stream.close()
        logger.info(f"<RDSGANTrainer>:STEPS={len(self.records)},ELAPSED={time.perf_counter() - started:.2f}s")
        return self.records


def train(
        config: TrainConfig,
        corpus: Corpus,
        model: Optional[RDSGANModel] = None,
        dims: Optional[ModelDims] = None,
        log_path: Optional[str] = None,
) -> Tuple[RDSGANModel, List[TrainLogRecord]]:
    """
    Train on ``corpus`` and return (model, log records).
    model - (Optional) RDSGANModel, trained in place; built from ``dims`` and config.seed when absent
    dims - (Optional) ModelDims, defaults to ModelDims aligned to the corpus sentence length
    log_path - (Optional) str, JSONL telemetry, one record per optimizer step

    Exceptions::
        CorpusError, the corpus has no bags
        VocabularyMismatchError, the model was built for other vocabularies
        TrainingStepError, a step failed; carries the phase and iteration
    """
    if model is None:
        dims = dims or ModelDims(max_len=corpus.max_len)
        model = rdsgan_model_builder(dims, len(corpus.token_vocab), len(corpus.relation_vocab), seed=config.seed)
    records = RDSGANTrainer(model, corpus, config, log_path=log_path).run()
    return model, records
