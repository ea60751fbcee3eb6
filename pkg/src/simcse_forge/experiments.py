"""Toy-scale experiment harnesses.

Each harness synthesizes its corpora, trains the relevant configurations,
and returns MetricReport rows in one of the four report shapes: single-task
vs multitask, the three dropout regimes, transfer vs no-transfer, and the
stage-by-stage 2-tier pipeline. Numbers are toy-scale by design; the point
is the comparison structure, not the absolute scores.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

from .data import (SYNTH_SCHEMAS, Vocab, examples_from_rows, sentences_of,
                   synth_toy_corpus, texts_of_rows, tokenize)
from .dropout import DropoutPolicy
from .encoder import EncoderConfig, init_params
from .evaluation import MetricReport
from .rng import Rng
from .training import (TASKS, TrainConfig, TwoTierConfig, evaluate_task,
                       run_two_tier, train_multitask, train_single_task,
                       train_unsup_simcse, transfer_finetune)

logger = logging.getLogger("simcse_forge.experiments")


@dataclass
class ExperimentConfig:
    seed: int = 0
    train_size: int = 32
    dev_size: int = 12
    epochs: int = 3
    batch_size: int = 8
    lr: float = 1e-3
    hidden_dim: int = 16
    num_layers: int = 1
    num_heads: int = 2
    ffn_dim: int = 32
    max_seq_len: int = 16
    dropout_p: float = 0.1

    def encoder_config(self, vocab: Vocab,
                       dropout: DropoutPolicy | None = None) -> EncoderConfig:
        if dropout is None:
            dropout = DropoutPolicy(kind="standard", p=self.dropout_p)
        return EncoderConfig(vocab_size=len(vocab), hidden_dim=self.hidden_dim,
                             num_layers=self.num_layers, num_heads=self.num_heads,
                             ffn_dim=self.ffn_dim, max_seq_len=self.max_seq_len,
                             dropout=dropout)

    def train_config(self, task: str, **kw) -> TrainConfig:
        base = dict(task=task, epochs=self.epochs, batch_size=self.batch_size,
                    lr=self.lr, seed=self.seed)
        base.update(kw)
        return TrainConfig(**base)


_SCHEMA_BY_TASK = {"sst": "sst", "paraphrase": "paraphrase", "sts": "sts"}


def _task_datasets(xc: ExperimentConfig):
    """One (train, dev) split per task plus the shared vocabulary."""
    rows, texts = {}, []
    for offset, (task, kind) in enumerate(_SCHEMA_BY_TASK.items()):
        r = synth_toy_corpus(kind, xc.train_size + xc.dev_size,
                             Rng(xc.seed * 31 + offset))
        rows[task] = (SYNTH_SCHEMAS[kind], r)
        texts.extend(texts_of_rows(r, SYNTH_SCHEMAS[kind]))
    vocab = Vocab.build(texts)
    datasets = {}
    for task, (schema, r) in rows.items():
        examples = examples_from_rows(r, schema, vocab, xc.max_seq_len)
        datasets[task] = (examples[:xc.train_size], examples[xc.train_size:])
    return vocab, datasets


def run_single_vs_multitask(xc: ExperimentConfig) -> list[MetricReport]:
    """Per-task single-task models against one shared multitask model."""
    vocab, datasets = _task_datasets(xc)
    config = xc.encoder_config(vocab)
    reports = []
    for task in TASKS:
        tc = xc.train_config(task)
        ck = train_single_task(tc, config, vocab, *datasets[task])
        name, value, n = evaluate_task(task, ck.params, config,
                                       datasets[task][1], tc)
        reports.append(MetricReport("single_task", task, name, value, n))
    tc = xc.train_config("sst")
    ck = train_multitask(tc, config, vocab, datasets)
    for task in TASKS:
        name, value, n = evaluate_task(task, ck.params, config,
                                       datasets[task][1], tc)
        reports.append(MetricReport("multitask", task, name, value, n))
    return reports


def run_dropout_comparison(xc: ExperimentConfig) -> list[MetricReport]:
    """One multitask model per dropout regime, same data and seed."""
    vocab, datasets = _task_datasets(xc)
    rounds = math.ceil(xc.train_size / xc.batch_size)
    total_steps = max(1, xc.epochs * rounds * len(TASKS))
    policies = {
        "standard": DropoutPolicy(kind="standard", p=xc.dropout_p),
        "curriculum": DropoutPolicy(kind="curriculum", p=xc.dropout_p,
                                    gamma=5.0, total_steps=total_steps),
        "adaptive": DropoutPolicy(kind="adaptive", alpha=1.0, beta=0.0),
    }
    reports = []
    for kind, policy in policies.items():
        config = xc.encoder_config(vocab, dropout=policy)
        tc = xc.train_config("sst")
        ck = train_multitask(tc, config, vocab, datasets)
        for task in TASKS:
            name, value, n = evaluate_task(task, ck.params, config,
                                           datasets[task][1], tc)
            reports.append(MetricReport(f"dropout_{kind}", task, name, value, n))
    return reports


def run_transfer_ablation(xc: ExperimentConfig) -> list[MetricReport]:
    """Fine-tuning from an unsupervised-contrastive checkpoint against
    training from scratch, on the two classification tasks."""
    vocab, datasets = _task_datasets(xc)
    config = xc.encoder_config(vocab)

    sentences = []
    for task in TASKS:
        sentences.extend(sentences_of(datasets[task][0]))
    pool = [tokenize(s, vocab, xc.max_seq_len) for s in dict.fromkeys(sentences)]

    source = init_params(config, Rng(xc.seed))
    simcse_tc = xc.train_config("sts", batch_size=max(2, xc.batch_size))
    source_ck = train_unsup_simcse(simcse_tc, config, vocab, pool, source)

    reports = []
    for task in ("sst", "paraphrase"):
        tc = xc.train_config(task)
        scratch = train_single_task(tc, config, vocab, *datasets[task])
        name, value, n = evaluate_task(task, scratch.params, config,
                                       datasets[task][1], tc)
        reports.append(MetricReport("no_transfer", task, name, value, n))
        moved = transfer_finetune(source_ck, task, tc, *datasets[task])
        name, value, n = evaluate_task(task, moved.params, config,
                                       datasets[task][1], tc)
        reports.append(MetricReport("with_transfer", task, name, value, n,
                                    stage="transfer"))
    return reports


def run_two_tier_stages(xc: ExperimentConfig) -> list[MetricReport]:
    """The sequential pipeline, scored on STS after every stage."""
    sts_rows = synth_toy_corpus("sts", xc.train_size + xc.dev_size, Rng(xc.seed))
    nli_rows = synth_toy_corpus("nli", xc.train_size, Rng(xc.seed + 1))
    vocab = Vocab.build(texts_of_rows(sts_rows, "pair_scored")
                        + texts_of_rows(nli_rows, "triplet"))
    sts = examples_from_rows(sts_rows, "pair_scored", vocab, xc.max_seq_len)
    nli = examples_from_rows(nli_rows, "triplet", vocab, xc.max_seq_len)
    config = xc.encoder_config(vocab)
    tt = TwoTierConfig(
        stage1=xc.train_config("sts"),
        stage2=xc.train_config("sts", epochs=max(1, xc.epochs // 2),
                               dropout_p=0.1),
        stage3=xc.train_config("sts", epochs=max(1, xc.epochs // 2),
                               dropout_p=0.1))
    _, reports = run_two_tier(tt, config, vocab, sts[:xc.train_size],
                              sts[xc.train_size:], nli)
    return reports


def add_experiment_args(parser) -> None:
    """Expose every ExperimentConfig field as a --dashed-flag."""
    for field in fields(ExperimentConfig):
        parser.add_argument("--" + field.name.replace("_", "-"),
                            type=type(field.default), default=field.default,
                            help=f"(default: {field.default})")


def experiment_config_from_args(args) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in vars(args).items()
                               if k in names})
