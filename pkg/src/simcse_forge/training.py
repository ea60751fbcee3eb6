"""Training procedures: single-task and multitask fine-tuning, the two
contrastive stages, the 2-tier pipeline, and transfer fine-tuning.

Every trainer is deterministic given (seed, config, data): one SplitMix64
stream drives initialization, shuffling, and dropout in a fixed consumption
order, and evaluation passes never touch it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .checkpoint import Checkpoint, params_hash
from .data import (Classification, PairLabeled, PairScored, Triplet, Vocab,
                   make_batches, pad_batch, sentences_of, tokenize)
from .encoder import EncoderConfig, ModelParams, encode, init_params
from .evaluation import MetricReport, accuracy, pearson
from .objectives import (SIMILARITY_HEADS, bce_loss, ce_loss, init_head_params,
                         mse_loss, paraphrase_logit, sst_logits, sts_score,
                         sup_simcse_loss, unsup_simcse_loss)
from .optim import AdamWConfig, AdamWState, adamw_step
from .rng import Rng

logger = logging.getLogger("simcse_forge.training")

TASKS = ("sst", "paraphrase", "sts")
_VARIANTS = {"sst": Classification, "paraphrase": PairLabeled, "sts": PairScored}
_METRIC_NAMES = {"sst": "accuracy", "paraphrase": "accuracy", "sts": "pearson"}


@dataclass
class TrainConfig:
    task: str = "sst"
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: float | None = None
    dropout_p: float | None = None    # per-stage override of the encoder policy
    sts_head: str = "cos_sigmoid"
    sst_loss: str = "bce"             # bce against one-hot targets, or "ce"
    tau: float = 0.05
    seed: int = 0
    eval_every: int = 0               # extra dev evals every k steps; 0 = per epoch

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sts_head not in SIMILARITY_HEADS:
            raise ValueError(f"unknown sts head {self.sts_head!r}")
        if self.sst_loss not in ("bce", "ce"):
            raise ValueError("sst_loss must be 'bce' or 'ce'")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.dropout_p is not None and not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0")

    def optim(self) -> AdamWConfig:
        return AdamWConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                           eps=self.eps, weight_decay=self.weight_decay,
                           clip_norm=self.clip_norm)


def _stage_encoder_config(encoder_config: EncoderConfig,
                          train_config: TrainConfig) -> EncoderConfig:
    if train_config.dropout_p is None:
        return encoder_config
    return replace(encoder_config,
                   dropout=replace(encoder_config.dropout, p=train_config.dropout_p))


def _check_variant(task: str, examples, which: str) -> None:
    want = _VARIANTS[task]
    for e in examples:
        if type(e) is not want:
            raise ValueError(
                f"{which} dataset holds {type(e).__name__} examples, "
                f"but task {task!r} needs {want.__name__}")


def _vocab_tokens(vocab: Vocab | None) -> list[str]:
    return vocab.tokens() if vocab is not None else []


# -- task forward passes ------------------------------------------------------------

def task_loss(task: str, batch, params: ModelParams, config: EncoderConfig,
              train_config: TrainConfig, mode: str = "train", step: int = 0,
              rng: Rng | None = None):
    """Scalar training loss for one batch of the given task."""
    pooled = encode(batch.token_ids, batch.mask, params, config,
                    mode=mode, step=step, rng=rng).pooled
    if task == "sst":
        logits = sst_logits(pooled, params.heads)
        if train_config.sst_loss == "bce":
            onehot = np.zeros((batch.size, 5))
            onehot[np.arange(batch.size), batch.labels] = 1.0
            return bce_loss(logits, onehot)
        return ce_loss(logits, batch.labels)
    pooled_b = encode(batch.b_ids, batch.b_mask, params, config,
                      mode=mode, step=step, rng=rng).pooled
    if task == "paraphrase":
        logit = paraphrase_logit(pooled, pooled_b, params.heads,
                                 config.para_features)
        return bce_loss(logit, batch.labels.astype(np.float64))
    scores = sts_score(pooled, pooled_b, train_config.sts_head, params.heads)
    return mse_loss(scores, batch.scores)


def predict(task: str, batch, params: ModelParams, config: EncoderConfig,
            train_config: TrainConfig):
    """Eval-mode predictions: class ids (sst), 0/1 (paraphrase), scores (sts)."""
    with ag.no_grad():
        pooled = encode(batch.token_ids, batch.mask, params, config).pooled
        if task == "sst":
            return np.argmax(sst_logits(pooled, params.heads).data, axis=1)
        pooled_b = encode(batch.b_ids, batch.b_mask, params, config).pooled
        if task == "paraphrase":
            logit = paraphrase_logit(pooled, pooled_b, params.heads,
                                     config.para_features)
            return (logit.data > 0.0).astype(np.int64)
        return sts_score(pooled, pooled_b, train_config.sts_head,
                         params.heads).data


def evaluate_task(task: str, params: ModelParams, config: EncoderConfig,
                  examples, train_config: TrainConfig) -> tuple[str, float, int]:
    """(metric name, value, n) on a dataset; eval mode, insertion order."""
    _check_variant(task, examples, "eval")
    if not examples:
        raise ValueError("cannot evaluate on an empty dataset")
    preds, golds = [], []
    for batch in make_batches(examples, train_config.batch_size):
        preds.extend(predict(task, batch, params, config, train_config).tolist())
        golds.extend((batch.scores if task == "sts" else batch.labels).tolist())
    if task == "sts":
        return "pearson", pearson(preds, golds), len(preds)
    return "accuracy", accuracy(preds, golds), len(preds)


# -- single-task ---------------------------------------------------------------------

def train_single_task(train_config: TrainConfig, encoder_config: EncoderConfig,
                      vocab: Vocab | None, train_examples, dev_examples,
                      params: ModelParams | None = None,
                      stage: str = "baseline") -> Checkpoint:
    """Epoch loop with shuffled batches; returns the best-dev-epoch weights
    (final weights when no dev set is given)."""
    task = train_config.task
    _check_variant(task, train_examples, "train")
    if dev_examples:
        _check_variant(task, dev_examples, "dev")
    config = _stage_encoder_config(encoder_config, train_config)
    rng = Rng(train_config.seed)
    params = params.copy() if params is not None else init_params(config, rng)
    opt_state = AdamWState()
    opt = train_config.optim()

    history: list[dict] = []
    best_value = -np.inf
    best_params = params.copy()
    step = 0

    def consider(value: float) -> None:
        nonlocal best_value, best_params
        if value > best_value:
            best_value = value
            best_params = params.copy()

    for epoch in range(train_config.epochs):
        batches = make_batches(train_examples, train_config.batch_size,
                               rng, shuffle=True)
        total, seen = 0.0, 0
        for batch in batches:
            params.zero_grads()
            loss = task_loss(task, batch, params, config, train_config,
                             mode="train", step=step, rng=rng)
            loss.backward()
            adamw_step(params.named_parameters(), opt_state, opt)
            total += loss.item() * batch.size
            seen += batch.size
            step += 1
            if (train_config.eval_every and dev_examples
                    and step % train_config.eval_every == 0):
                name, value, _ = evaluate_task(task, params, config,
                                               dev_examples, train_config)
                history.append({"stage": stage, "task": task, "epoch": epoch,
                                "step": step, "metric": name,
                                "dev_metric": value})
                consider(value)
        entry = {"stage": stage, "task": task, "epoch": epoch,
                 "train_loss": total / max(seen, 1)}
        if dev_examples:
            name, value, _ = evaluate_task(task, params, config,
                                           dev_examples, train_config)
            entry["metric"] = name
            entry["dev_metric"] = value
            consider(value)
        history.append(entry)

    if not dev_examples:
        best_params = params
    return Checkpoint(config=encoder_config, params=best_params, stage=stage,
                      history=history, vocab_tokens=_vocab_tokens(vocab))


# -- multitask -------------------------------------------------------------------------

def train_multitask(train_config: TrainConfig, encoder_config: EncoderConfig,
                    vocab: Vocab | None, datasets: dict,
                    tasks: tuple[str, ...] = TASKS,
                    params: ModelParams | None = None) -> Checkpoint:
    """Round-robin multitask training over a shared encoder.

    datasets maps task -> (train_examples, dev_examples). Within an epoch
    the enabled tasks take turns batch-for-batch; exhausted streams cycle
    until the longest stream finishes. Best epoch = highest mean dev metric.
    """
    if not tasks:
        raise ValueError("at least one task must be enabled")
    for t in tasks:
        if t not in TASKS:
            raise ValueError(f"unknown task {t!r}")
        if t not in datasets:
            raise ValueError(f"missing dataset for task {t!r}")
        _check_variant(t, datasets[t][0], f"{t} train")
        _check_variant(t, datasets[t][1], f"{t} dev")

    config = _stage_encoder_config(encoder_config, train_config)
    rng = Rng(train_config.seed)
    params = params.copy() if params is not None else init_params(config, rng)
    opt_state = AdamWState()
    opt = train_config.optim()

    history: list[dict] = []
    best_value = -np.inf
    best_params = params.copy()
    step = 0
    for epoch in range(train_config.epochs):
        streams = [make_batches(datasets[t][0], train_config.batch_size,
                                rng, shuffle=True) for t in tasks]
        rounds = max(len(s) for s in streams)
        total, seen = 0.0, 0
        for i in range(rounds):
            for task, stream in zip(tasks, streams):
                batch = stream[i % len(stream)]
                params.zero_grads()
                loss = task_loss(task, batch, params, config, train_config,
                                 mode="train", step=step, rng=rng)
                loss.backward()
                adamw_step(params.named_parameters(), opt_state, opt)
                total += loss.item() * batch.size
                seen += batch.size
                step += 1
        entry = {"stage": "baseline", "task": "+".join(tasks), "epoch": epoch,
                 "train_loss": total / max(seen, 1)}
        values = []
        for task in tasks:
            name, value, _ = evaluate_task(task, params, config,
                                           datasets[task][1], train_config)
            entry[f"{task}_{name}"] = value
            values.append(value)
        entry["dev_metric"] = float(np.mean(values))
        if entry["dev_metric"] > best_value:
            best_value = entry["dev_metric"]
            best_params = params.copy()
        history.append(entry)

    if train_config.epochs == 0:
        best_params = params
    return Checkpoint(config=encoder_config, params=best_params,
                      stage="baseline", history=history,
                      vocab_tokens=_vocab_tokens(vocab))


# -- contrastive stages -------------------------------------------------------------------

def dropout_alignment(params: ModelParams, config: EncoderConfig, token_lists,
                      seed: int, batch_size: int = 32) -> float:
    """Mean cosine between two dropout-perturbed encodings of each sentence.

    A fixed seed pins the masks, so the number is comparable across calls
    with different params (the training-progress axis).
    """
    if not token_lists:
        raise ValueError("alignment needs at least one sentence")
    rng = Rng(seed)
    sims: list[float] = []
    with ag.no_grad():
        for start in range(0, len(token_lists), batch_size):
            ids, mask = pad_batch(token_lists[start:start + batch_size])
            a = encode(ids, mask, params, config, mode="train", rng=rng).pooled.data
            b = encode(ids, mask, params, config, mode="train", rng=rng).pooled.data
            num = np.sum(a * b, axis=1)
            den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            sims.extend((num / den).tolist())
    return float(np.mean(sims))


def train_unsup_simcse(train_config: TrainConfig, encoder_config: EncoderConfig,
                       vocab: Vocab | None, token_lists, params: ModelParams,
                       dev_token_lists=None) -> Checkpoint:
    """Contrastive fine-tuning with dropout as the augmentation: each batch is
    encoded twice in train mode and the two views are positives.

    Fine-tunes given weights (params required); returns the final weights.
    Batches of size 1 carry no negatives and are skipped with a warning.
    """
    if params is None:
        raise ValueError("unsupervised contrastive training fine-tunes "
                         "existing weights; params is required")
    config = _stage_encoder_config(encoder_config, train_config)
    rng = Rng(train_config.seed)
    params = params.copy()
    opt_state = AdamWState()
    opt = train_config.optim()

    history: list[dict] = []
    step = 0
    for epoch in range(train_config.epochs):
        order = list(token_lists)
        rng.shuffle(order)
        total, seen = 0.0, 0
        for start in range(0, len(order), train_config.batch_size):
            chunk = order[start:start + train_config.batch_size]
            if len(chunk) < 2:
                logger.warning("skipping size-1 batch at step %d "
                               "(in-batch negatives need N >= 2)", step)
                continue
            ids, mask = pad_batch(chunk)
            params.zero_grads()
            h = encode(ids, mask, params, config, mode="train",
                       step=step, rng=rng).pooled
            h_plus = encode(ids, mask, params, config, mode="train",
                            step=step, rng=rng).pooled
            loss = unsup_simcse_loss(h, h_plus, train_config.tau)
            loss.backward()
            adamw_step(params.named_parameters(), opt_state, opt)
            total += loss.item() * len(chunk)
            seen += len(chunk)
            step += 1
        entry = {"stage": "unsup_simcse", "epoch": epoch,
                 "train_loss": total / max(seen, 1)}
        if dev_token_lists:
            entry["dev_alignment"] = dropout_alignment(
                params, config, dev_token_lists, seed=train_config.seed)
        history.append(entry)

    return Checkpoint(config=encoder_config, params=params,
                      stage="unsup_simcse", history=history,
                      vocab_tokens=_vocab_tokens(vocab))


def train_sup_simcse(train_config: TrainConfig, encoder_config: EncoderConfig,
                     vocab: Vocab | None, triplets, params: ModelParams,
                     dev_token_lists=None) -> Checkpoint:
    """Contrastive fine-tuning on (anchor, entailed, contradicting) triplets;
    the contradiction rows join the in-batch negatives as hard negatives.

    Size-1 batches are fine: the hard negative supplies the contrast.
    """
    if params is None:
        raise ValueError("supervised contrastive training fine-tunes "
                         "existing weights; params is required")
    for e in triplets:
        if type(e) is not Triplet:
            raise ValueError(f"triplet dataset holds {type(e).__name__} examples")
    config = _stage_encoder_config(encoder_config, train_config)
    rng = Rng(train_config.seed)
    params = params.copy()
    opt_state = AdamWState()
    opt = train_config.optim()

    history: list[dict] = []
    step = 0
    for epoch in range(train_config.epochs):
        batches = make_batches(triplets, train_config.batch_size,
                               rng, shuffle=True)
        total, seen = 0.0, 0
        for batch in batches:
            params.zero_grads()
            h = encode(batch.token_ids, batch.mask, params, config,
                       mode="train", step=step, rng=rng).pooled
            h_plus = encode(batch.b_ids, batch.b_mask, params, config,
                            mode="train", step=step, rng=rng).pooled
            h_minus = encode(batch.c_ids, batch.c_mask, params, config,
                             mode="train", step=step, rng=rng).pooled
            loss = sup_simcse_loss(h, h_plus, h_minus, train_config.tau)
            loss.backward()
            adamw_step(params.named_parameters(), opt_state, opt)
            total += loss.item() * batch.size
            seen += batch.size
            step += 1
        entry = {"stage": "sup_simcse", "epoch": epoch,
                 "train_loss": total / max(seen, 1)}
        if dev_token_lists:
            entry["dev_alignment"] = dropout_alignment(
                params, config, dev_token_lists, seed=train_config.seed)
        history.append(entry)

    return Checkpoint(config=encoder_config, params=params,
                      stage="sup_simcse", history=history,
                      vocab_tokens=_vocab_tokens(vocab))


# -- 2-tier pipeline --------------------------------------------------------------------

@dataclass
class TwoTierConfig:
    """Per-stage hyperparameters for the sequential pipeline: task pre-training
    on scored pairs, unsupervised contrastive fine-tuning on the same
    sentences, then supervised contrastive fine-tuning on triplets."""

    stage1: TrainConfig = field(default_factory=lambda: TrainConfig(task="sts"))
    stage2: TrainConfig = field(default_factory=lambda: TrainConfig(
        task="sts", epochs=1, batch_size=64, lr=3e-5, dropout_p=0.1))
    stage3: TrainConfig = field(default_factory=lambda: TrainConfig(
        task="sts", epochs=5, batch_size=24, lr=5e-5, dropout_p=0.1))
    skip_unsup: bool = False
    extra_sts_finetune: bool = False


def run_two_tier(tt: TwoTierConfig, encoder_config: EncoderConfig, vocab: Vocab,
                 sts_train, sts_dev, triplets
                 ) -> tuple[Checkpoint, list[MetricReport]]:
    """Full pipeline with an STS evaluation after every stage.

    Returns the final checkpoint (stage tag two_tier; history holds each
    stage's epochs plus per-stage summaries with weight hashes) and the
    stage-by-stage metric reports.
    """
    _check_variant("sts", sts_train, "sts train")
    _check_variant("sts", sts_dev, "sts dev")
    reports: list[MetricReport] = []
    history: list[dict] = []

    def stage_report(stage: str, params: ModelParams, init_hash: str,
                     eval_config: TrainConfig) -> None:
        name, value, n = evaluate_task("sts", params, encoder_config,
                                       sts_dev, eval_config)
        reports.append(MetricReport("two_tier", "sts", name, value, n, stage))
        history.append({"stage": stage, "summary": True,
                        "init_hash": init_hash, "final_hash": params_hash(params),
                        "dev_pearson": value})

    ck = train_single_task(tt.stage1, encoder_config, vocab,
                           sts_train, sts_dev, stage="baseline")
    history.extend(ck.history)
    stage_report("baseline", ck.params, "", tt.stage1)
    params = ck.params

    if not tt.skip_unsup:
        init_hash = params_hash(params)
        pool = [tokenize(s, vocab, encoder_config.max_seq_len)
                for s in sentences_of(sts_train)]
        ck = train_unsup_simcse(tt.stage2, encoder_config, vocab, pool, params)
        history.extend(ck.history)
        stage_report("unsup_simcse", ck.params, init_hash, tt.stage1)
        params = ck.params

    init_hash = params_hash(params)
    ck = train_sup_simcse(tt.stage3, encoder_config, vocab, triplets, params)
    history.extend(ck.history)
    stage_report("sup_simcse", ck.params, init_hash, tt.stage1)
    params = ck.params

    if tt.extra_sts_finetune:
        init_hash = params_hash(params)
        ck = train_single_task(tt.stage1, encoder_config, vocab, sts_train,
                               sts_dev, params=params, stage="two_tier")
        history.extend(ck.history)
        stage_report("two_tier", ck.params, init_hash, tt.stage1)
        params = ck.params

    final = Checkpoint(config=encoder_config, params=params, stage="two_tier",
                       history=history, vocab_tokens=vocab.tokens())
    return final, reports


# -- transfer ---------------------------------------------------------------------------

def reinit_task_head(params: ModelParams, task: str, config: EncoderConfig,
                     rng: Rng) -> None:
    """Fresh draws for one task head, in place; the encoder is untouched."""
    d = config.hidden_dim
    heads = params.heads
    if task == "sst":
        fresh = init_head_params(d, config.para_features, rng)
        heads.sst_weight.data = fresh.sst_weight.data
        heads.sst_bias.data = np.zeros(5)
    elif task == "paraphrase":
        fresh = init_head_params(d, config.para_features, rng)
        heads.para_weight.data = fresh.para_weight.data
        heads.para_bias.data = np.zeros(1)
    elif task == "sts":
        fresh = init_head_params(d, config.para_features, rng)
        heads.sts_weight.data = fresh.sts_weight.data
        heads.sts_bias.data = np.zeros(1)
        heads.cross_attn.data = fresh.cross_attn.data
    else:
        raise ValueError(f"unknown task {task!r}")


def transfer_finetune(ckpt: Checkpoint, target_task: str,
                      train_config: TrainConfig, train_examples,
                      dev_examples) -> Checkpoint:
    """Single-task fine-tuning from checkpoint weights with a fresh target head."""
    if train_config.task != target_task:
        train_config = replace(train_config, task=target_task)
    params = ckpt.params.copy()
    reinit_task_head(params, target_task, ckpt.config, Rng(train_config.seed))
    vocab = Vocab.from_tokens(ckpt.vocab_tokens) if ckpt.vocab_tokens else None
    return train_single_task(train_config, ckpt.config, vocab, train_examples,
                             dev_examples, params=params, stage="transfer")
