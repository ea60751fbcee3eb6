"""Miniature BERT-style encoder.

Token + position embeddings, a stack of post-layer-norm transformer blocks
(multi-head self-attention, then a GELU feed-forward, each sublayer followed
by dropout, residual add and layer norm), and a pooled sentence embedding:
either a tanh pooler over the [CLS] state or a mask-weighted mean.

Sentence pairs are encoded with two separate passes; there is no segment
embedding or joint-sequence mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import Tensor, embedding, layer_norm, matmul, softmax
from .dropout import DropoutPolicy, apply_dropout
from .objectives import HeadParams, init_head_params
from .rng import Rng

POOLING_MODES = ("cls_tanh", "mean")


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 32
    num_layers: int = 4
    num_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 64
    dropout: DropoutPolicy = field(default_factory=DropoutPolicy)
    pooling: str = "cls_tanh"
    para_features: str = "rich"

    def __post_init__(self):
        if min(self.vocab_size, self.hidden_dim, self.num_layers,
               self.num_heads, self.ffn_dim) < 1:
            raise ValueError("encoder dimensions must be positive")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2 ([CLS] plus [SEP])")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {self.pooling!r}")


@dataclass
class LayerParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor


@dataclass
class ModelParams:
    """Every learnable tensor of the encoder plus the task heads.

    The adaptive-dropout affine scalars live here too so the optimizer and
    checkpoints treat them like any other parameter.
    """

    token_embeddings: Tensor
    position_embeddings: Tensor
    emb_ln_gamma: Tensor
    emb_ln_beta: Tensor
    layers: list[LayerParams]
    pooler_weight: Tensor
    pooler_bias: Tensor
    heads: HeadParams
    adaptive_alpha: Tensor
    adaptive_beta: Tensor

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [
            ("token_embeddings", self.token_embeddings),
            ("position_embeddings", self.position_embeddings),
            ("emb_ln.gamma", self.emb_ln_gamma),
            ("emb_ln.beta", self.emb_ln_beta),
        ]
        for i, lp in enumerate(self.layers):
            prefix = f"layers.{i}"
            out += [
                (f"{prefix}.attn.wq", lp.wq), (f"{prefix}.attn.bq", lp.bq),
                (f"{prefix}.attn.wk", lp.wk), (f"{prefix}.attn.bk", lp.bk),
                (f"{prefix}.attn.wv", lp.wv), (f"{prefix}.attn.bv", lp.bv),
                (f"{prefix}.attn.wo", lp.wo), (f"{prefix}.attn.bo", lp.bo),
                (f"{prefix}.ln1.gamma", lp.ln1_gamma), (f"{prefix}.ln1.beta", lp.ln1_beta),
                (f"{prefix}.ffn.w1", lp.ffn_w1), (f"{prefix}.ffn.b1", lp.ffn_b1),
                (f"{prefix}.ffn.w2", lp.ffn_w2), (f"{prefix}.ffn.b2", lp.ffn_b2),
                (f"{prefix}.ln2.gamma", lp.ln2_gamma), (f"{prefix}.ln2.beta", lp.ln2_beta),
            ]
        h = self.heads
        out += [
            ("pooler.weight", self.pooler_weight), ("pooler.bias", self.pooler_bias),
            ("heads.sst.weight", h.sst_weight), ("heads.sst.bias", h.sst_bias),
            ("heads.para.weight", h.para_weight), ("heads.para.bias", h.para_bias),
            ("heads.sts.weight", h.sts_weight), ("heads.sts.bias", h.sts_bias),
            ("heads.cross_attn", h.cross_attn),
            ("adaptive.alpha", self.adaptive_alpha),
            ("adaptive.beta", self.adaptive_beta),
        ]
        return out

    def zero_grads(self) -> None:
        for _, t in self.named_parameters():
            t.grad = None

    def copy(self) -> "ModelParams":
        def c(t: Tensor) -> Tensor:
            return t.copy()

        return ModelParams(
            token_embeddings=c(self.token_embeddings),
            position_embeddings=c(self.position_embeddings),
            emb_ln_gamma=c(self.emb_ln_gamma),
            emb_ln_beta=c(self.emb_ln_beta),
            layers=[LayerParams(**{k: c(getattr(lp, k)) for k in lp.__dataclass_fields__})
                    for lp in self.layers],
            pooler_weight=c(self.pooler_weight),
            pooler_bias=c(self.pooler_bias),
            heads=HeadParams(**{k: c(getattr(self.heads, k))
                                for k in self.heads.__dataclass_fields__}),
            adaptive_alpha=c(self.adaptive_alpha),
            adaptive_beta=c(self.adaptive_beta),
        )


class EncodeResult(NamedTuple):
    sequence: Tensor  # [B, T, d]
    pooled: Tensor    # [B, d]


def init_params(config: EncoderConfig, rng: Rng) -> ModelParams:
    """Weights ~ N(0, 0.02), biases zero, layer-norm gamma=1 beta=0.

    The draw order is fixed (embeddings, layers in order, pooler, heads) so a
    seed pins every weight.
    """
    d, ffn = config.hidden_dim, config.ffn_dim

    def w(*shape):
        return Tensor(rng.normal(shape, std=0.02), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    layers = []
    token_emb = w(config.vocab_size, d)
    pos_emb = w(config.max_seq_len, d)
    for _ in range(config.num_layers):
        layers.append(LayerParams(
            wq=w(d, d), bq=zeros(d), wk=w(d, d), bk=zeros(d),
            wv=w(d, d), bv=zeros(d), wo=w(d, d), bo=zeros(d),
            ln1_gamma=ones(d), ln1_beta=zeros(d),
            ffn_w1=w(d, ffn), ffn_b1=zeros(ffn),
            ffn_w2=w(ffn, d), ffn_b2=zeros(d),
            ln2_gamma=ones(d), ln2_beta=zeros(d),
        ))
    return ModelParams(
        token_embeddings=token_emb,
        position_embeddings=pos_emb,
        emb_ln_gamma=ones(d), emb_ln_beta=zeros(d),
        layers=layers,
        pooler_weight=w(d, d), pooler_bias=zeros(d),
        heads=init_head_params(d, config.para_features, rng),
        adaptive_alpha=Tensor(config.dropout.alpha, requires_grad=True),
        adaptive_beta=Tensor(config.dropout.beta, requires_grad=True),
    )


def parameter_count(params: ModelParams) -> int:
    return sum(t.size for _, t in params.named_parameters())


def _site_dropout(x: Tensor, params: ModelParams, config: EncoderConfig,
                  mode: str, step: int, rng: Rng | None) -> Tensor:
    return apply_dropout(x, config.dropout, mode, step, rng,
                         alpha=params.adaptive_alpha, beta=params.adaptive_beta)


def embed(token_ids, params: ModelParams, config: EncoderConfig,
          mode: str = "eval", step: int = 0, rng: Rng | None = None) -> Tensor:
    """Token plus position embeddings, layer-normed, then dropout."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ag.ShapeMismatchError(f"token ids must be [B, T], got {list(ids.shape)}")
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        bad = int(ids.min()) if ids.min() < 0 else int(ids.max())
        raise ValueError(f"token id {bad} out of range for vocab size {config.vocab_size}")
    t = ids.shape[1]
    if t > config.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max_seq_len {config.max_seq_len}")
    tok = embedding(params.token_embeddings, ids)
    pos = embedding(params.position_embeddings, np.arange(t)).reshape(1, t, config.hidden_dim)
    h = layer_norm(tok + pos, params.emb_ln_gamma, params.emb_ln_beta)
    return _site_dropout(h, params, config, mode, step, rng)


def multi_head_attention(hidden: Tensor, mask, layer: LayerParams, num_heads: int,
                         dropout_fn=None, return_weights: bool = False):
    """Scaled dot-product self-attention with residual add and layer norm.

    mask is a [B, T] 0/1 array; masked key positions get a -1e9 additive
    score, which underflows to exactly zero attention weight after softmax.
    """
    b, t, d = hidden.shape
    if d % num_heads != 0:
        raise ag.ShapeMismatchError(f"hidden dim {d} not divisible by {num_heads} heads")
    hd = d // num_heads
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (b, t):
        raise ag.ShapeMismatchError(
            f"attention mask shape {list(mask.shape)} != [{b}, {t}]")

    def split_heads(x):
        return x.reshape(b, t, num_heads, hd).transpose(0, 2, 1, 3)

    q = split_heads(matmul(hidden, layer.wq) + layer.bq)
    k = split_heads(matmul(hidden, layer.wk) + layer.bk)
    v = split_heads(matmul(hidden, layer.wv) + layer.bv)

    scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(hd))
    scores = scores + Tensor((mask - 1.0).reshape(b, 1, 1, t) * 1e9)
    weights = softmax(scores)                       # [B, H, T, T]
    ctx = matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, t, d)
    out = matmul(ctx, layer.wo) + layer.bo
    if dropout_fn is not None:
        out = dropout_fn(out)
    result = layer_norm(hidden + out, layer.ln1_gamma, layer.ln1_beta)
    if return_weights:
        return result, weights
    return result


def encode(token_ids, mask, params: ModelParams, config: EncoderConfig,
           mode: str = "eval", step: int = 0, rng: Rng | None = None) -> EncodeResult:
    """Full encoder pass: embeddings, num_layers transformer blocks, pooling.

    Eval mode is a pure function of (token_ids, mask, params); train mode
    consumes the rng at every dropout site.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    h = embed(token_ids, params, config, mode=mode, step=step, rng=rng)
    mask = np.asarray(mask, dtype=np.float64)

    def site(x):
        return _site_dropout(x, params, config, mode, step, rng)

    for lp in params.layers:
        h = multi_head_attention(h, mask, lp, config.num_heads, dropout_fn=site)
        f = matmul(ag.gelu(matmul(h, lp.ffn_w1) + lp.ffn_b1), lp.ffn_w2) + lp.ffn_b2
        h = layer_norm(h + site(f), lp.ln2_gamma, lp.ln2_beta)

    if config.pooling == "cls_tanh":
        pooled = ag.tanh(matmul(h[:, 0, :], params.pooler_weight) + params.pooler_bias)
    else:
        weighted = (h * Tensor(mask[:, :, None])).sum(axis=1)
        pooled = weighted / Tensor(mask.sum(axis=1, keepdims=True))
    return EncodeResult(sequence=h, pooled=pooled)
