"""Dropout regimes: standard inverted dropout, a curriculum schedule that
ramps the rate up from zero, and activation-conditioned (standout-style)
adaptive dropout.

All three sit behind ``apply_dropout``, which the encoder calls at every
dropout site. Train-mode masks come from the caller's Rng stream, so two
consecutive calls on the same input draw different masks; that difference is
the data augmentation the unsupervised contrastive objective relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .rng import Rng

KINDS = ("standard", "curriculum", "adaptive")


@dataclass
class DropoutPolicy:
    """Which regime to run and its parameters.

    p is the base drop probability (the target rate for curriculum). gamma
    and total_steps shape the curriculum ramp; alpha and beta are the initial
    values of the adaptive regime's learnable affine scalars.
    """

    kind: str = "standard"
    p: float = 0.3
    gamma: float = 5.0
    alpha: float = 0.0
    beta: float = 0.0
    total_steps: int = 1000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dropout kind {self.kind!r}, expected one of {KINDS}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"dropout p must be in [0, 1), got {self.p}")
        if self.kind == "curriculum":
            if self.gamma <= 0:
                raise ValueError("curriculum gamma must be positive")
            if self.total_steps < 1:
                raise ValueError("curriculum total_steps must be positive")


@dataclass
class MaskRecord:
    """One sampled mask, kept around so tests can inspect what was dropped."""

    mask: np.ndarray
    keep_prob_per_unit: np.ndarray
    step: int = 0

    def __post_init__(self):
        assert self.mask.shape == self.keep_prob_per_unit.shape


def standard_dropout(x: Tensor, p: float, mode: str, rng: Rng | None,
                     recorder: list | None = None, step: int = 0) -> Tensor:
    """Inverted dropout: zero each unit with probability p, scale survivors
    by 1/(1-p) so the expected output equals the input. Identity in eval mode.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout p must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = 1.0 - p
    mask = rng.bernoulli(keep, x.shape)
    if recorder is not None:
        recorder.append(MaskRecord(mask.reshape(-1).copy(),
                                   np.full(x.size, keep), step))
    return x * Tensor(mask / keep)


def curriculum_rate(step: int, policy: DropoutPolicy) -> float:
    """Scheduled rate p(step) = p * (1 - exp(-gamma * step / total_steps)).

    Starts at zero, grows monotonically, saturates at policy.p.
    """
    if step < 0:
        raise ValueError("step must be non-negative")
    return policy.p * (1.0 - float(np.exp(-policy.gamma * step / policy.total_steps)))


def curriculum_dropout(x: Tensor, step: int, policy: DropoutPolicy, mode: str,
                       rng: Rng | None, recorder: list | None = None) -> Tensor:
    return standard_dropout(x, curriculum_rate(step, policy), mode, rng,
                            recorder=recorder, step=step)


def adaptive_dropout(x: Tensor, activations: Tensor, policy: DropoutPolicy,
                     mode: str, rng: Rng | None,
                     alpha: Tensor | None = None, beta: Tensor | None = None,
                     recorder: list | None = None, step: int = 0) -> Tensor:
    """Standout-style dropout: keep probability pi_j = sigmoid(alpha*a_j + beta)
    per unit, from that unit's pre-dropout activation a_j.

    Train mode samples Bernoulli(pi) masks with no 1/pi rescaling. Eval mode
    multiplies by pi, the mask's expectation, because pi is input-dependent
    and there is no single rescaling constant. alpha and beta are learnable;
    in train mode they receive straight-through gradients, i.e. the backward
    pass treats the op as x*pi while the forward value uses the sampled mask.
    """
    if alpha is None:
        alpha = Tensor(policy.alpha)
    if beta is None:
        beta = Tensor(policy.beta)
    pi = ag.sigmoid(alpha * activations + beta)
    if mode == "eval":
        return x * pi
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = rng.bernoulli(pi.data, x.shape)
    if recorder is not None:
        recorder.append(MaskRecord(mask.reshape(-1).copy(),
                                   pi.data.reshape(-1).copy(), step))
    # value: x*mask; gradient: as if the op were x*pi (the mask's expectation)
    return x * Tensor(mask) + x * (pi - pi.detach())


def apply_dropout(x: Tensor, policy: DropoutPolicy, mode: str, step: int,
                  rng: Rng | None, alpha: Tensor | None = None,
                  beta: Tensor | None = None, recorder: list | None = None) -> Tensor:
    """Dispatch one dropout site through the configured regime."""
    if policy.kind == "standard":
        return standard_dropout(x, policy.p, mode, rng, recorder=recorder, step=step)
    if policy.kind == "curriculum":
        return curriculum_dropout(x, step, policy, mode, rng, recorder=recorder)
    return adaptive_dropout(x, x, policy, mode, rng, alpha=alpha, beta=beta,
                            recorder=recorder, step=step)
