"""Run configuration: one JSON file, dotted CLI overrides, environment seed.

The file is a nested object with sections (encoder, dropout, optim, train,
data, two_tier) plus top-level seed/out. Every key is checked against the
section's fields, so typos fail loudly before any work starts. Overrides
use dotted paths (``--optim.lr 3e-5``); values parse as JSON with a string
fallback. Seed precedence: --seed flag > config file > SIMCSE_FORGE_SEED
environment variable > 0.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dropout import DropoutPolicy
from .encoder import EncoderConfig
from .training import TrainConfig, TwoTierConfig

ENV_SEED = "SIMCSE_FORGE_SEED"


class ConfigError(ValueError):
    """Unparseable, unknown-key, or invalid-value configuration."""


@dataclass
class EncoderSettings:
    hidden_dim: int = 32
    num_layers: int = 4
    num_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 64
    pooling: str = "cls_tanh"
    para_features: str = "rich"


@dataclass
class OptimSettings:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: float | None = None


@dataclass
class TrainSettings:
    task: str = "sst"
    epochs: int = 10
    batch_size: int = 8
    sts_head: str = "cos_sigmoid"
    sst_loss: str = "bce"
    tau: float = 0.05
    eval_every: int = 0


@dataclass
class DataSettings:
    train: str | None = None
    dev: str | None = None
    sst_train: str | None = None
    sst_dev: str | None = None
    para_train: str | None = None
    para_dev: str | None = None
    sts_train: str | None = None
    sts_dev: str | None = None
    nli: str | None = None
    sentences: str | None = None
    vocab: str | None = None
    checkpoint: str | None = None
    min_count: int = 1


@dataclass
class TwoTierSettings:
    stage2_epochs: int = 1
    stage2_batch_size: int = 64
    stage2_lr: float = 3e-5
    stage2_dropout_p: float = 0.1
    stage3_epochs: int = 5
    stage3_batch_size: int = 24
    stage3_lr: float = 5e-5
    stage3_dropout_p: float = 0.1
    skip_unsup: bool = False
    extra_sts_finetune: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    out: str | None = None
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    dropout: DropoutPolicy = field(
        default_factory=lambda: DropoutPolicy(kind="standard", p=0.3))
    optim: OptimSettings = field(default_factory=OptimSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    data: DataSettings = field(default_factory=DataSettings)
    two_tier: TwoTierSettings = field(default_factory=TwoTierSettings)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        e = self.encoder
        return EncoderConfig(vocab_size=vocab_size, hidden_dim=e.hidden_dim,
                             num_layers=e.num_layers, num_heads=e.num_heads,
                             ffn_dim=e.ffn_dim, max_seq_len=e.max_seq_len,
                             dropout=self.dropout, pooling=e.pooling,
                             para_features=e.para_features)

    def train_config(self, **kw) -> TrainConfig:
        o, t = self.optim, self.train
        base = dict(task=t.task, epochs=t.epochs, batch_size=t.batch_size,
                    lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps,
                    weight_decay=o.weight_decay, clip_norm=o.clip_norm,
                    sts_head=t.sts_head, sst_loss=t.sst_loss, tau=t.tau,
                    eval_every=t.eval_every, seed=self.seed)
        base.update(kw)
        return TrainConfig(**base)

    def two_tier_config(self) -> TwoTierConfig:
        tt = self.two_tier
        return TwoTierConfig(
            stage1=self.train_config(task="sts"),
            stage2=self.train_config(task="sts", epochs=tt.stage2_epochs,
                                     batch_size=tt.stage2_batch_size,
                                     lr=tt.stage2_lr,
                                     dropout_p=tt.stage2_dropout_p),
            stage3=self.train_config(task="sts", epochs=tt.stage3_epochs,
                                     batch_size=tt.stage3_batch_size,
                                     lr=tt.stage3_lr,
                                     dropout_p=tt.stage3_dropout_p),
            skip_unsup=tt.skip_unsup,
            extra_sts_finetune=tt.extra_sts_finetune)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "RunConfig":
        """Force every derived config's own validation before any work."""
        try:
            self.train_config().optim()
            self.two_tier_config()
            self.encoder_config(vocab_size=8)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        return self


_SECTIONS = {"encoder": EncoderSettings, "dropout": DropoutPolicy,
             "optim": OptimSettings, "train": TrainSettings,
             "data": DataSettings, "two_tier": TwoTierSettings}


def _build_section(cls, raw: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{where}': {exc}") from None


def run_config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    parts = {}
    for name, cls in _SECTIONS.items():
        raw = d.pop(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"section '{name}' must be an object")
        parts[name] = _build_section(cls, raw, name)
    unknown = set(d) - {"seed", "out"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    return RunConfig(seed=d.get("seed", 0), out=d.get("out"), **parts)


def parse_override_value(raw: str):
    """JSON when it parses ('3e-5', 'true', 'null'), bare string otherwise."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(d: dict, overrides) -> None:
    """Set dotted paths into the raw config dict, creating sections as needed."""
    for path, raw in overrides:
        parts = path.split(".")
        if not all(parts):
            raise ConfigError(f"bad override path {path!r}")
        node = d
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a non-section")
        node[parts[-1]] = parse_override_value(raw)


def load_run_config(path=None, overrides=(), seed_flag: int | None = None,
                    env=os.environ) -> RunConfig:
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            d = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{p}: top level must be a JSON object")
    else:
        d = {}
    apply_overrides(d, overrides)
    config = run_config_from_dict(d)
    if seed_flag is not None:
        config.seed = seed_flag
    elif "seed" not in d and ENV_SEED in env:
        try:
            config.seed = int(env[ENV_SEED])
        except ValueError:
            raise ConfigError(
                f"{ENV_SEED} must be an integer, got {env[ENV_SEED]!r}") from None
    return config.validate()


def config_hash(config: RunConfig) -> str:
    """Eight hex chars identifying the full configuration (seed included)."""
    canonical = json.dumps(config.to_dict(), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:8]
