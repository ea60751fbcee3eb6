"""Checkpoint serialization.

Binary layout (all integers little-endian):

    bytes 0..3    magic "SCF1"
    bytes 4..7    u32 header length
    header        UTF-8 JSON: format version, stage tag, encoder config,
                  vocab token list, training history, and an array manifest
                  of (name, shape, byte offset into the body)
    body          the named parameter arrays, raw float64 little-endian,
                  in manifest order
    trailer       u32 CRC32 of the body

The JSON header is written with sorted keys and fixed separators, so a
checkpoint's bytes are a pure function of its contents — two identically
seeded runs produce identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dropout import DropoutPolicy
from .encoder import EncoderConfig, ModelParams, init_params
from .rng import Rng

MAGIC = b"SCF1"
FORMAT_VERSION = 1
STAGES = ("baseline", "unsup_simcse", "sup_simcse", "two_tier", "transfer")


class IntegrityError(ValueError):
    """Unreadable, corrupt, truncated, or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    config: EncoderConfig
    params: ModelParams
    stage: str = "baseline"
    history: list[dict] = field(default_factory=list)
    vocab_tokens: list[str] = field(default_factory=list)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}, expected one of {STAGES}")


def config_to_dict(config: EncoderConfig) -> dict:
    return dataclasses.asdict(config)   # recurses into the dropout policy


def config_from_dict(d: dict) -> EncoderConfig:
    d = dict(d)
    dropout = d.pop("dropout", {})
    known = {f.name for f in dataclasses.fields(EncoderConfig)} - {"dropout"}
    unknown = set(d) - known
    if unknown:
        raise IntegrityError(f"unknown encoder config keys {sorted(unknown)}")
    return EncoderConfig(dropout=DropoutPolicy(**dropout), **d)


def params_hash(params: ModelParams) -> str:
    """sha256 over names and raw array bytes; stable across processes."""
    h = hashlib.sha256()
    for name, t in params.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return h.hexdigest()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    body = bytearray()
    manifest = []
    for name, t in ckpt.params.named_parameters():
        raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(t.shape),
                         "offset": len(body)})
        body.extend(raw)
    header = {
        "version": ckpt.version,
        "stage": ckpt.stage,
        "config": config_to_dict(ckpt.config),
        "vocab": list(ckpt.vocab_tokens),
        "history": ckpt.history,
        "arrays": manifest,
        "body_size": len(body),
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        fh.write(bytes(body))
        fh.write(struct.pack("<I", zlib.crc32(bytes(body))))


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise IntegrityError(f"checkpoint not found: {p}")
    blob = p.read_bytes()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise IntegrityError(f"{p}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<I", blob, 4)
    header_end = 8 + header_len
    if len(blob) < header_end + 4:
        raise IntegrityError(f"{p}: truncated header")
    try:
        header = json.loads(blob[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{p}: unreadable header ({exc})") from None

    version = header.get("version")
    if version != FORMAT_VERSION:
        raise IntegrityError(
            f"{p}: format version {version} unsupported (expected {FORMAT_VERSION})")
    body_size = header["body_size"]
    body_end = header_end + body_size
    if len(blob) < body_end + 4:
        raise IntegrityError(f"{p}: truncated body "
                             f"(expected {body_size} bytes)")
    body = blob[header_end:body_end]
    (crc,) = struct.unpack_from("<I", blob, body_end)
    if zlib.crc32(body) != crc:
        raise IntegrityError(f"{p}: body checksum mismatch")

    config = config_from_dict(header["config"])
    params = init_params(config, Rng(0))
    expected = dict(params.named_parameters())
    seen = set()
    for entry in header["arrays"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if name not in expected:
            raise IntegrityError(f"{p}: unexpected array {name!r}")
        target = expected[name]
        if shape != target.shape:
            raise IntegrityError(
                f"{p}: array {name!r} shape {list(shape)} != config shape {list(target.shape)}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 8 * count
        if end > body_size:
            raise IntegrityError(f"{p}: array {name!r} overruns body")
        target.data = np.frombuffer(body[offset:end], dtype="<f8").reshape(shape).copy()
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise IntegrityError(f"{p}: missing arrays {sorted(missing)}")
    return Checkpoint(config=config, params=params, stage=header["stage"],
                      history=header["history"], vocab_tokens=header["vocab"],
                      version=version)
