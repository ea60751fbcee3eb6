"""Tokenization, vocabulary, TSV dataset I/O, batching, and toy-corpus synthesis.

Four dataset shapes, one per task family: classification (sentence, 5-way
label), labeled pairs (duplicate yes/no), scored pairs (0-5 similarity), and
triplets (sentence, paraphrase, contradiction). Files are UTF-8 TSV with a
header row; embedded tabs/newlines survive via standard csv quoting.

The synthetic corpora are built from small word pools so that every label is
a known function of the text (class = marker-word pool, similarity = content
-word overlap, triplet positive = reordering). Tests lean on that ground
truth instead of real SST/Quora/STS data.
"""

from __future__ import annotations

import csv
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Rng

logger = logging.getLogger("simcse_forge.data")

PAD_ID, CLS_ID, SEP_ID, UNK_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("[PAD]", "[CLS]", "[SEP]", "[UNK]")

SCHEMAS = {
    "classification": ("id", "sentence", "label"),
    "pair_labeled": ("id", "sentence1", "sentence2", "is_duplicate"),
    "pair_scored": ("id", "sentence1", "sentence2", "similarity"),
    "triplet": ("sent0", "sent1", "hard_neg"),
}

_WORD_RE = re.compile(r"\w+|[^\w\s]")


class DataError(ValueError):
    """Malformed dataset file or row; message carries path/line context."""


def split_words(text: str) -> list[str]:
    """Lowercase and split on word/punctuation boundaries."""
    return _WORD_RE.findall(text.lower())


@dataclass
class Vocab:
    """Token-to-id map with four reserved ids below the corpus tokens."""

    token_to_id: dict[str, int] = field(default_factory=dict)

    @classmethod
    def build(cls, sentences, min_count: int = 1) -> "Vocab":
        counts = Counter()
        for s in sentences:
            counts.update(split_words(s))
        # frequency order, ties alphabetical: deterministic ids
        tokens = sorted((t for t, c in counts.items() if c >= min_count),
                        key=lambda t: (-counts[t], t))
        return cls({t: i + len(RESERVED_TOKENS) for i, t in enumerate(tokens)})

    def __len__(self) -> int:
        return len(self.token_to_id) + len(RESERVED_TOKENS)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def tokens(self) -> list[str]:
        """Corpus tokens in id order (reserved ids excluded)."""
        return sorted(self.token_to_id, key=self.token_to_id.get)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens()),
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.from_tokens(lines)

    @classmethod
    def from_tokens(cls, tokens) -> "Vocab":
        vocab = cls({t: i + len(RESERVED_TOKENS) for i, t in enumerate(tokens)})
        if len(vocab.token_to_id) != len(tokens):
            raise DataError("vocab token list contains duplicates")
        return vocab


def tokenize(text: str, vocab: Vocab, max_len: int = 64) -> list[int]:
    """[CLS] word-ids [SEP], unknown words to [UNK], truncated to max_len."""
    ids = [vocab.id_of(w) for w in split_words(text)]
    return [CLS_ID] + ids[:max_len - 2] + [SEP_ID]


# -- examples -------------------------------------------------------------------

@dataclass
class Classification:
    guid: str
    text: str
    tokens: list[int]
    label: int

    def __post_init__(self):
        if not 0 <= self.label <= 4:
            raise DataError(f"label {self.label} outside 0..4")

    def to_row(self) -> tuple[str, ...]:
        return (self.guid, self.text, str(self.label))


@dataclass
class PairLabeled:
    guid: str
    text_a: str
    text_b: str
    tokens_a: list[int]
    tokens_b: list[int]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"is_duplicate {self.label} not in {{0, 1}}")

    def to_row(self) -> tuple[str, ...]:
        return (self.guid, self.text_a, self.text_b, str(self.label))


@dataclass
class PairScored:
    guid: str
    text_a: str
    text_b: str
    tokens_a: list[int]
    tokens_b: list[int]
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 5.0:
            raise DataError(f"similarity {self.score} outside [0, 5]")

    def to_row(self) -> tuple[str, ...]:
        return (self.guid, self.text_a, self.text_b, repr(self.score))


@dataclass
class Triplet:
    text: str
    text_pos: str
    text_neg: str
    tokens: list[int]
    tokens_pos: list[int]
    tokens_neg: list[int]

    def to_row(self) -> tuple[str, ...]:
        return (self.text, self.text_pos, self.text_neg)


EXAMPLE_TYPES = {
    "classification": Classification,
    "pair_labeled": PairLabeled,
    "pair_scored": PairScored,
    "triplet": Triplet,
}


def _parse_row(schema: str, row: tuple[str, ...], vocab: Vocab, max_len: int):
    def tok(s):
        return tokenize(s, vocab, max_len)

    if schema == "classification":
        guid, text, label = row
        return Classification(guid, text, tok(text), int(label))
    if schema == "pair_labeled":
        guid, a, b, dup = row
        return PairLabeled(guid, a, b, tok(a), tok(b), int(dup))
    if schema == "pair_scored":
        guid, a, b, score = row
        return PairScored(guid, a, b, tok(a), tok(b), float(score))
    a, b, c = row
    return Triplet(a, b, c, tok(a), tok(b), tok(c))


def read_rows(path, schema: str, strict: bool = True) -> list[tuple[str, ...]]:
    """Raw TSV rows (header validated and dropped)."""
    if schema not in SCHEMAS:
        raise DataError(f"unknown schema {schema!r}, expected one of {sorted(SCHEMAS)}")
    p = Path(path)
    if not p.exists():
        raise DataError(f"dataset file not found: {p}")
    columns = SCHEMAS[schema]
    rows: list[tuple[str, ...]] = []
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t", quotechar='"')
        header = next(reader, None)
        if header is None or tuple(header) != columns:
            raise DataError(
                f"{p}: expected header {list(columns)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                msg = (f"{p}:{line_no}: expected {len(columns)} columns, "
                       f"got {len(row)}")
                if strict:
                    raise DataError(msg)
                logger.warning("%s (row skipped)", msg)
                continue
            rows.append(tuple(row))
    return rows


def load_tsv(path, schema: str, vocab: Vocab, max_len: int = 64,
             strict: bool = True) -> list:
    """Parse and tokenize a dataset file into Example objects."""
    examples = []
    for line_no, row in enumerate(read_rows(path, schema, strict), start=2):
        try:
            examples.append(_parse_row(schema, row, vocab, max_len))
        except (DataError, ValueError) as exc:
            msg = f"{Path(path)}:{line_no}: {exc}"
            if strict:
                raise DataError(msg) from None
            logger.warning("%s (row skipped)", msg)
    return examples


def write_tsv(path, schema: str, rows) -> None:
    """Write rows (tuples of strings) under the schema's header."""
    if schema not in SCHEMAS:
        raise DataError(f"unknown schema {schema!r}, expected one of {sorted(SCHEMAS)}")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", quotechar='"', lineterminator="\n")
        writer.writerow(SCHEMAS[schema])
        writer.writerows(rows)


def examples_from_rows(rows, schema: str, vocab: Vocab, max_len: int = 64) -> list:
    """Tokenize already-parsed rows (e.g. synth_toy_corpus output) in memory."""
    if schema not in SCHEMAS:
        raise DataError(f"unknown schema {schema!r}, expected one of {sorted(SCHEMAS)}")
    return [_parse_row(schema, tuple(row), vocab, max_len) for row in rows]


def texts_of_rows(rows, schema: str) -> list[str]:
    """The text columns of raw rows, flattened (for vocabulary building)."""
    if schema == "classification":
        return [r[1] for r in rows]
    if schema in ("pair_labeled", "pair_scored"):
        return [t for r in rows for t in (r[1], r[2])]
    if schema == "triplet":
        return [t for r in rows for t in r]
    raise DataError(f"unknown schema {schema!r}, expected one of {sorted(SCHEMAS)}")


def sentences_of(examples) -> list[str]:
    """Every sentence string occurring in the examples, in order, deduplicated."""
    out, seen = [], set()
    for ex in examples:
        if isinstance(ex, Classification):
            texts = (ex.text,)
        elif isinstance(ex, (PairLabeled, PairScored)):
            texts = (ex.text_a, ex.text_b)
        else:
            texts = (ex.text, ex.text_pos, ex.text_neg)
        for t in texts:
            if t not in seen:
                seen.add(t)
                out.append(t)
    return out


# -- batching -------------------------------------------------------------------

@dataclass
class Batch:
    """One padded mini-batch; optional second/third sequence groups and
    labels/scores depending on the example variant."""

    token_ids: np.ndarray            # [B, T]
    mask: np.ndarray                 # [B, T]
    b_ids: np.ndarray | None = None
    b_mask: np.ndarray | None = None
    c_ids: np.ndarray | None = None
    c_mask: np.ndarray | None = None
    labels: np.ndarray | None = None
    scores: np.ndarray | None = None
    guids: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def pad_batch(token_lists) -> tuple[np.ndarray, np.ndarray]:
    """Pad variable-length id lists into [B, T] ids + 0/1 mask (pad id 0)."""
    b = len(token_lists)
    t = max(len(ts) for ts in token_lists)
    ids = np.zeros((b, t), dtype=np.int64)
    mask = np.zeros((b, t), dtype=np.float64)
    for i, ts in enumerate(token_lists):
        ids[i, :len(ts)] = ts
        mask[i, :len(ts)] = 1.0
    return ids, mask


def make_batches(examples, batch_size: int, rng: Rng | None = None,
                 shuffle: bool = False) -> list[Batch]:
    """Chunk examples into padded batches; optional Fisher-Yates shuffle first.

    The last batch may be short. All examples must share one variant.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not examples:
        return []
    kind = type(examples[0])
    if any(type(e) is not kind for e in examples):
        raise DataError("mixed example variants in one dataset")
    order = list(examples)
    if shuffle:
        if rng is None:
            raise ValueError("shuffle=True needs an rng")
        rng.shuffle(order)

    batches = []
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        if kind is Classification:
            ids, mask = pad_batch([e.tokens for e in chunk])
            batches.append(Batch(ids, mask,
                                 labels=np.array([e.label for e in chunk]),
                                 guids=tuple(e.guid for e in chunk)))
        elif kind is PairLabeled:
            ids, mask = pad_batch([e.tokens_a for e in chunk])
            b_ids, b_mask = pad_batch([e.tokens_b for e in chunk])
            batches.append(Batch(ids, mask, b_ids, b_mask,
                                 labels=np.array([e.label for e in chunk]),
                                 guids=tuple(e.guid for e in chunk)))
        elif kind is PairScored:
            ids, mask = pad_batch([e.tokens_a for e in chunk])
            b_ids, b_mask = pad_batch([e.tokens_b for e in chunk])
            batches.append(Batch(ids, mask, b_ids, b_mask,
                                 scores=np.array([e.score for e in chunk]),
                                 guids=tuple(e.guid for e in chunk)))
        else:
            ids, mask = pad_batch([e.tokens for e in chunk])
            b_ids, b_mask = pad_batch([e.tokens_pos for e in chunk])
            c_ids, c_mask = pad_batch([e.tokens_neg for e in chunk])
            batches.append(Batch(ids, mask, b_ids, b_mask, c_ids, c_mask))
    return batches


# -- synthetic corpora -------------------------------------------------------------

_FILLERS = ("the", "a", "this", "that", "one")
_CLASS_POOLS = (
    ("dreadful", "awful", "atrocious", "abysmal", "horrid", "wretched"),
    ("bad", "weak", "dull", "flawed", "tedious", "clumsy"),
    ("plain", "fine", "okay", "average", "middling", "routine"),
    ("good", "solid", "nice", "crisp", "warm", "smart"),
    ("great", "superb", "splendid", "stellar", "dazzling", "glorious"),
)
_CONTENT_POOL = (
    "dog", "cat", "bird", "horse", "sailor", "river", "garden", "market",
    "moon", "train", "letter", "child", "teacher", "storm", "bridge",
    "apple", "stone", "harbor", "candle", "meadow", "lantern", "violin",
    "thunder", "basket", "willow", "clock", "mirror", "ladder", "anchor",
    "ribbon", "saddle", "kettle", "hammer", "engine", "pillow", "barrel",
    "canyon", "feather", "magnet", "tunnel",
)


def _pick(rng: Rng, pool, k: int, exclude=()) -> list[str]:
    """k distinct words from pool, skipping exclude, order by draw."""
    avail = [w for w in pool if w not in exclude]
    if k > len(avail):
        raise ValueError("word pool exhausted")
    rng.shuffle(avail)
    return avail[:k]


def _sentence(words) -> str:
    return " ".join(words)


def synth_toy_corpus(kind: str, size: int, rng: Rng) -> list[tuple[str, ...]]:
    """Schema-shaped raw rows with labels that are pure functions of the text.

    classification: label c marks two words from class pool c plus neutral
    content words. pair_scored: similarity = number of shared content words
    (five per sentence, so scores live in 0..5). pair_labeled: duplicates
    share all five content words (reordered); negatives share at most one.
    triplet: positive is a reordering of the anchor; negative uses disjoint
    words, so a bag-of-words embedding ranks pos above neg.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    rows: list[tuple[str, ...]] = []
    if kind == "sst":
        for i in range(size):
            label = int(rng.uniform() * 5)
            markers = _pick(rng, _CLASS_POOLS[label], 2)
            content = _pick(rng, _CONTENT_POOL, 2)
            filler = _pick(rng, _FILLERS, 1)
            words = [filler[0], content[0], markers[0], markers[1], content[1]]
            rows.append((f"sst-{i:04d}", _sentence(words), str(label)))
    elif kind == "sts":
        for i in range(size):
            overlap = int(rng.uniform() * 6)
            a = _pick(rng, _CONTENT_POOL, 5)
            shared = a[:overlap]
            fresh = _pick(rng, _CONTENT_POOL, 5 - overlap, exclude=a)
            b = shared + fresh
            rng.shuffle(b)
            rows.append((f"sts-{i:04d}", _sentence(a), _sentence(b),
                         repr(float(overlap))))
    elif kind == "paraphrase":
        for i in range(size):
            dup = int(rng.uniform() * 2)
            a = _pick(rng, _CONTENT_POOL, 5)
            if dup:
                b = list(a)
                rng.shuffle(b)
            else:
                keep = int(rng.uniform() * 2)      # 0 or 1 shared words
                b = a[:keep] + _pick(rng, _CONTENT_POOL, 5 - keep, exclude=a)
                rng.shuffle(b)
            rows.append((f"para-{i:04d}", _sentence(a), _sentence(b), str(dup)))
    elif kind == "nli":
        for i in range(size):
            a = _pick(rng, _CONTENT_POOL, 5)
            pos = list(a)
            rng.shuffle(pos)
            neg = _pick(rng, _CONTENT_POOL, 5, exclude=a)
            rows.append((_sentence(a), _sentence(pos), _sentence(neg)))
    else:
        raise ValueError(f"unknown corpus kind {kind!r}, "
                         "expected sst | sts | paraphrase | nli")
    return rows


SYNTH_SCHEMAS = {"sst": "classification", "sts": "pair_scored",
                 "paraphrase": "pair_labeled", "nli": "triplet"}
