"""Synthetic paired corpora with a controllable surface-form shift, plus
CoNLL-style and two-column TSV loaders.

A latent generative process fixes label-bearing byte patterns once per
seed. The source language surfaces latent bytes through the identity map;
the target language applies a fixed-point-free permutation to a
ceil(shift * V) subset of the usable vocabulary. Labels depend only on
latents, so the two languages share task semantics and diverge in surface
form exactly in proportion to the shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, ParseError

TOKEN_LABELING = "token_labeling"
SEQUENCE_CLASSIFICATION = "sequence_classification"


@dataclass(frozen=True)
class SyntheticTaskSpec:
    task_kind: str = TOKEN_LABELING
    vocab_low: int = 32
    vocab_high: int = 126
    n_labels: int = 5
    seq_len: tuple[int, int] = (8, 16)
    entity_rate: float = 0.22
    sentiment_token_rate: float = 0.25
    shift: float = 0.5
    sizes: tuple[int, int, int, int] = (5000, 100, 200, 400)
    seed: int = 0
    entity_pool_bytes: int = 4     # marker bytes per entity type / class
    patterns_per_type: int = 0     # 0 = free combinations over the pool

    def __post_init__(self):
        if not 0.0 <= self.shift <= 1.0:
            raise ContractError("shift must be in [0, 1]")
        if any(s <= 0 for s in self.sizes):
            raise ContractError("all split sizes must be positive")
        if not 0 <= self.vocab_low <= self.vocab_high <= 255:
            raise ContractError("vocab range must lie within [0, 255]")
        if self.task_kind not in (TOKEN_LABELING, SEQUENCE_CLASSIFICATION):
            raise ContractError(f"unknown task_kind {self.task_kind!r}")
        if self.seq_len[0] < 1 or self.seq_len[0] > self.seq_len[1]:
            raise ContractError("invalid seq_len range")
        n_pools = max(1, (self.n_labels - 1) // 2) if self.task_kind == TOKEN_LABELING else 2
        need = n_pools * self.entity_pool_bytes + 8
        if self.vocab_high - self.vocab_low + 1 < need:
            raise ContractError(
                f"vocab of {self.vocab_high - self.vocab_low + 1} bytes too small: "
                f"{n_pools} marker pools of {self.entity_pool_bytes} need >= {need}"
            )

    @property
    def vocab(self) -> np.ndarray:
        return np.arange(self.vocab_low, self.vocab_high + 1)


@dataclass
class Dataset:
    examples: list            # [(token byte array, labels array)] or [(tokens, int)]
    role: str                 # "source" | "target"
    task_kind: str
    n_labels: int
    tag_names: Optional[list[str]] = None
    repairs: int = 0

    def __len__(self) -> int:
        return len(self.examples)


# ---------------------------------------------------------------------------
# latent process

class _LatentTask:
    """Byte patterns that carry labels; fixed once per spec seed."""

    def __init__(self, spec: SyntheticTaskSpec, rng: np.random.Generator):
        self.spec = spec
        vocab = spec.vocab
        per_pool = spec.entity_pool_bytes
        if spec.task_kind == TOKEN_LABELING:
            n_types = max(1, (spec.n_labels - 1) // 2)
            marked = rng.choice(vocab, size=n_types * per_pool, replace=False)
            self.entity_bytes = [
                np.sort(marked[t * per_pool : (t + 1) * per_pool]) for t in range(n_types)
            ]
            self.background = np.setdiff1d(vocab, marked)
            self.patterns = None
            if spec.patterns_per_type > 0:
                self.patterns = []
                for t in range(n_types):
                    pats = []
                    for _ in range(spec.patterns_per_type):
                        length = int(rng.integers(2, 4))
                        pats.append(rng.choice(self.entity_bytes[t], size=length, replace=True))
                    self.patterns.append(pats)
            self.n_types = n_types
        else:
            if spec.n_labels != 2:
                raise ContractError("sequence_classification supports n_labels=2")
            marked = rng.choice(vocab, size=2 * per_pool, replace=False)
            self.markers = [np.sort(marked[:per_pool]), np.sort(marked[per_pool:])]
            self.background = np.setdiff1d(vocab, marked)

    def sample(self, rng: np.random.Generator):
        spec = self.spec
        lo, hi = spec.seq_len
        length = int(rng.integers(lo, hi + 1))
        if spec.task_kind == TOKEN_LABELING:
            toks: list[int] = []
            labs: list[int] = []
            while len(toks) < length:
                if rng.random() < spec.entity_rate and length - len(toks) >= 2:
                    t = int(rng.integers(self.n_types))
                    if self.patterns is not None:
                        pat = self.patterns[t][int(rng.integers(len(self.patterns[t])))]
                    else:
                        size = int(rng.integers(2, 4))
                        pat = rng.choice(self.entity_bytes[t], size=size, replace=True)
                    pat = pat[: length - len(toks)]
                    toks.extend(int(b) for b in pat)
                    labs.append(1 + 2 * t)
                    labs.extend([2 + 2 * t] * (len(pat) - 1))
                else:
                    toks.append(int(rng.choice(self.background)))
                    labs.append(0)
            return np.array(toks, dtype=np.int64), np.array(labs, dtype=np.int64)
        y = int(rng.integers(2))
        toks = []
        for _ in range(length):
            if rng.random() < spec.sentiment_token_rate:
                toks.append(int(rng.choice(self.markers[y])))
            else:
                toks.append(int(rng.choice(self.background)))
        return np.array(toks, dtype=np.int64), y


def build_mapping(
    spec: SyntheticTaskSpec,
    rng: np.random.Generator,
    marker_pools: Optional[list[np.ndarray]] = None,
) -> np.ndarray:
    """Byte -> byte table (length 256); identity outside the shifted subset.

    Exactly ceil(shift * V) usable bytes are remapped, each to a different
    byte (fixed-point-free cycles). Marker bytes are remapped first, and
    across pools (a marker byte surfaces as a marker of another type), so
    the cross-language divergence is structured the way lexical shifts
    are: the same role is carried by systematically different surface
    forms. Background bytes fill the remainder of the subset and permute
    among themselves.
    """
    table = np.arange(256, dtype=np.int64)
    vocab = spec.vocab
    k = math.ceil(spec.shift * len(vocab))
    if k < 2:
        return table

    if marker_pools:
        marker_all = np.concatenate(marker_pools)
        background = np.setdiff1d(vocab, marker_all)
        k_m = min(k, len(marker_all))
        # round-robin across pools so cycling by one always changes pool
        per_pool = [list(rng.permutation(pool)) for pool in marker_pools]
        interleaved = []
        for i in range(max(len(p) for p in per_pool)):
            for pool in per_pool:
                if i < len(pool):
                    interleaved.append(pool[i])
        chosen_m = np.array(interleaved[:k_m], dtype=np.int64)
        if k_m >= 2:
            table[chosen_m] = np.roll(chosen_m, -1)
        k_b = k - k_m
        if k_b >= 2:
            chosen_b = rng.permutation(rng.choice(background, size=k_b, replace=False))
            table[chosen_b] = np.roll(chosen_b, -1)
    else:
        subset = rng.choice(vocab, size=k, replace=False)
        order = rng.permutation(subset)
        table[order] = np.roll(order, -1)
    return table


def mapping_info(spec: SyntheticTaskSpec, table: np.ndarray) -> dict:
    vocab = spec.vocab
    remapped = int((table[vocab] != vocab).sum())
    return {
        "vocab_low": spec.vocab_low,
        "vocab_high": spec.vocab_high,
        "shift": spec.shift,
        "n_remapped": remapped,
        "overlap": (len(vocab) - remapped) / len(vocab),
        "mapping": {int(b): int(table[b]) for b in vocab},
    }


def surface(tokens: np.ndarray, table: np.ndarray) -> np.ndarray:
    return table[np.asarray(tokens, dtype=np.int64)]


def synthetic_tag_names(n_labels: int) -> list[str]:
    names = ["O"]
    t = 0
    while len(names) < n_labels:
        names.append(f"B-E{t}")
        if len(names) < n_labels:
            names.append(f"I-E{t}")
        t += 1
    return names


def generate_pair(spec: SyntheticTaskSpec) -> tuple[Dataset, dict[str, Dataset], dict]:
    """Build the source corpus and target train/dev/test splits.

    Returns (source dataset, target splits, mapping sidecar info). Fully
    deterministic per spec.
    """
    root = np.random.SeedSequence(entropy=spec.seed, spawn_key=(7,))
    kids = root.spawn(6)
    task = _LatentTask(spec, np.random.default_rng(kids[0]))
    pools = task.entity_bytes if spec.task_kind == TOKEN_LABELING else task.markers
    table = build_mapping(spec, np.random.default_rng(kids[1]), marker_pools=pools)

    tags = synthetic_tag_names(spec.n_labels) if spec.task_kind == TOKEN_LABELING else None

    def emit(n: int, rng: np.random.Generator, table_or_none) -> list:
        out = []
        for _ in range(n):
            toks, labs = task.sample(rng)
            if table_or_none is not None:
                toks = surface(toks, table_or_none)
            out.append((toks, labs))
        return out

    source_n, train_n, dev_n, test_n = spec.sizes
    source = Dataset(
        emit(source_n, np.random.default_rng(kids[2]), None),
        role="source", task_kind=spec.task_kind, n_labels=spec.n_labels, tag_names=tags,
    )
    splits = {}
    for name, n, kid in (("train", train_n, kids[3]), ("dev", dev_n, kids[4]), ("test", test_n, kids[5])):
        splits[name] = Dataset(
            emit(n, np.random.default_rng(kid), table),
            role="target", task_kind=spec.task_kind, n_labels=spec.n_labels, tag_names=tags,
        )
    return source, splits, mapping_info(spec, table)


# ---------------------------------------------------------------------------
# file loaders (CoNLL-style token/tag and two-column TSV)

def _read_text(path) -> str:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read()


def parse_token_labeled(text: str) -> tuple[list[list[tuple[str, str]]], int]:
    """Parse `token<TAB>tag` lines into sentences; repairs stray I- tags.

    Returns (sentences, repair count). An I-X not preceded by B-X/I-X of
    the same type becomes B-X, matching common practice for noisy corpora.
    """
    sentences: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    repairs = 0
    prev_type: Optional[str] = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line == "":
            if current:
                sentences.append(current)
                current = []
            prev_type = None
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ParseError(f"line {lineno}: expected 'token<TAB>tag', got {line!r}")
        token, tag = parts
        if tag == "O":
            prev_type = None
        elif tag.startswith(("B-", "I-")) and len(tag) > 2:
            typ = tag[2:]
            if tag.startswith("I-") and prev_type != typ:
                tag = "B-" + typ
                repairs += 1
            prev_type = typ
        else:
            raise ContractError(
                f"line {lineno}: unknown tag {tag!r}; expected one of "
                "{'O', 'B-<TYPE>', 'I-<TYPE>'}"
            )
        current.append((token, tag))
    if current:
        sentences.append(current)
    if not sentences:
        raise ContractError("empty dataset")
    return sentences, repairs


def _tag_inventory(sentences) -> list[str]:
    types = sorted({tag[2:] for sent in sentences for _, tag in sent if tag != "O"})
    names = ["O"]
    for t in types:
        names.extend([f"B-{t}", f"I-{t}"])
    return names


def encode_token_sentences(
    sentences: list[list[tuple[str, str]]],
    tag_names: list[str],
    role: str,
) -> Dataset:
    """Byte-tokenize words; the word's first byte carries the word tag and
    continuation bytes (and inter-word spaces) are ignored in the loss."""
    index = {t: i for i, t in enumerate(tag_names)}
    examples = []
    for sent in sentences:
        toks: list[int] = []
        labs: list[int] = []
        for w, (word, tag) in enumerate(sent):
            if w > 0:
                toks.append(0x20)
                labs.append(-1)
            data = word.encode("utf-8")
            toks.extend(data)
            labs.append(index[tag])
            labs.extend([-1] * (len(data) - 1))
        examples.append((np.array(toks, dtype=np.int64), np.array(labs, dtype=np.int64)))
    return Dataset(
        examples, role=role, task_kind=TOKEN_LABELING,
        n_labels=len(tag_names), tag_names=tag_names,
    )


def load_token_labeled(path, role: str = "target") -> Dataset:
    sentences, repairs = parse_token_labeled(_read_text(path))
    ds = encode_token_sentences(sentences, _tag_inventory(sentences), role)
    ds.repairs = repairs
    return ds


def serialize_token_labeled(sentences: list[list[tuple[str, str]]]) -> str:
    blocks = ["\n".join(f"{tok}\t{tag}" for tok, tag in sent) for sent in sentences]
    return "\n\n".join(blocks) + "\n"


def parse_sequence_labeled(text: str) -> list[tuple[int, str]]:
    rows = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line == "":
            continue
        label_str, _, body = line.partition("\t")
        try:
            label = int(label_str)
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer label {label_str!r}") from None
        if label not in (0, 1):
            raise ContractError(f"line {lineno}: label must be 0 or 1, got {label}")
        rows.append((label, body))
    if not rows:
        raise ContractError("empty dataset")
    return rows


def load_sequence_labeled(path, role: str = "target") -> Dataset:
    rows = parse_sequence_labeled(_read_text(path))
    examples = [
        (np.frombuffer(body.encode("utf-8"), dtype=np.uint8).astype(np.int64), label)
        for label, body in rows
    ]
    return Dataset(examples, role=role, task_kind=SEQUENCE_CLASSIFICATION, n_labels=2)


def serialize_sequence_labeled(rows: list[tuple[int, str]]) -> str:
    return "\n".join(f"{label}\t{body}" for label, body in rows) + "\n"


def export_dataset(ds: Dataset, path) -> None:
    """Write a dataset back out in its interchange format.

    Token datasets become CoNLL-style text with one printable character per
    byte token (bytes must lie in [33, 126] so the round trip through the
    text format is lossless); classification datasets become
    `label<TAB>text` TSV.
    """
    def check(toks):
        if len(toks) and (toks.min() < 33 or toks.max() > 126):
            raise ContractError("export requires printable byte values in [33, 126]")

    if ds.task_kind == TOKEN_LABELING:
        tags = ds.tag_names or synthetic_tag_names(ds.n_labels)
        sentences = []
        for toks, labs in ds.examples:
            check(toks)
            sentences.append(
                [(chr(int(b)), tags[int(l)] if l >= 0 else "O") for b, l in zip(toks, labs)]
            )
        text = serialize_token_labeled(sentences)
    else:
        rows = []
        for toks, y in ds.examples:
            check(toks)
            rows.append((int(y), "".join(chr(int(b)) for b in toks)))
        text = serialize_sequence_labeled(rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
