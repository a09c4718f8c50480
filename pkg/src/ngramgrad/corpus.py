"""Synthetic parallel corpora: generation, vocabulary, batching, file I/O.

Three toy translation tasks stand in for real bilingual data: ``copy``
(target = source), ``reverse`` (target = source reversed), and ``cipher``
(a fixed seeded token bijection followed by swapping each adjacent pair of
positions, so the model must learn both substitution and local reordering).

Sentences are stored as id lists against a vocabulary whose first four ids
are reserved: pad=0, begin=1, end=2, unknown=3.  Reserved tokens never
appear inside generated sentences.  The train/dev/test split is 80/10/10,
decided per pair by a hash of its index, so any corpus splits the same way
every time without side files.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PAD",
    "BOS",
    "EOS",
    "UNK",
    "RESERVED",
    "Vocab",
    "build_vocab",
    "ParallelCorpus",
    "Batch",
    "gen_synthetic",
    "batch_iter",
    "save_corpus",
    "load_corpus",
]

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
TASKS = ("copy", "reverse", "cipher")
MAX_SENTENCE_LEN = 50


class Vocab:
    """String <-> id tables with the four reserved tokens at ids 0..3."""

    def __init__(self, content_tokens):
        self.tokens = list(RESERVED) + list(content_tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def encode(self, words) -> list:
        return [self.token_to_id.get(w, UNK) for w in words]

    def decode(self, ids) -> list:
        return [self.tokens[i] for i in ids]

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        tokens = Path(path).read_text().splitlines()
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError(f"{path}: reserved tokens missing or out of order")
        return cls(tokens[4:])


def build_vocab(sentences, limit: int) -> Vocab:
    """Keep the ``limit`` most frequent word types; the rest map to unknown.

    Frequency ties break lexicographically so the table is reproducible
    regardless of input order.
    """
    freq = Counter()
    for sent in sentences:
        freq.update(sent)
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab([w for w, _ in ranked[:limit]])


def _split_of(index: int) -> str:
    # stable across runs and platforms, unlike the builtin hash
    digest = hashlib.sha256(str(index).encode()).digest()
    bucket = int.from_bytes(digest[:8], "big") % 10
    return "train" if bucket < 8 else ("dev" if bucket == 8 else "test")


@dataclass
class ParallelCorpus:
    """Source/target id-sequence pairs plus their vocabularies."""

    pairs: list
    src_vocab: Vocab
    tgt_vocab: Vocab

    def split(self, name: str) -> list:
        if name not in ("train", "dev", "test"):
            raise ValueError(f"unknown split {name!r}")
        return [p for i, p in enumerate(self.pairs) if _split_of(i) == name]

    def __len__(self):
        return len(self.pairs)


def gen_synthetic(
    task: str, size: int, len_range, vocab_size: int, seed
) -> ParallelCorpus:
    """Generate ``size`` sentence pairs for one of the toy tasks.

    ``vocab_size`` counts the whole table including the four reserved ids,
    so it must be at least 8; ``len_range`` is an inclusive (lo, hi) within
    [1, 50].  ``seed`` may be an int, a SeedSequence, or a Generator; the
    same seed always yields a bit-identical corpus.  For the cipher task
    the token bijection is drawn from the stream first, before any
    sentence, and is therefore fixed per corpus.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    lo, hi = len_range
    if not (1 <= lo <= hi <= MAX_SENTENCE_LEN):
        raise ValueError(
            f"length range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= {MAX_SENTENCE_LEN}"
        )
    if vocab_size < 8:
        raise ValueError(f"vocab_size must be >= 8 (4 reserved + 4 content), got {vocab_size}")
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    content_ids = np.arange(4, vocab_size)
    cipher_map = None
    if task == "cipher":
        cipher_map = dict(zip(content_ids.tolist(), rng.permutation(content_ids).tolist()))

    pairs = []
    for _ in range(size):
        length = int(rng.integers(lo, hi + 1))
        src = [int(t) for t in rng.choice(content_ids, size=length)]
        if task == "copy":
            tgt = list(src)
        elif task == "reverse":
            tgt = src[::-1]
        else:
            tgt = [cipher_map[t] for t in src]
            for i in range(0, len(tgt) - 1, 2):
                tgt[i], tgt[i + 1] = tgt[i + 1], tgt[i]
        pairs.append((src, tgt))

    width = len(str(vocab_size - 1))
    vocab = Vocab([f"w{i:0{width}d}" for i in range(4, vocab_size)])
    return ParallelCorpus(pairs, vocab, vocab)


@dataclass
class Batch:
    """Padded id matrices with the true (unpadded) lengths alongside."""

    src: np.ndarray
    tgt: np.ndarray
    src_lens: np.ndarray
    tgt_lens: np.ndarray

    def __len__(self):
        return self.src.shape[0]

    def sentences(self):
        """Yield (src_ids, tgt_ids) lists with padding stripped."""
        for i in range(len(self)):
            yield (
                self.src[i, : self.src_lens[i]].tolist(),
                self.tgt[i, : self.tgt_lens[i]].tolist(),
            )


def _pad_matrix(seqs) -> tuple[np.ndarray, np.ndarray]:
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), max(1, int(lens.max()))), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lens


def batch_iter(pairs, batch_size: int, seed=None):
    """Yield Batches covering every pair exactly once.

    The final partial batch is emitted.  With ``seed`` given the pair order
    is shuffled deterministically; with ``seed=None`` corpus order is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    pairs = list(pairs)
    order = np.arange(len(pairs))
    if seed is not None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        order = rng.permutation(len(pairs))
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        src, src_lens = _pad_matrix([s for s, _ in chunk])
        tgt, tgt_lens = _pad_matrix([t for _, t in chunk])
        yield Batch(src, tgt, src_lens, tgt_lens)


def save_corpus(corp: ParallelCorpus, directory, stem: str) -> dict:
    """Write parallel text plus vocabulary files; returns the path map.

    Layout: ``<stem>.src`` / ``<stem>.tgt`` hold one space-joined sentence
    per line; ``<stem>.src.vocab`` / ``<stem>.tgt.vocab`` hold one token per
    line with the line number as id, reserved tokens first.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "src": directory / f"{stem}.src",
        "tgt": directory / f"{stem}.tgt",
        "src_vocab": directory / f"{stem}.src.vocab",
        "tgt_vocab": directory / f"{stem}.tgt.vocab",
    }
    with open(paths["src"], "w") as fs, open(paths["tgt"], "w") as ft:
        for src, tgt in corp.pairs:
            fs.write(" ".join(corp.src_vocab.decode(src)) + "\n")
            ft.write(" ".join(corp.tgt_vocab.decode(tgt)) + "\n")
    corp.src_vocab.save(paths["src_vocab"])
    corp.tgt_vocab.save(paths["tgt_vocab"])
    return {k: str(v) for k, v in paths.items()}


def load_corpus(directory, stem: str) -> ParallelCorpus:
    directory = Path(directory)
    src_vocab = Vocab.load(directory / f"{stem}.src.vocab")
    tgt_vocab = Vocab.load(directory / f"{stem}.tgt.vocab")
    src_lines = (directory / f"{stem}.src").read_text().splitlines()
    tgt_lines = (directory / f"{stem}.tgt").read_text().splitlines()
    if len(src_lines) != len(tgt_lines):
        raise ValueError(
            f"{stem}: {len(src_lines)} source lines but {len(tgt_lines)} target lines"
        )
    pairs = [
        (src_vocab.encode(s.split()), tgt_vocab.encode(t.split()))
        for s, t in zip(src_lines, tgt_lines)
    ]
    return ParallelCorpus(pairs, src_vocab, tgt_vocab)
