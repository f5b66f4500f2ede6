"""Per-channel vocabularies and embedding tables, plus embedding dropout.

Channels are ``word``, ``pos``, ``gr`` (grammatical relation) and
``hypernym`` (WordNet supersense).  The three tag channels are normalized to
closed sets shipped under ``sdplstm/data``; ``CLOSED_SET_SIZE`` gives their
sizes (41 for the WordNet lexicographer classes).  Anything that
does not normalize maps to index 0 (UNK).
"""

from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from sdplstm._io import atomic_open
from sdplstm.numerics import DTYPE, uniform

CHANNELS = ("word", "pos", "gr", "hypernym")
UNK = "<unk>"
INIT_SCALE = 0.05
CLOSED_SET_SIZE = {"pos": 15, "gr": 19, "hypernym": 41}


def parse_mapping(text):
    """Parse a TAB-separated ``raw -> coarse`` mapping; ``#`` lines are comments."""
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"mapping line {lineno}: expected 'raw<TAB>coarse'")
        mapping[parts[0]] = parts[1]
    return mapping


def read_mapping(path):
    with open(path, encoding="utf-8") as f:
        return parse_mapping(f.read())


def _data(name):
    return resources.files("sdplstm").joinpath("data", name).read_text(encoding="utf-8")


POS_MAP = parse_mapping(_data("pos_map.tsv"))
GR_MAP = parse_mapping(_data("gr_map.tsv"))
HYPERNYMS = tuple(line.strip() for line in _data("hypernyms.txt").splitlines() if line.strip())


def default_mapping(kind):
    if kind == "pos":
        return POS_MAP
    if kind == "gr":
        return GR_MAP
    if kind == "hypernym":
        return {h: h for h in HYPERNYMS}
    return None


def normalize(kind, raw, mapping=None):
    """Channel symbol for a raw token attribute, or None if it has no class."""
    if kind == "word":
        return raw.lower()
    mapping = default_mapping(kind) if mapping is None else mapping
    if raw in mapping:
        return mapping[raw]
    if kind == "gr" and "_" in raw:
        return mapping.get(raw.split("_", 1)[0])
    if kind == "hypernym" and raw[:2] in ("B-", "I-"):
        return mapping.get(raw[2:])
    return None


@dataclass
class Vocab:
    kind: str
    symbols: tuple
    mapping: Optional[dict] = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise ValueError(f"unknown vocabulary kind {self.kind!r}")
        if not self.symbols or self.symbols[0] != UNK:
            raise ValueError("vocabulary must start with the UNK symbol")
        self.symbols = tuple(self.symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate vocabulary symbols")

    @property
    def size(self):
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def lookup(self, symbol):
        return self._index.get(symbol, 0)

    def index(self, raw):
        """Index of a raw (un-normalized) token attribute."""
        symbol = normalize(self.kind, raw, self.mapping)
        return 0 if symbol is None else self.lookup(symbol)


def _raw_symbols(kind, sent):
    if kind == "word":
        return [t.form for t in sent.tokens]
    if kind == "pos":
        return [t.pos for t in sent.tokens]
    if kind == "hypernym":
        return [t.hypernym for t in sent.tokens]
    return [t.deprel for t in sent.tokens if t.head is not None]


def build_vocab(kind, corpus, min_count=1, mapping=None):
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for sent in corpus:
        for raw in _raw_symbols(kind, sent):
            symbol = normalize(kind, raw, mapping)
            if symbol is not None and symbol != UNK:
                counts[symbol] += 1
    kept = sorted((s for s, c in counts.items() if c >= min_count), key=lambda s: (-counts[s], s))
    return Vocab(kind, (UNK, *kept), mapping)


def build_vocabs(corpus, channels=CHANNELS, min_count=1):
    return {kind: build_vocab(kind, corpus, min_count if kind == "word" else 1) for kind in channels}


@dataclass
class EmbeddingTable:
    vocab: Vocab
    dim: int
    vectors: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=DTYPE)
        if self.vectors.shape != (self.vocab.size, self.dim):
            raise ValueError(f"embedding matrix {self.vectors.shape} does not match vocab {self.vocab.size} x dim {self.dim}")

    @classmethod
    def random(cls, vocab, dim, rng, scale=INIT_SCALE):
        return cls(vocab, dim, uniform(rng, (vocab.size, dim), scale))


def embed(table, indices):
    """Rows of ``table`` for ``indices`` as a ``(len(indices), dim)`` array."""
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= table.vocab.size):
        raise IndexError(f"embedding index out of range for vocabulary of size {table.vocab.size}")
    return table.vectors[idx]


def load_pretrained(table, path):
    """Overwrite rows of ``table`` from a word2vec text file; return rows set.

    Matching goes through the vocabulary's normalization, first entry wins.
    """
    found = set()
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise ValueError(f"{path}: line 1: expected '<count> <dim>' header")
        dim = int(header[1])
        if dim != table.dim:
            raise ValueError(f"{path}: vectors are {dim}-dimensional, table expects {table.dim}")
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: line {lineno}: expected word and {dim} values, got {len(parts) - 1}")
            try:
                values = np.array([float(x) for x in parts[1:]], dtype=DTYPE)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric vector value") from None
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{path}: line {lineno}: non-finite vector value")
            row = table.vocab.index(parts[0])
            if row == 0 or row in found:
                continue
            table.vectors[row] = values
            found.add(row)
    return len(found)


def save_word2vec(table, path):
    """Write every non-UNK row in word2vec text format (exact float repr)."""
    with atomic_open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{table.vocab.size - 1} {table.dim}\n")
        for symbol, row in zip(table.vocab.symbols[1:], table.vectors[1:]):
            f.write(symbol + " " + " ".join(repr(float(x)) for x in row) + "\n")


def dropout_mask(shape, rate, rng):
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape, dtype=DTYPE)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout_embed(v, rate, rng, training):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    v = np.asarray(v, dtype=DTYPE)
    if not training or rate == 0.0:
        return v
    return v * dropout_mask(v.shape, rate, rng)
