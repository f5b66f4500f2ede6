"""Seeded synthetic corpus with a known, direction-sensitive label function.

Each sentence is a random dependency tree of 5-15 tokens over a 200-word
vocabulary.  Labels are one of four directed classes or Other:

* no marker word on the shortest path -> ``Other``
* a Cause-Effect marker on the path  -> ``Cause-Effect(e1,e2)`` if it sits on
  the first entity's sub-path, ``Cause-Effect(e2,e1)`` if on the second's
* likewise for Entity-Destination markers.

Markers sit strictly inside a sub-path (never an entity, never the common
ancestor).  The marker's position along the undivided path is drawn
independently of the side it is on, so a model that cannot see where the
path turns cannot recover the direction.  Off-path tokens sometimes carry a
distractor marker, which never affects the label.
"""

import os

from sdplstm._io import write_text
from sdplstm.channels import HYPERNYMS
from sdplstm.deptree import DepSentence, Token, entity_head, format_conll
from sdplstm.labels import OTHER, split_label
from sdplstm.numerics import make_rng

VOCAB_SIZE = 200
MARKERS = {
    "Cause-Effect": ("causes", "triggers", "produces", "induces", "yields"),
    "Entity-Destination": ("into", "toward", "onto", "reaching", "entering"),
}
MARKER_TYPE = {w: t for t, ws in MARKERS.items() for w in ws}
FILLERS = tuple(f"w{i:03d}" for i in range(VOCAB_SIZE - len(MARKER_TYPE)))
SYNTH_LABELS = (
    "Cause-Effect(e1,e2)",
    "Cause-Effect(e2,e1)",
    "Entity-Destination(e1,e2)",
    "Entity-Destination(e2,e1)",
    OTHER,
)
POS_TAGS = ("NN", "NNP", "PRP", "VB", "MD", "JJ", "RB", "IN", "DT", "CD", "CC", "RP", "WH", "PUNCT", "X")
GR_CLASSES = (
    "nsubj", "dobj", "iobj", "csubj", "ccomp", "xcomp", "prep", "pobj", "amod", "advmod",
    "nn", "det", "poss", "aux", "cop", "conj", "cc", "mark", "dep",
)

MIN_TOKENS, MAX_TOKENS = 5, 15
MIN_PATH, MAX_PATH = 3, 7


def _word_tags(word):
    # Fixed per word so the tag channels are consistent functions of the word.
    h = sum((i + 1) * ord(ch) for i, ch in enumerate(word))
    return POS_TAGS[h % len(POS_TAGS)], HYPERNYMS[(h // 7) % len(HYPERNYMS)]


def generate_sentence(rng):
    label = SYNTH_LABELS[rng.integers(len(SYNTH_LABELS))]
    rel, direction = split_label(label)
    n_path = int(rng.integers(MIN_PATH, MAX_PATH + 1))
    n_tokens = int(rng.integers(max(MIN_TOKENS, n_path), MAX_TOKENS + 1))

    # Path positions 0..n_path-1 run from e1 to e2; `anc` is the turning point.
    words = [FILLERS[rng.integers(len(FILLERS))] for _ in range(n_tokens)]
    if rel == OTHER:
        anc = int(rng.integers(n_path))
    else:
        k = int(rng.integers(1, n_path - 1))
        if direction == "e1,e2":
            anc = int(rng.integers(k + 1, n_path))
        else:
            anc = int(rng.integers(0, k))
        markers = MARKERS[rel]
        words[k] = markers[rng.integers(len(markers))]

    parent = [None] * n_tokens
    for j in range(n_path):
        if j < anc:
            parent[j] = j + 1
        elif j > anc:
            parent[j] = j - 1
    extra = list(range(n_path, n_tokens))
    if extra and rng.random() < 0.5:
        parent[anc] = extra[0]
        attach_from = 1
    else:
        attach_from = 0
    for pos, node in enumerate(extra):
        if pos < attach_from:
            continue
        placed = list(range(n_path)) + extra[:pos]
        parent[node] = placed[rng.integers(len(placed))]
    if extra and rng.random() < 0.3:
        decoy = extra[rng.integers(len(extra))]
        all_markers = sorted(MARKER_TYPE)
        words[decoy] = all_markers[rng.integers(len(all_markers))]

    order = rng.permutation(n_tokens)  # order[new_id] = old node
    new_of = {int(old): new for new, old in enumerate(order)}
    tokens = []
    for old in order:
        old = int(old)
        pos, hyper = _word_tags(words[old])
        head = None if parent[old] is None else new_of[parent[old]]
        deprel = "root" if head is None else GR_CLASSES[rng.integers(len(GR_CLASSES))]
        tokens.append(Token(words[old], pos, hyper, head, deprel))
    e1, e2 = new_of[0], new_of[n_path - 1]
    return DepSentence(tuple(tokens), range(e1, e1 + 1), range(e2, e2 + 1), rel, direction)


def generate(seed, n):
    rng = make_rng(seed)
    return [generate_sentence(rng) for _ in range(n)]


def synth_corpus(seed, n_train, n_test):
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    sents = generate(seed, n_train + n_test)
    return sents[:n_train], sents[n_train:]


def write_synth(seed, n_train, n_test, out_dir):
    train, test = synth_corpus(seed, n_train, n_test)
    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, "train.sdpc")
    test_path = os.path.join(out_dir, "test.sdpc")
    write_text(train_path, format_conll(train))
    write_text(test_path, format_conll(test))
    return train_path, test_path


def synth_label(sent):
    """Recompute a synthetic sentence's label from its tree alone."""
    h1 = entity_head(sent, sent.e1_span)
    h2 = entity_head(sent, sent.e2_span)

    def chain(n):
        out = [n]
        while sent.tokens[out[-1]].head is not None:
            out.append(sent.tokens[out[-1]].head)
        return out

    c1, c2 = chain(h1), chain(h2)
    anc = next(n for n in c1 if n in set(c2))
    left = c1[: c1.index(anc)]
    right = c2[: c2.index(anc)]
    for side, nodes in (("e1,e2", left), ("e2,e1", right)):
        for n in nodes:
            rel = MARKER_TYPE.get(sent.tokens[n].form)
            if rel is not None:
                return f"{rel}({side})"
    return OTHER
