"""Dependency-annotated sentences and shortest dependency paths.

Input files use a small CoNLL-like layout (".sdpc"): three header lines
followed by one TAB-separated line per token, blocks separated by blank
lines::

    #rel Entity-Destination(e1,e2)
    #e1 5 5
    #e2 11 11
    1	A	DT	_	3	det
    2	trillion	CD	_	3	num
    ...

Header spans are 1-based and inclusive; token columns are
``ID FORM POS HYPERNYM HEAD DEPREL`` with HEAD 0 for the root.  In memory
everything is 0-based, spans are ``range`` objects and the root's head is
``None``.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

from sdplstm.labels import LABEL_INDEX, split_label


class ConllError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Token(NamedTuple):
    form: str
    pos: str
    hypernym: str
    head: Optional[int]
    deprel: str


@dataclass(frozen=True)
class DepSentence:
    tokens: tuple
    e1_span: range
    e2_span: range
    relation: str
    direction: Optional[str] = None

    @property
    def label(self):
        """Full label string, e.g. ``Cause-Effect(e1,e2)``."""
        return self.relation if self.direction is None else f"{self.relation}({self.direction})"

    def __len__(self):
        return len(self.tokens)

    def swapped(self):
        """The same sentence with the two entity roles exchanged."""
        direction = {"e1,e2": "e2,e1", "e2,e1": "e1,e2", None: None}[self.direction]
        return DepSentence(self.tokens, self.e2_span, self.e1_span, self.relation, direction)


@dataclass(frozen=True)
class SdpPath:
    """The shortest path between the entity heads, cut at their lowest common ancestor.

    Both node lists run bottom-up (entity head first) and both end with the
    ancestor.
    """

    left_nodes: tuple
    right_nodes: tuple
    left_rels: tuple
    right_rels: tuple
    ancestor: int

    def full_nodes(self):
        """Undivided path from the first entity's head to the second's."""
        return self.left_nodes + self.right_nodes[::-1][1:]

    def full_rels(self):
        return self.left_rels + self.right_rels[::-1]


class SubPath(NamedTuple):
    word: tuple
    pos: tuple
    gr: tuple
    hypernym: tuple


@dataclass(frozen=True)
class SdpSample:
    """Vocabulary indices for both sub-paths; ``label`` is a class index or None."""

    left: SubPath
    right: SubPath
    label: Optional[int] = None

    def full(self):
        """Single sequence per channel over the whole entity-to-entity path."""
        return SubPath(
            word=self.left.word + self.right.word[::-1][1:],
            pos=self.left.pos + self.right.pos[::-1][1:],
            gr=self.left.gr + self.right.gr[::-1],
            hypernym=self.left.hypernym + self.right.hypernym[::-1][1:],
        )


def _parse_span(value, lineno, key):
    parts = value.split()
    if len(parts) != 2:
        raise ConllError(lineno, f"#{key} needs '<start> <end>', got {value!r}")
    try:
        start, end = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConllError(lineno, f"#{key} bounds must be integers, got {value!r}") from None
    if start < 1 or end < start:
        raise ConllError(lineno, f"#{key} span {start}..{end} is empty or starts below 1")
    return range(start - 1, end)


def _check_tree(heads, linenos):
    roots = [i for i, h in enumerate(heads) if h is None]
    if len(roots) > 1:
        raise ConllError(linenos[roots[1]], f"multiple roots (tokens {roots[0] + 1} and {roots[1] + 1})")
    # Every token must reach the root within n steps; otherwise after n steps
    # we are on the cycle itself, which is reported at its first token.
    n = len(heads)
    for i in range(n):
        node, steps = i, 0
        while node is not None and steps <= n:
            node = heads[node]
            steps += 1
        if node is not None:
            cycle, cur = {node}, heads[node]
            while cur != node:
                cycle.add(cur)
                cur = heads[cur]
            first = min(cycle)
            raise ConllError(linenos[first], f"cyclic heads involving token {first + 1}")
    if not roots:
        raise ConllError(linenos[0], "no root token")


def _finish_block(header, rows, header_line, linenos):
    for key in ("rel", "e1", "e2"):
        if key not in header:
            raise ConllError(header_line, f"sentence is missing the #{key} header")
    if not rows:
        raise ConllError(header_line, "sentence has no tokens")
    rel_value, rel_line = header["rel"]
    if rel_value not in LABEL_INDEX:
        raise ConllError(rel_line, f"unknown relation label {rel_value!r}")
    relation, direction = split_label(rel_value)
    e1 = _parse_span(*header["e1"], "e1")
    e2 = _parse_span(*header["e2"], "e2")
    n = len(rows)
    for key, span in (("e1", e1), ("e2", e2)):
        if span.stop > n:
            raise ConllError(header[key][1], f"#{key} span ends at {span.stop}, sentence has {n} tokens")
    if set(e1) & set(e2):
        raise ConllError(header["e2"][1], "entity spans overlap")
    for row, lineno in zip(rows, linenos):
        if row.head is not None and row.head >= n:
            raise ConllError(lineno, f"head {row.head + 1} out of range for {n} tokens")
    _check_tree([row.head for row in rows], linenos)
    return DepSentence(tuple(rows), e1, e2, relation, direction)


def _parse_token(line, lineno, expected_id):
    cols = line.split("\t")
    if len(cols) != 6:
        raise ConllError(lineno, f"expected 6 TAB-separated columns, got {len(cols)}")
    tid, form, pos, hyper, head, deprel = cols
    try:
        tid, head = int(tid), int(head)
    except ValueError:
        raise ConllError(lineno, "ID and HEAD must be integers") from None
    if head < 0:
        raise ConllError(lineno, f"negative head {head}")
    if tid != expected_id:
        raise ConllError(lineno, f"expected token ID {expected_id}, got {tid}")
    if not form or not pos or not hyper or not deprel:
        raise ConllError(lineno, "empty column")
    return Token(form, pos, hyper, None if head == 0 else head - 1, deprel)


def parse_conll(text):
    """Parse every sentence block in ``text``; raises ``ConllError`` with the offending line."""
    sentences = []
    header, rows, linenos, header_line = {}, [], [], None
    lines = text.splitlines()
    for lineno, raw in enumerate(lines + [""], start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if header or rows:
                sentences.append(_finish_block(header, rows, header_line or lineno, linenos))
                header, rows, linenos, header_line = {}, [], [], None
            continue
        if line.startswith("#"):
            if rows:
                raise ConllError(lineno, "header line after token lines")
            key, _, value = line[1:].partition(" ")
            if key not in ("rel", "e1", "e2"):
                raise ConllError(lineno, f"unknown header {line.split()[0]!r}")
            if key in header:
                raise ConllError(lineno, f"duplicate #{key} header")
            header[key] = (value.strip(), lineno)
            header_line = header_line or lineno
            continue
        row = _parse_token(line, lineno, len(rows) + 1)
        rows.append(row)
        linenos.append(lineno)
    return sentences


def format_conll(sentences):
    """Inverse of ``parse_conll``."""
    out = []
    for sent in sentences:
        out.append(f"#rel {sent.label}")
        out.append(f"#e1 {sent.e1_span.start + 1} {sent.e1_span.stop}")
        out.append(f"#e2 {sent.e2_span.start + 1} {sent.e2_span.stop}")
        for i, tok in enumerate(sent.tokens, start=1):
            head = 0 if tok.head is None else tok.head + 1
            out.append(f"{i}\t{tok.form}\t{tok.pos}\t{tok.hypernym}\t{head}\t{tok.deprel}")
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def read_conll(path):
    with open(path, encoding="utf-8") as f:
        return parse_conll(f.read())


def entity_head(sent, span):
    """Token of ``span`` governed from outside it (or the root); leftmost on ties."""
    for i in span:
        head = sent.tokens[i].head
        if head is None or head not in span:
            return i
    # Unreachable for valid trees: some token in a span must leave it.
    raise ValueError("span has no external head")  # pragma: no cover


def _chain_to_root(sent, node):
    chain = [node]
    while sent.tokens[chain[-1]].head is not None:
        chain.append(sent.tokens[chain[-1]].head)
    return chain


def extract_sdp(sent):
    h1 = entity_head(sent, sent.e1_span)
    h2 = entity_head(sent, sent.e2_span)
    up1 = _chain_to_root(sent, h1)
    up2 = _chain_to_root(sent, h2)
    on2 = set(up2)
    ancestor = next(n for n in up1 if n in on2)
    left = tuple(up1[: up1.index(ancestor) + 1])
    right = tuple(up2[: up2.index(ancestor) + 1])
    return SdpPath(
        left_nodes=left,
        right_nodes=right,
        left_rels=tuple(sent.tokens[n].deprel for n in left[:-1]),
        right_rels=tuple(sent.tokens[n].deprel for n in right[:-1]),
        ancestor=ancestor,
    )


def to_channel_sequences(sent, path, vocabs, label=None):
    """Map both sub-paths of ``path`` to index sequences.

    ``vocabs`` maps channel name (word, pos, gr, hypernym) to ``Vocab``;
    missing channels give empty sequences.  ``label`` defaults to the
    sentence's own label index.
    """

    def side(nodes, rels):
        toks = [sent.tokens[n] for n in nodes]

        def seq(kind, values):
            vocab = vocabs.get(kind)
            return tuple(vocab.index(v) for v in values) if vocab is not None else ()

        return SubPath(
            word=seq("word", [t.form for t in toks]),
            pos=seq("pos", [t.pos for t in toks]),
            gr=seq("gr", rels),
            hypernym=seq("hypernym", [t.hypernym for t in toks]),
        )

    if label is None:
        label = LABEL_INDEX[sent.label]
    return SdpSample(side(path.left_nodes, path.left_rels), side(path.right_nodes, path.right_rels), label)


def sentence_to_sample(sent, vocabs):
    return to_channel_sequences(sent, extract_sdp(sent), vocabs)
