from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tree
from sdplstm.channels import build_vocabs
from sdplstm.deptree import (
    ConllError,
    DepSentence,
    entity_head,
    extract_sdp,
    format_conll,
    parse_conll,
    sentence_to_sample,
    to_channel_sequences,
)

THREE = "#rel Other\n#e1 1 1\n#e2 3 3\n1\tcats\tNNS\t_\t2\tnsubj\n2\tchase\tVBP\t_\t0\troot\n3\tmice\tNNS\t_\t2\tdobj\n"


def bfs_path(sent, a, b):
    adj = {i: set() for i in range(len(sent))}
    for i, tok in enumerate(sent.tokens):
        if tok.head is not None:
            adj[i].add(tok.head)
            adj[tok.head].add(i)
    prev, queue = {a: None}, deque([a])
    while queue:
        node = queue.popleft()
        for nxt in adj[node]:
            if nxt not in prev:
                prev[nxt] = node
                queue.append(nxt)
    path, node = [], b
    while node is not None:
        path.append(node)
        node = prev[node]
    return path[::-1]


def test_three_token_block():
    (sent,) = parse_conll(THREE)
    assert len(sent) == 3
    assert sent.label == "Other" and sent.direction is None
    assert [t.head for t in sent.tokens] == [1, None, 1]


def test_poured_tree_edges(poured):
    heads = [None if t.head is None else t.head + 1 for t in poured.tokens]
    assert heads == [3, 3, 8, 3, 4, 8, 8, None, 8, 12, 12, 9, 12, 15, 13]
    assert poured.label == "Entity-Destination(e1,e2)"
    assert poured.e1_span == range(4, 5) and poured.e2_span == range(11, 12)


def test_poured_subpaths(poured):
    path = extract_sdp(poured)
    forms = lambda nodes: [poured.tokens[n].form for n in nodes]
    assert forms(path.left_nodes) == ["water", "of", "gallons", "poured"]
    assert forms(path.right_nodes) == ["region", "into", "poured"]
    assert poured.tokens[path.ancestor].form == "poured"
    assert path.left_rels == ("pobj", "prep", "nsubjpass")
    assert path.right_rels == ("pobj", "prep")
    assert forms(path.full_nodes()) == ["water", "of", "gallons", "poured", "into", "region"]
    assert len(path.full_rels()) == len(path.full_nodes()) - 1


def test_self_loop_reported_at_its_line():
    text = THREE.replace("2\tchase\tVBP\t_\t0\troot", "2\tchase\tVBP\t_\t2\troot")
    with pytest.raises(ConllError) as err:
        parse_conll(text)
    assert err.value.lineno == 5
    assert "cycl" in str(err.value)


@pytest.mark.parametrize(
    "edit, lineno",
    [
        (lambda t: t.replace("#rel Other\n", ""), 1),
        (lambda t: t.replace("#rel Other", "#rel Nonsense"), 1),
        (lambda t: t.replace("3\tmice\tNNS\t_\t2", "3\tmice\tNNS\t_\t9"), 6),
        (lambda t: t.replace("3\tmice\tNNS\t_\t2", "3\tmice\tNNS\t_\t0"), 6),
        (lambda t: t.replace("1\tcats\tNNS\t_\t2\tnsubj", "1\tcats\tNNS\t2\tnsubj"), 4),
        (lambda t: t.replace("#e2 3 3", "#e2 3 4"), 3),
        (lambda t: t.replace("#e2 3 3", "#e2 1 1"), 3),
    ],
    ids=["missing-rel", "bad-label", "head-range", "two-roots", "columns", "span-range", "overlap"],
)
def test_malformed_blocks_name_the_line(edit, lineno):
    with pytest.raises(ConllError) as err:
        parse_conll(edit(THREE))
    assert err.value.lineno == lineno


def test_two_cycle_reported():
    text = THREE.replace("1\tcats\tNNS\t_\t2", "1\tcats\tNNS\t_\t3").replace("3\tmice\tNNS\t_\t2", "3\tmice\tNNS\t_\t1")
    with pytest.raises(ConllError, match="cyclic"):
        parse_conll(text)


def test_roundtrip_is_identity(poured_text):
    sents = parse_conll(poured_text + THREE)
    again = parse_conll(format_conll(sents))
    assert again == sents
    assert format_conll(again) == format_conll(sents)
    assert parse_conll("") == [] and format_conll([]) == ""


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_roundtrip_random_trees(seed, n):
    sent = random_tree(np.random.default_rng(seed), n, label="Cause-Effect(e2,e1)")
    sent = DepSentence(sent.tokens, sent.e1_span, sent.e2_span, "Cause-Effect", "e2,e1")
    assert parse_conll(format_conll([sent])) == [sent]


def test_entity_head_cases(poured):
    assert entity_head(poured, range(4, 5)) == 4
    assert entity_head(poured, range(13, 15)) == 14  # "outer space" -> space
    # "an empty": both governed by "region", which lies outside the span
    assert entity_head(poured, range(9, 11)) == 9


def test_degenerate_left_subpath(poured):
    # e1 = poured (the root) dominates e2 = region
    sent = DepSentence(poured.tokens, range(7, 8), range(11, 12), "Other")
    path = extract_sdp(sent)
    assert path.left_nodes == (7,) and path.left_rels == ()
    assert path.right_nodes == (11, 8, 7)


def test_swap_exchanges_subpaths(poured):
    a, b = extract_sdp(poured), extract_sdp(poured.swapped())
    assert (a.left_nodes, a.left_rels) == (b.right_nodes, b.right_rels)
    assert (a.right_nodes, a.right_rels) == (b.left_nodes, b.left_rels)
    assert poured.swapped().label == "Entity-Destination(e2,e1)"
    assert poured.swapped().swapped() == poured


def test_bfs_oracle_on_random_trees():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        sent = random_tree(rng, int(rng.integers(2, 31)))
        path = extract_sdp(sent)
        h1, h2 = sent.e1_span.start, sent.e2_span.start
        expected = bfs_path(sent, h1, h2)
        assert list(path.full_nodes()) == expected
        assert path.left_nodes[-1] == path.right_nodes[-1] == path.ancestor
        assert len(path.left_rels) == len(path.left_nodes) - 1


def test_channel_sequences(poured):
    vocabs = build_vocabs([poured])
    sample = sentence_to_sample(poured, vocabs)
    words = vocabs["word"]
    assert sample.left.word == tuple(words.lookup(w) for w in ("water", "of", "gallons", "poured"))
    assert len(sample.left.gr) == len(sample.left.word) - 1
    assert len(sample.right.pos) == len(sample.right.hypernym) == 3
    full = sample.full()
    assert len(full.word) == 6 and len(full.gr) == 5
    assert sample.label == 6  # Entity-Destination(e1,e2)


def test_degenerate_subpath_has_empty_gr(poured):
    sent = DepSentence(poured.tokens, range(7, 8), range(11, 12), "Other")
    sample = sentence_to_sample(sent, build_vocabs([poured]))
    assert len(sample.left.word) == 1 and sample.left.gr == ()


def test_unseen_word_maps_to_unk(poured):
    vocabs = build_vocabs([poured])
    tokens = list(poured.tokens)
    tokens[4] = tokens[4]._replace(form="plasma")
    sent = DepSentence(tuple(tokens), poured.e1_span, poured.e2_span, poured.relation, poured.direction)
    before = sentence_to_sample(poured, vocabs)
    after = to_channel_sequences(sent, extract_sdp(sent), vocabs)
    assert after.left.word[0] == 0 and before.left.word[0] != 0
    assert after.left.word[1:] == before.left.word[1:]
    assert (after.left.pos, after.left.gr, after.left.hypernym) == (before.left.pos, before.left.gr, before.left.hypernym)


def test_missing_channel_vocab_gives_empty_sequences(poured):
    sample = sentence_to_sample(poured, {"word": build_vocabs([poured])["word"]})
    assert sample.left.pos == () and len(sample.left.word) == 4


