"""Walk one annotated sentence from its dependency tree to network inputs."""

from sdplstm.channels import build_vocabs
from sdplstm.deptree import extract_sdp, parse_conll, sentence_to_sample

TEXT = """\
#rel Entity-Destination(e1,e2)
#e1 5 5
#e2 12 12
1\tA\tDT\t_\t3\tdet
2\ttrillion\tCD\t_\t3\tnum
3\tgallons\tNNS\tnoun.quantity\t8\tnsubjpass
4\tof\tIN\t_\t3\tprep
5\twater\tNN\tnoun.substance\t4\tpobj
6\thave\tVBP\t_\t8\taux
7\tbeen\tVBN\t_\t8\tauxpass
8\tpoured\tVBN\tverb.contact\t0\troot
9\tinto\tIN\t_\t8\tprep
10\tan\tDT\t_\t12\tdet
11\tempty\tJJ\tadj.all\t12\tamod
12\tregion\tNN\tnoun.location\t9\tpobj
13\tof\tIN\t_\t12\tprep
14\touter\tJJ\tadj.all\t15\tamod
15\tspace\tNN\tnoun.location\t13\tpobj
"""

(sent,) = parse_conll(TEXT)
print("label:", sent.label)

# The path climbs from each entity to the lowest node dominating both.
path = extract_sdp(sent)
word = lambda n: sent.tokens[n].form
print("left :", " -> ".join(map(word, path.left_nodes)), " rels:", path.left_rels)
print("right:", " -> ".join(map(word, path.right_nodes)), " rels:", path.right_rels)
print("common ancestor:", word(path.ancestor))
print("whole path:", " ".join(map(word, path.full_nodes())))

# Swapping the entities swaps the two halves and flips the direction.
flipped = sent.swapped()
print("\nswapped label:", flipped.label)
print("swapped left:", [word(n) for n in extract_sdp(flipped).left_nodes])

# Each half becomes four index sequences, one per channel.
# Relations are one shorter: they sit on the edges between nodes.
vocabs = build_vocabs([sent])
sample = sentence_to_sample(sent, vocabs)
for channel in ("word", "pos", "gr", "hypernym"):
    syms = vocabs[channel].symbols
    left = [syms[i] for i in getattr(sample.left, channel)]
    print(f"{channel:>9}: {left}")
