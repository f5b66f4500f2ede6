import numpy as np
import pytest

from sdplstm.deptree import DepSentence, Token, parse_conll

POURED_SDPC = """\
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


@pytest.fixture
def poured_text():
    return POURED_SDPC


@pytest.fixture
def poured():
    (sent,) = parse_conll(POURED_SDPC)
    return sent


def random_tree(rng, n, label="Other"):
    """Uniform-ish random tree on ``n`` tokens with two distinct single-token entities."""
    order = rng.permutation(n)
    heads = [None] * n
    for k in range(1, n):
        heads[order[k]] = int(order[rng.integers(k)])
    tokens = tuple(Token(f"t{i}", "NN", "_", heads[i], "dep" if heads[i] is not None else "root") for i in range(n))
    a, b = rng.choice(n, size=2, replace=False)
    return DepSentence(tokens, range(int(a), int(a) + 1), range(int(b), int(b) + 1), label)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
