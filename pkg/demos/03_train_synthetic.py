"""Train on the synthetic corpus and compare split and whole-path models.

The synthetic labels depend on which side of the common ancestor a marker
word sits, so a model fed the undivided path has to guess the direction.
Takes a few minutes on one core.
"""

import logging
import time

from sdplstm.deptree import sentence_to_sample
from sdplstm.model import HyperConfig
from sdplstm.synth import synth_corpus
from sdplstm.training import evaluate, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

train_sents, test_sents = synth_corpus(42, 2000, 500)
print(train_sents[0].label, [t.form for t in train_sents[0].tokens])

for path in ("split", "full"):
    cfg = HyperConfig(path=path)
    t0 = time.perf_counter()
    state = train(train_sents, cfg)
    test = [sentence_to_sample(s, state.vocabs) for s in test_sents]
    report = evaluate(state.params, test, cfg)
    print(f"\n{path:>5} path: best epoch {state.best_epoch}, test accuracy {report.accuracy:.1f}%, "
          f"official F1 {report.official_f1:.1f} ({time.perf_counter() - t0:.0f}s)")

print("\nper-class view of the last model:")
print(report.table())
