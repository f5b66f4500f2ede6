"""Scoring in the style of the SemEval-2010 Task 8 official scorer, plus ablations.

Two macro F1 figures are produced, both leaving out Other as a class term:

* ``macro_f1_excl_other`` averages per-class F1 over every directed label
  (18 for the full label set);
* ``official_f1`` merges the two directions of each relation type, counting
  a prediction as correct only when type *and* direction match, and averages
  over the relation types (9 for the full set).  This is the headline number.

Classes with no gold and no predicted instances have F1 = 0 and still count
in the averages.
"""

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np

from sdplstm._io import write_text
from sdplstm.labels import LABELS, OTHER, relation_type

log = logging.getLogger(__name__)


def _prf(tp, n_pred, n_gold):
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class EvalReport:
    labels: tuple
    confusion: np.ndarray  # rows gold, columns predicted
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1_excl_other: float
    official_f1: float
    accuracy: float

    @property
    def headline_f1(self):
        return self.official_f1

    @property
    def total(self):
        return int(self.confusion.sum())

    def to_record(self):
        return {
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro_f1_excl_other": self.macro_f1_excl_other,
            "official_f1": self.official_f1,
            "accuracy": self.accuracy,
        }

    def confusion_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gold\\pred", *self.labels])
        for label, row in zip(self.labels, self.confusion):
            w.writerow([label, *row.tolist()])
        return buf.getvalue()

    def table(self):
        lines = [f"{'label':<28} {'P':>7} {'R':>7} {'F1':>7} {'gold':>6}"]
        gold = self.confusion.sum(axis=1)
        for i, label in enumerate(self.labels):
            lines.append(
                f"{label:<28} {100 * self.precision[i]:7.2f} {100 * self.recall[i]:7.2f} {100 * self.f1[i]:7.2f} {gold[i]:6d}"
            )
        lines.append(f"accuracy            {self.accuracy:7.2f}")
        lines.append(f"macro F1 (directed) {self.macro_f1_excl_other:7.2f}")
        lines.append(f"macro F1 (official) {self.official_f1:7.2f}")
        return "\n".join(lines)


def score(gold, pred, labels=LABELS):
    """Score parallel label lists; ``labels`` must contain Other."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold labels but {len(pred)} predictions")
    index = {label: i for i, label in enumerate(labels)}
    for label in (*gold, *pred):
        if label not in index:
            raise ValueError(f"unknown label {label!r}")
    if OTHER not in index:
        raise ValueError("label set must include Other")
    n = len(labels)
    confusion = np.zeros((n, n), dtype=np.int64)
    for g, p in zip(gold, pred):
        confusion[index[g], index[p]] += 1
    tp = np.diag(confusion)
    n_pred = confusion.sum(axis=0)
    n_gold = confusion.sum(axis=1)
    prf = np.array([_prf(tp[i], n_pred[i], n_gold[i]) for i in range(n)]).reshape(n, 3)
    directed = [i for i, label in enumerate(labels) if label != OTHER]
    macro_directed = 100.0 * float(np.mean(prf[directed, 2])) if directed else 0.0

    types = list(dict.fromkeys(relation_type(labels[i]) for i in directed))
    type_f1 = []
    for t in types:
        members = [i for i in directed if relation_type(labels[i]) == t]
        type_f1.append(_prf(sum(tp[i] for i in members), sum(n_pred[i] for i in members), sum(n_gold[i] for i in members))[2])
    official = 100.0 * float(np.mean(type_f1)) if type_f1 else 0.0
    total = confusion.sum()
    accuracy = 100.0 * float(np.trace(confusion)) / total if total else 0.0
    return EvalReport(tuple(labels), confusion, prf[:, 0], prf[:, 1], prf[:, 2], macro_directed, official, accuracy)


def write_report(report, path, csv_path=None):
    write_text(path, json.dumps(report.to_record(), sort_keys=True, indent=1) + "\n")
    if csv_path:
        write_text(csv_path, report.confusion_csv())


# ------------------------------------------------------------------ ablations

CHANNEL_LADDER = (
    ("word",),
    ("word", "pos"),
    ("word", "gr"),
    ("word", "hypernym"),
    ("word", "pos", "gr", "hypernym"),
)


def channel_grid():
    """The five channel settings: word only, +POS, +GR, +WordNet, all."""
    return [{"channels": chs} for chs in CHANNEL_LADDER]


def cell_name(changes):
    parts = []
    for k, v in changes.items():
        parts.append(f"{k}={'+'.join(v) if isinstance(v, (tuple, list)) else v}")
    return ",".join(parts) or "base"


def ablation_run(train_sentences, test_sentences, base_cfg, grid, train_fn=None):
    """Train and score one model per grid cell; failures become error rows.

    ``grid`` is a list of dicts of ``HyperConfig`` overrides.  Every cell uses
    the base seed.  Returns a list of row dicts with the cell name, the
    overrides and either an ``EvalReport`` or an ``error`` string.
    """
    from sdplstm.deptree import sentence_to_sample
    from sdplstm.training import evaluate, train

    train_fn = train_fn or train
    rows = []
    for changes in grid:
        name = cell_name(changes)
        try:
            cfg = base_cfg.replace(**changes)
            state = train_fn(train_sentences, cfg)
            samples = [sentence_to_sample(s, state.vocabs) for s in test_sentences]
            rows.append({"cell": name, "changes": dict(changes), "report": evaluate(state.params, samples, cfg), "error": None})
        except Exception as exc:  # one bad cell must not sink the grid
            log.exception("ablation cell %s failed", name)
            rows.append({"cell": name, "changes": dict(changes), "report": None, "error": f"{type(exc).__name__}: {exc}"})
    return rows


def ablation_table(rows):
    lines = [f"{'setting':<40} {'F1':>7} {'acc':>7}"]
    for row in rows:
        if row["report"] is None:
            lines.append(f"{row['cell']:<40} {'error':>7}  {row['error']}")
        else:
            lines.append(f"{row['cell']:<40} {row['report'].headline_f1:7.2f} {row['report'].accuracy:7.2f}")
    return "\n".join(lines)


def ablation_records(rows):
    out = []
    for row in rows:
        rec = {"cell": row["cell"], "changes": {k: list(v) if isinstance(v, tuple) else v for k, v in row["changes"].items()}}
        if row["report"] is None:
            rec["error"] = row["error"]
        else:
            rep = row["report"]
            rec.update(official_f1=float(rep.official_f1), macro_f1_excl_other=float(rep.macro_f1_excl_other),
                       accuracy=float(rep.accuracy))
        out.append(rec)
    return out
