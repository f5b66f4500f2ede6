import csv
import json

import numpy as np
import pytest

from sdplstm.evaluation import ablation_records, ablation_run, ablation_table, channel_grid, score, write_report
from sdplstm.labels import LABELS, OTHER
from sdplstm.model import HyperConfig
from sdplstm.synth import synth_corpus


CE12, CE21, MT12 = "Cause-Effect(e1,e2)", "Cause-Effect(e2,e1)", "Message-Topic(e1,e2)"
TOY = (CE12, CE21, MT12, OTHER)
GOLD = [CE12] * 4 + [CE21] * 2 + [MT12] * 3 + [OTHER] * 3
PRED = [CE12, CE12, CE12, CE21, CE21, OTHER, MT12, MT12, CE12, OTHER, MT12, OTHER]


def test_toy_confusion_by_hand():
    r = score(GOLD, PRED, TOY)
    assert r.confusion.tolist() == [[3, 1, 0, 0], [0, 1, 0, 1], [1, 0, 2, 0], [0, 0, 1, 2]]
    assert np.allclose(r.f1[:3], [3 / 4, 1 / 2, 2 / 3], rtol=0, atol=1e-12)
    assert abs(r.macro_f1_excl_other - 100 * (3 / 4 + 1 / 2 + 2 / 3) / 3) < 1e-9
    # Cause-Effect merged: tp 4 of 6 predicted and 6 gold
    assert abs(r.official_f1 - 100 * (2 / 3 + 2 / 3) / 2) < 1e-9
    assert r.accuracy == pytest.approx(100 * 8 / 12)


def test_absent_classes_count_as_zero():
    r = score(GOLD, PRED, LABELS)
    assert abs(r.macro_f1_excl_other - 100 * (3 / 4 + 1 / 2 + 2 / 3) / 18) < 1e-9
    assert abs(r.official_f1 - 100 * (4 / 3) / 9) < 1e-9


def test_all_correct_and_all_other():
    directed = [l for l in LABELS if l != OTHER]
    perfect = score(directed * 2, directed * 2)
    assert perfect.macro_f1_excl_other == 100.0 and perfect.official_f1 == 100.0
    none = score(directed + [OTHER], [OTHER] * 19)
    assert none.macro_f1_excl_other == 0.0 and none.official_f1 == 0.0


def test_direction_must_match():
    r = score([CE12, CE21], [CE21, CE12], TOY)
    assert r.official_f1 == 0.0 and r.accuracy == 0.0


def test_single_class_perfect():
    r = score([MT12] * 5, [MT12] * 5, TOY)
    assert r.precision[2] == r.recall[2] == r.f1[2] == 1.0


def test_permutation_invariance():
    rng = np.random.default_rng(0)
    gold = list(rng.choice(LABELS, 300))
    pred = [g if rng.random() < 0.6 else rng.choice(LABELS) for g in gold]
    base = score(gold, pred)
    perm = rng.permutation(300)
    shuffled = score([gold[i] for i in perm], [pred[i] for i in perm])
    assert np.array_equal(base.confusion, shuffled.confusion)
    assert base.to_record() == shuffled.to_record()
    assert base.total == 300 and (base.confusion >= 0).all()
    assert base.accuracy == pytest.approx(100 * np.trace(base.confusion) / 300)


def test_errors():
    with pytest.raises(ValueError):
        score([CE12], [])
    with pytest.raises(ValueError, match="unknown label"):
        score(["Cause-Effect"], [OTHER])
    with pytest.raises(ValueError):
        score([CE12], [CE12], (CE12,))


def test_report_outputs(tmp_path):
    r = score(GOLD, PRED, TOY)
    write_report(r, tmp_path / "r.json", tmp_path / "c.csv")
    rec = json.loads((tmp_path / "r.json").read_text())
    assert rec["official_f1"] == r.official_f1
    rows = list(csv.reader((tmp_path / "c.csv").open(newline="")))
    assert rows[0][1:] == list(TOY) and rows[1] == [CE12, "3", "1", "0", "0"]
    assert "macro F1 (official)" in r.table()


def fake_train(sentences, cfg):
    raise RuntimeError(f"boom {len(cfg.channels)}")


def test_grid_has_five_channel_rows_and_survives_failures():
    grid = channel_grid()
    assert [g["channels"] for g in grid] == [
        ("word",), ("word", "pos"), ("word", "gr"), ("word", "hypernym"), ("word", "pos", "gr", "hypernym")
    ]
    rows = ablation_run([], [], HyperConfig(), grid, train_fn=fake_train)
    assert len(rows) == 5 and all(r["error"].startswith("RuntimeError") for r in rows)
    assert "error" in ablation_table(rows)


@pytest.fixture(scope="module")
def small_corpus():
    return synth_corpus(3, 120, 40)


def test_single_cell_grid_is_train_plus_score(small_corpus):
    from sdplstm.deptree import sentence_to_sample
    from sdplstm.training import evaluate, train

    train_s, test_s = small_corpus
    cfg = HyperConfig(word_dim=8, pos_dim=4, gr_dim=4, hypernym_dim=4, hidden_dim=6, epochs=2, channels=("word",))
    (row,) = ablation_run(train_s, test_s, cfg, [{}])
    state = train(train_s, cfg)
    direct = evaluate(state.params, [sentence_to_sample(s, state.vocabs) for s in test_s], cfg)
    assert row["cell"] == "base" and row["report"].to_record() == direct.to_record()
    again = ablation_run(train_s, test_s, cfg, [{}])
    assert ablation_records(again) == ablation_records([row])


