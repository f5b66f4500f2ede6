"""Mini-batch SGD with validation-based model selection, and gradient checking.

Reproducibility rules:

* the validation split is the last tenth of the training sentences after a
  permutation drawn from ``make_rng(seed, 1)``;
* the run generator ``make_rng(seed)`` draws the initial parameters and then
  one permutation of the training set per epoch;
* every example's dropout masks come from ``make_rng(seed, epoch, i)`` with
  ``i`` the example's position in the training split;
* gradients within a batch are summed in example order, then the weight
  penalty gradient is added once.
"""

import json
import logging
import time
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sdplstm._io import atomic_open
from sdplstm.channels import CHANNELS, UNK, Vocab, build_vocabs, load_pretrained
from sdplstm.deptree import SdpSample, SubPath, sentence_to_sample
from sdplstm.evaluation import score
from sdplstm.labels import LABELS
from sdplstm.model import (
    HyperConfig,
    add_grads,
    backward,
    dense_grad,
    finish_grads,
    forward,
    init_params,
    objective,
    penalty,
    penalty_grads,
    predict,
    save_checkpoint,
)
from sdplstm.numerics import make_rng

log = logging.getLogger(__name__)

SPLIT_STREAM = 1


class DivergenceError(FloatingPointError):
    pass


@dataclass
class TrainState:
    epoch: int = 0
    best_val_f1: float = -1.0
    best_epoch: int = 0
    best_checkpoint: Optional[str] = None
    patience_counter: int = 0
    records: list = field(default_factory=list)
    params: object = None
    vocabs: dict = None
    cfg: HyperConfig = None


def split_validation(sentences, seed):
    """``(train, validation)``: the last tenth after a seeded shuffle."""
    perm = make_rng(seed, SPLIT_STREAM).permutation(len(sentences))
    shuffled = [sentences[i] for i in perm]
    n_val = len(shuffled) // 10
    if n_val == 0:
        return shuffled, shuffled
    return shuffled[:-n_val], shuffled[-n_val:]


def sgd_step(params, grads, lr, consume=False):
    """``theta -= lr * grad``; with ``consume`` the dense gradients are scaled in place."""
    arrays = dict(params.named_arrays())
    for name, g in grads.items():
        target = arrays[name]
        if isinstance(g, dict):
            for r, v in g.items():
                target[r] -= lr * v
        elif consume:
            g *= lr
            target -= g
        else:
            target -= lr * g


def clip_grads(grads, max_norm):
    sq = 0.0
    for g in grads.values():
        vals = g.values() if isinstance(g, dict) else [g]
        sq += sum(float(np.sum(np.square(v))) for v in vals)
    norm = np.sqrt(sq)
    if norm <= max_norm:
        return grads
    s = max_norm / norm
    return {n: ({r: v * s for r, v in g.items()} if isinstance(g, dict) else g * s) for n, g in grads.items()}


class GradBuffers:
    """Reusable arrays for the dense batch totals of ``batch_gradient`` and the penalty term."""

    def __init__(self, params):
        dense = [(name, a) for name, a in params.named_arrays() if not name.startswith("emb.")]
        self.total = {name: np.empty_like(a) for name, a in dense}
        self.penalty = {name: np.empty_like(a) for name, a in dense}


def batch_gradient(params, samples, cfg, rngs, buffers=None):
    """Summed objective and gradient over one batch (data terms in order, then penalty).

    With ``buffers`` the returned dense gradients live in ``buffers.total``
    and are overwritten by the next call.
    """
    grads = {}
    loss = 0.0
    for sample, rng in zip(samples, rngs):
        pred, tape = forward(params, sample, cfg, "train", rng)
        loss += pred.cross_entropy
        add_grads(grads, backward(tape, sample.label, params, cfg, include_penalty=False, lazy=True))
    finish_grads(grads, None if buffers is None else buffers.total)
    if cfg.l2:
        loss += cfg.l2 * penalty(params)
        add_grads(grads, penalty_grads(params, cfg.l2, None if buffers is None else buffers.penalty))
    return loss, grads


def evaluate(params, samples, cfg):
    preds = predict(params, samples, cfg)
    return score([LABELS[s.label] for s in samples], [LABELS[p.label] for p in preds])


def _rng_position(rng):
    return format(rng.bit_generator.state["state"]["state"], "x")


def _run_epoch(epoch, params, train_samples, val_samples, cfg, run_rng, state, buffers):
    t0 = time.perf_counter()
    order = run_rng.permutation(len(train_samples))
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        batch = [train_samples[i] for i in idx]
        rngs = [make_rng(cfg.seed, epoch, int(i)) for i in idx]
        loss, grads = batch_gradient(params, batch, cfg, rngs, buffers)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became {loss} in epoch {epoch} at batch starting {start}")
        if cfg.grad_clip:
            grads = clip_grads(grads, cfg.grad_clip)
        sgd_step(params, grads, cfg.learning_rate, consume=True)
        total += loss
    report = evaluate(params, val_samples, cfg)
    val_f1 = report.headline_f1
    state.epoch = epoch
    if val_f1 > state.best_val_f1:
        state.best_val_f1 = val_f1
        state.best_epoch = epoch
        state.patience_counter = 0
        state.params = params.copy()
        if state.best_checkpoint:
            save_checkpoint(params, cfg, state.vocabs, state.best_checkpoint)
    else:
        state.patience_counter += 1
    log.info("epoch %d loss %.4f val F1 %.2f acc %.2f", epoch, total / len(train_samples), val_f1, report.accuracy)
    return {
        "epoch": epoch,
        "train_loss": total / len(train_samples),
        "val_f1": val_f1,
        "val_acc": report.accuracy,
        "best_val_f1": state.best_val_f1,
        "rng": _rng_position(run_rng),
        "seconds": time.perf_counter() - t0,
    }


def train(sentences, cfg, val_sentences=None, pretrained=None, checkpoint_path=None, log_path=None):
    """Train on ``sentences`` and return the state holding the best parameters.

    If ``val_sentences`` is None the validation set is split off the
    training sentences.  ``log_path`` receives one JSON object per epoch.
    """
    if not sentences:
        raise ValueError("training set is empty")
    if val_sentences is None:
        train_sents, val_sents = split_validation(sentences, cfg.seed)
    else:
        train_sents, val_sents = list(sentences), list(val_sentences)
    vocabs = build_vocabs(train_sents, cfg.enabled, cfg.min_count)
    run_rng = make_rng(cfg.seed)
    params = init_params(cfg, vocabs, run_rng)
    if pretrained:
        n = load_pretrained(params.embeddings["word"], pretrained)
        log.info("initialized %d word vectors from %s", n, pretrained)
    train_samples = [sentence_to_sample(s, vocabs) for s in train_sents]
    val_samples = [sentence_to_sample(s, vocabs) for s in val_sents]
    present = {s.label for s in train_samples}
    missing = [label for i, label in enumerate(LABELS) if i not in present]
    if missing:
        log.warning("no training examples for %d classes: %s", len(missing), ", ".join(missing))

    state = TrainState(params=params.copy(), vocabs=vocabs, cfg=cfg, best_checkpoint=checkpoint_path)
    buffers = GradBuffers(params)
    log_ctx = atomic_open(log_path, "w", encoding="utf-8", newline="\n") if log_path else nullcontext()
    with log_ctx as f:
        for epoch in range(1, cfg.epochs + 1):
            state.records.append(_run_epoch(epoch, params, train_samples, val_samples, cfg, run_rng, state, buffers))
            if f:
                f.write(json.dumps({k: v for k, v in state.records[-1].items() if k != "seconds"}, sort_keys=True) + "\n")
            if state.patience_counter >= cfg.patience:
                break
    return state


# ------------------------------------------------------------ gradient check

TINY = HyperConfig(
    word_dim=4, pos_dim=2, gr_dim=2, hypernym_dim=2, hidden_dim=5, n_classes=3,
    l2=0.0, dropout_embed=0.0, dropout_penultimate=0.0,
)
GRADCHECK_VOCAB = 5
REL_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=REL_FLOOR):
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps exact zeros from blowing up."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def random_samples(rng, n, n_classes, max_nodes=4):
    """Random index-level samples over ``tiny_vocabs``, whole paths of 2..max_nodes nodes."""
    samples = []
    for _ in range(n):
        total = int(rng.integers(2, max_nodes + 1))  # nodes on the whole path
        n_left = int(rng.integers(1, total + 1))
        n_right = total - n_left + 1

        def side(k):
            seqs = {ch: tuple(int(v) for v in rng.integers(0, GRADCHECK_VOCAB, size=k)) for ch in CHANNELS}
            seqs["gr"] = seqs["gr"][:-1]
            return SubPath(**seqs)

        samples.append(SdpSample(side(n_left), side(n_right), int(rng.integers(n_classes))))
    return samples


def tiny_vocabs():
    return {ch: Vocab(ch, (UNK, *(f"{ch}{i}" for i in range(1, GRADCHECK_VOCAB)))) for ch in CHANNELS}


def check_config(cfg, n_samples=5, seed=0, h=1e-5, mask_seed=12345):
    """Central-difference check of every trainable coordinate of one configuration.

    Returns ``{tensor name: (max_rel_err, p99_rel_err)}``.  Dropout masks are
    frozen by replaying the same rng for every loss evaluation.
    """
    rng = make_rng(seed)
    params = init_params(cfg, tiny_vocabs(), rng)
    for _, a in params.named_arrays():
        a[...] = rng.uniform(-0.5, 0.5, size=a.shape)
    samples = random_samples(rng, n_samples, cfg.n_classes)
    train_mode = cfg.dropout_embed > 0 or cfg.dropout_penultimate > 0 or cfg.dropout_cell > 0
    mode = "train" if train_mode else "infer"
    errors = {name: [] for name, _ in params.named_arrays()}
    arrays = params.named_arrays()
    for k, sample in enumerate(samples):

        def loss():
            r = make_rng(mask_seed, k)
            pred, _ = forward(params, sample, cfg, mode, r if train_mode else None)
            return objective([pred], [sample.label], params, cfg.l2)

        _, tape = forward(params, sample, cfg, mode, make_rng(mask_seed, k) if train_mode else None)
        grads = backward(tape, sample.label, params, cfg)
        for name, a in arrays:
            analytic = dense_grad(grads[name], a.shape) if name in grads else np.zeros_like(a)
            numeric = np.empty_like(a)
            flat = a.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + h
                up = loss()
                flat[j] = old - h
                down = loss()
                flat[j] = old
                numeric.flat[j] = (up - down) / (2 * h)
            errors[name].append(relative_error(analytic, numeric).reshape(-1))
    return {name: (float(np.max(np.concatenate(e))), float(np.percentile(np.concatenate(e), 99))) for name, e in errors.items()}


@dataclass
class GradCheckEntry:
    cell: str
    path: str
    l2: float
    dropout: bool
    tensor: str
    max_err: float
    p99_err: float

    def passed(self, p99_tol=1e-4, max_tol=1e-3):
        return self.p99_err < p99_tol and self.max_err < max_tol


def grad_check(base=TINY, cells=("lstm", "rnn"), paths=("split", "full"), l2_values=(0.0, 1e-2),
               dropouts=(False, True), n_samples=5, seed=0):
    """Run ``check_config`` over the variant grid; dropout means frozen-mask embedding dropout 0.5."""
    entries = []
    for cell in cells:
        for path in paths:
            for l2 in l2_values:
                for dropout in dropouts:
                    cfg = base.replace(cell=cell, path=path, l2=l2, dropout_embed=0.5 if dropout else 0.0)
                    for tensor, (mx, p99) in check_config(cfg, n_samples, seed).items():
                        entries.append(GradCheckEntry(cell, path, l2, dropout, tensor, mx, p99))
    return entries
