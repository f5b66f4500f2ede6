"""The multichannel shortest-path network and its objective.

Layout for the default split-path configuration::

    for channel in (word, pos, gr, hypernym):        # enabled ones only
        for side in (left, right):
            embed -> embedding dropout -> recurrent cell -> max pool
    concat (word-left, word-right, pos-left, ..., hypernym-right)
    hidden = tanh(W_hidden concat + b_hidden) -> penultimate dropout
    probs  = softmax(W_out hidden + b_out)

In full-path mode each channel has a single cell, keyed ``"full"``, run over
the undivided entity-to-entity path.

Parameters are addressed by dotted names (``emb.word``,
``cell.word.left.W``, ``hidden.W``, ``out.b`` ...), which is also the order
used everywhere parameters are walked (init, checkpoints, gradient sums).
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from sdplstm._io import write_bytes
from sdplstm.channels import CHANNELS, EmbeddingTable, Vocab, dropout_mask
from sdplstm.numerics import DTYPE, Outer, make_rng, outer_sum, softmax, uniform
from sdplstm.recurrent import (
    CELL_DROPOUT_MODES,
    LstmParams,
    RnnParams,
    cell_backward,
    cell_forward,
    max_pool,
    max_pool_backward,
    param_arrays,
)

PROB_FLOOR = 1e-12
PENALIZED = ("W", "U", "W_in", "W_rec")


@dataclass(frozen=True)
class HyperConfig:
    word_dim: int = 200
    pos_dim: int = 50
    gr_dim: int = 50
    hypernym_dim: int = 50
    hidden_dim: int = 100
    n_classes: int = 19
    l2: float = 1e-5
    learning_rate: float = 0.05
    batch_size: int = 10
    epochs: int = 30
    patience: int = 5
    seed: int = 42
    dropout_embed: float = 0.5
    dropout_penultimate: float = 0.3
    dropout_cell: float = 0.0
    cell_dropout_modes: tuple = CELL_DROPOUT_MODES
    cell: str = "lstm"
    path: str = "split"
    channels: tuple = CHANNELS
    grad_clip: float = 0.0
    min_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "cell_dropout_modes", tuple(self.cell_dropout_modes))
        for name in ("dropout_embed", "dropout_penultimate", "dropout_cell"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.cell not in ("lstm", "rnn"):
            raise ValueError(f"cell must be 'lstm' or 'rnn', got {self.cell!r}")
        if self.path not in ("split", "full"):
            raise ValueError(f"path must be 'split' or 'full', got {self.path!r}")
        if "word" not in self.channels:
            raise ValueError("the word channel cannot be disabled")
        unknown = set(self.channels) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channels {sorted(unknown)}")
        if set(self.cell_dropout_modes) - set(CELL_DROPOUT_MODES):
            raise ValueError(f"cell dropout modes must be drawn from {CELL_DROPOUT_MODES}")
        if self.n_classes < 2 or self.hidden_dim < 1:
            raise ValueError("need at least 2 classes and a nonempty hidden layer")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0 (0 disables clipping)")

    @property
    def enabled(self):
        """Enabled channels in canonical order."""
        return tuple(ch for ch in CHANNELS if ch in self.channels)

    @property
    def sides(self):
        return ("left", "right") if self.path == "split" else ("full",)

    def dim(self, channel):
        return getattr(self, f"{channel}_dim")

    def cell_keys(self):
        return [(ch, side) for ch in self.enabled for side in self.sides]

    @property
    def concat_dim(self):
        return sum(self.dim(ch) for ch, _ in self.cell_keys())

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return HyperConfig(**values)


@dataclass
class ModelParams:
    embeddings: dict
    cells: dict
    W_hidden: np.ndarray
    b_hidden: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    def named_arrays(self):
        """``(name, array)`` for every trainable tensor, in canonical order."""
        out = [(f"emb.{ch}", table.vectors) for ch, table in self.embeddings.items()]
        for (ch, side), cell in self.cells.items():
            out.extend((f"cell.{ch}.{side}.{n}", a) for n, a in param_arrays(cell))
        out += [("hidden.W", self.W_hidden), ("hidden.b", self.b_hidden), ("out.W", self.W_out), ("out.b", self.b_out)]
        return out

    def copy(self):
        return ModelParams(
            {ch: EmbeddingTable(t.vocab, t.dim, t.vectors.copy(), t.trainable) for ch, t in self.embeddings.items()},
            {k: type(c)(*(a.copy() for _, a in param_arrays(c))) for k, c in self.cells.items()},
            self.W_hidden.copy(),
            self.b_hidden.copy(),
            self.W_out.copy(),
            self.b_out.copy(),
        )

    @property
    def vocabs(self):
        return {ch: t.vocab for ch, t in self.embeddings.items()}


def is_penalized(name):
    return not name.startswith("emb.") and name.rsplit(".", 1)[1] in PENALIZED


def init_params(cfg, vocabs, rng=None):
    """Random parameters; draws go embeddings, cells, hidden, output in canonical order."""
    rng = make_rng(cfg.seed) if rng is None else rng
    embeddings = {ch: EmbeddingTable.random(vocabs[ch], cfg.dim(ch), rng) for ch in cfg.enabled}
    cell_type = LstmParams if cfg.cell == "lstm" else RnnParams
    cells = {(ch, side): cell_type.init(cfg.dim(ch), cfg.dim(ch), rng) for ch, side in cfg.cell_keys()}
    W_hidden = uniform(rng, (cfg.hidden_dim, cfg.concat_dim), 1.0 / np.sqrt(cfg.concat_dim))
    W_out = uniform(rng, (cfg.n_classes, cfg.hidden_dim), 1.0 / np.sqrt(cfg.hidden_dim))
    return ModelParams(
        embeddings, cells, W_hidden, np.zeros(cfg.hidden_dim, dtype=DTYPE), W_out, np.zeros(cfg.n_classes, dtype=DTYPE)
    )


def zero_params(cfg, vocabs):
    params = init_params(cfg, vocabs, make_rng(0))
    for _, a in params.named_arrays():
        a[...] = 0.0
    return params


@dataclass
class Prediction:
    probs: np.ndarray
    label: int
    cross_entropy: Optional[float] = None


@dataclass
class _Branch:
    indices: np.ndarray
    emb_mask: Optional[np.ndarray]
    cell_tape: list
    argmax: np.ndarray


@dataclass
class Tape:
    branches: dict
    concat: np.ndarray
    hidden: np.ndarray
    pen_mask: Optional[np.ndarray]
    hidden_out: np.ndarray
    probs: np.ndarray
    cfg: HyperConfig = field(repr=False)


def _sequences(sample, cfg):
    if cfg.path == "split":
        return {"left": sample.left, "right": sample.right}
    return {"full": sample.full()}


def forward(params, sample, cfg, mode="infer", rng=None):
    """Class probabilities for one sample, plus the tape needed by ``backward``.

    Train mode draws embedding masks, inner-cell masks and the penultimate
    mask from ``rng`` in branch order; infer mode touches no randomness.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    training = mode == "train"
    if training and rng is None:
        raise ValueError("train mode needs an rng")
    seqs = _sequences(sample, cfg)
    branches = {}
    pools = []
    for ch, side in cfg.cell_keys():
        table = params.embeddings[ch]
        idx = np.asarray(getattr(seqs[side], ch), dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= table.vocab.size):
            raise ValueError(f"{ch} index out of range for vocabulary of size {table.vocab.size}")
        xs = table.vectors[idx]
        mask = None
        if training and cfg.dropout_embed > 0.0 and len(idx):
            mask = dropout_mask(xs.shape, cfg.dropout_embed, rng)
            xs = xs * mask
        cell = params.cells[(ch, side)]
        if cell.input_dim != table.dim:
            raise ValueError(f"{ch} cell expects {cell.input_dim}-d input, embeddings are {table.dim}-d")
        if training:
            hs, ctape = cell_forward(cell, xs, cfg.dropout_cell, cfg.cell_dropout_modes, rng)
        else:
            hs, ctape = cell_forward(cell, xs)
        pooled, arg = max_pool(hs, cell.hidden_dim)
        pools.append(pooled)
        branches[(ch, side)] = _Branch(idx, mask, ctape, arg)
    concat = np.concatenate(pools)
    if params.W_hidden.shape[1] != concat.shape[0]:
        raise ValueError(f"hidden layer expects {params.W_hidden.shape[1]} inputs, pooling gives {concat.shape[0]}")
    hidden = np.tanh(params.W_hidden @ concat + params.b_hidden)
    pen_mask = None
    hidden_out = hidden
    if training and cfg.dropout_penultimate > 0.0:
        pen_mask = dropout_mask(hidden.shape, cfg.dropout_penultimate, rng)
        hidden_out = hidden * pen_mask
    probs = softmax(params.W_out @ hidden_out + params.b_out)
    ce = None
    if sample.label is not None:
        if not 0 <= sample.label < len(probs):
            raise ValueError(f"label index {sample.label} outside {len(probs)} classes")
        ce = -float(np.log(max(probs[sample.label], PROB_FLOOR)))
    pred = Prediction(probs, int(np.argmax(probs)), ce)
    return pred, Tape(branches, concat, hidden, pen_mask, hidden_out, probs, cfg)


def penalty(params):
    """Sum of squared Frobenius norms of all weight matrices (no biases, no embeddings)."""
    if isinstance(params, ModelParams):
        arrays = [a for name, a in params.named_arrays() if is_penalized(name)]
    else:
        arrays = list(params)
    return float(sum(np.vdot(a, a) for a in arrays))


def objective(probs, targets, params, l2):
    """Summed floored cross-entropy over a batch plus ``l2 * penalty(params)``."""
    if len(probs) != len(targets):
        raise ValueError(f"{len(probs)} predictions but {len(targets)} targets")
    ce = 0.0
    for p, t in zip(probs, targets):
        p = p.probs if isinstance(p, Prediction) else np.asarray(p)
        if not 0 <= t < len(p):
            raise ValueError(f"target {t} outside {len(p)} classes")
        ce -= float(np.log(max(p[t], PROB_FLOOR)))
    return ce + (l2 * penalty(params) if l2 else 0.0)


def penalty_grads(params, l2, out=None):
    """``2 * l2 * W`` for every penalized matrix, optionally into ``out[name]``."""
    scale = 2.0 * l2
    if out is None:
        return {name: scale * a for name, a in params.named_arrays() if is_penalized(name)}
    return {name: np.multiply(a, scale, out=out[name]) for name, a in params.named_arrays() if is_penalized(name)}


def backward(tape, target, params, cfg, include_penalty=True, lazy=False):
    """Exact gradients of ``cross_entropy (+ l2 * penalty)`` for one sample.

    Dense tensors map to arrays; embedding tables map to ``{row: grad}``
    holding only looked-up rows.  Disabled channels have no entries.  With
    ``lazy`` every weight-matrix gradient is returned as an ``Outer`` pair
    for ``add_grads``/``finish_grads`` to sum later; the penalty must then
    be left out.
    """
    probs = tape.probs
    if not 0 <= target < len(probs):
        raise ValueError(f"target {target} outside {len(probs)} classes")
    if tape.cfg.cell_keys() != cfg.cell_keys():
        raise ValueError("tape was recorded under a different channel/path configuration")
    if lazy and include_penalty and cfg.l2:
        raise ValueError("lazy gradients cannot include the weight penalty")
    dlogits = probs.copy()
    dlogits[target] -= 1.0
    if probs[target] < PROB_FLOOR:
        dlogits[:] = 0.0  # loss is clamped here
    grads = {}
    dhidden = params.W_out.T @ dlogits
    if tape.pen_mask is not None:
        dhidden = dhidden * tape.pen_mask
    dpre = dhidden * (1.0 - tape.hidden ** 2)
    dconcat = params.W_hidden.T @ dpre

    offset = 0
    for ch, side in cfg.cell_keys():
        br = tape.branches[(ch, side)]
        cell = params.cells[(ch, side)]
        H = cell.hidden_dim
        dpool = dconcat[offset:offset + H]
        offset += H
        dhs = max_pool_backward(dpool, br.argmax, len(br.indices))
        cgrads, dxs = cell_backward(cell, br.cell_tape, dhs, lazy)
        for n, a in param_arrays(cgrads):
            grads[f"cell.{ch}.{side}.{n}"] = a
        if br.emb_mask is not None:
            dxs = dxs * br.emb_mask
        rows = grads.setdefault(f"emb.{ch}", {})
        for r, g in zip(br.indices.tolist(), dxs):
            rows[r] = rows[r] + g if r in rows else g.copy()

    grads["hidden.W"] = Outer(dpre[None], tape.concat[None])
    grads["hidden.b"] = dpre
    grads["out.W"] = Outer(dlogits[None], tape.hidden_out[None])
    grads["out.b"] = dlogits
    if not lazy:
        grads = {name: g.dense() if isinstance(g, Outer) else g for name, g in grads.items()}
    if include_penalty and cfg.l2:
        for name, g in penalty_grads(params, cfg.l2).items():
            grads[name] = grads[name] + g
    return _ordered(grads, params)


def _ordered(grads, params):
    return {name: grads[name] for name, _ in params.named_arrays() if name in grads}


def add_grads(total, grads):
    """Accumulate one example's ``grads`` into ``total`` in place.

    Embedding rows merge in arrival order, ``Outer`` terms queue up until
    ``finish_grads`` and other arrays are added at once.
    """
    for name, g in grads.items():
        if isinstance(g, dict):
            rows = total.setdefault(name, {})
            for r, v in g.items():
                rows[r] = rows[r] + v if r in rows else v.copy()
        elif isinstance(g, Outer):
            total.setdefault(name, []).append(g)
        elif name in total:
            np.add(total[name], g, out=total[name])
        else:
            total[name] = g.copy()
    return total


def finish_grads(total, storage=None):
    """Sum every queued ``Outer`` list in ``total``, into ``storage[name]`` when given."""
    for name, g in total.items():
        if isinstance(g, list):
            out = storage[name] if storage is not None and name in storage else np.empty(g[0].shape, dtype=DTYPE)
            total[name] = outer_sum(g, out)
    return total


def dense_grad(g, shape):
    """Densify an embedding gradient; dense arrays pass through."""
    if not isinstance(g, dict):
        return g
    out = np.zeros(shape, dtype=DTYPE)
    for r, v in g.items():
        out[r] = v
    return out


def predict(params, samples, cfg):
    return [forward(params, s, cfg, "infer")[0] for s in samples]


# ---------------------------------------------------------------- checkpoints

MAGIC = b"SDPLSTM\x00"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _config_to_json(cfg):
    d = asdict(cfg)
    d["channels"] = list(cfg.channels)
    d["cell_dropout_modes"] = list(cfg.cell_dropout_modes)
    return d


def checkpoint_bytes(params, cfg, vocabs=None):
    """Serialize a model together with its config and vocabularies.

    Layout: magic, u32 version, u64 header length, JSON header (sorted
    keys), little-endian float64 payload, SHA-256 of everything before it.
    """
    vocabs = params.vocabs if vocabs is None else vocabs
    arrays = params.named_arrays()
    manifest, offset = [], 0
    for name, a in arrays:
        manifest.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size * 8
    header = {
        "format": "sdplstm-checkpoint",
        "version": CHECKPOINT_VERSION,
        "seed": cfg.seed,
        "config": _config_to_json(cfg),
        "vocabs": {ch: {"symbols": list(v.symbols), "mapping": v.mapping} for ch, v in vocabs.items()},
        "arrays": manifest,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(head)) + head
    body += b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(params, cfg, vocabs, path):
    write_bytes(path, checkpoint_bytes(params, cfg, vocabs))


def checkpoint_from_bytes(data):
    if len(data) < len(MAGIC) + 12 + 32:
        raise CheckpointError("checkpoint is truncated")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (corrupt or truncated file)")
    if body[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not an sdplstm checkpoint")
    version, head_len = struct.unpack_from("<IQ", body, len(MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}")
    start = len(MAGIC) + 12
    header = json.loads(body[start:start + head_len].decode("utf-8"))
    payload = memoryview(body)[start + head_len:]
    cfg_fields = {f.name for f in fields(HyperConfig)}
    cfg = HyperConfig(**{k: v for k, v in header["config"].items() if k in cfg_fields})
    vocabs = {ch: Vocab(ch, tuple(v["symbols"]), v["mapping"]) for ch, v in header["vocabs"].items()}
    params = zero_params(cfg, vocabs)
    by_name = dict(params.named_arrays())
    if [m["name"] for m in header["arrays"]] != list(by_name):
        raise CheckpointError("checkpoint tensors do not match its configuration")
    for m in header["arrays"]:
        target = by_name[m["name"]]
        if list(target.shape) != m["shape"]:
            raise CheckpointError(f"shape mismatch for {m['name']}")
        n = target.size * 8
        target[...] = np.frombuffer(payload[m["offset"]:m["offset"] + n], dtype="<f8").reshape(target.shape)
    return params, cfg, vocabs


def load_checkpoint(path):
    with open(path, "rb") as f:
        return checkpoint_from_bytes(f.read())
