"""LSTM and plain tanh RNN cells with exact backpropagation through time.

The LSTM keeps its four gate blocks stacked in one matrix per connection,
rows ordered input, forget, output, candidate::

    z   = W x_t + U h_{t-1} + b            (4H)
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o)
    g   = tanh(z_g)
    c_t = i*g + f*c_{t-1}
    h_t = o*tanh(c_t)

``W_i``, ``U_f`` ... are views into the stacked arrays.

Inner-cell dropout may mask any of i, g, o, c, h.  Masked c and h values
are the ones carried to the next step.  Masks live on the tape so the
backward pass sees exactly the forward's masks.
"""

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from sdplstm.channels import dropout_mask
from sdplstm.numerics import DTYPE, Outer, uniform

CELL_DROPOUT_MODES = ("i", "g", "o", "c", "h")


def _gate(k):
    def get(self):
        h = self.hidden_dim
        return self.W[k * h:(k + 1) * h]

    return property(get)


def _rgate(k):
    def get(self):
        h = self.hidden_dim
        return self.U[k * h:(k + 1) * h]

    return property(get)


def _bgate(k):
    def get(self):
        h = self.hidden_dim
        return self.b[k * h:(k + 1) * h]

    return property(get)


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    W_i, W_f, W_o, W_g = (_gate(k) for k in range(4))
    U_i, U_f, U_o, U_g = (_rgate(k) for k in range(4))
    b_i, b_f, b_o, b_g = (_bgate(k) for k in range(4))

    def __post_init__(self):
        h4, d = self.W.shape
        if h4 % 4 or self.U.shape != (h4, h4 // 4) or self.b.shape != (h4,):
            raise ValueError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden_dim(self):
        return self.W.shape[0] // 4

    @property
    def input_dim(self):
        return self.W.shape[1]

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        """W, U uniform in +-1/sqrt(fan-in); zero biases."""
        W = uniform(rng, (4 * hidden_dim, input_dim), 1.0 / np.sqrt(input_dim))
        U = uniform(rng, (4 * hidden_dim, hidden_dim), 1.0 / np.sqrt(hidden_dim))
        return cls(W, U, np.zeros(4 * hidden_dim, dtype=DTYPE))

    @classmethod
    def zeros(cls, input_dim, hidden_dim):
        return cls(
            np.zeros((4 * hidden_dim, input_dim)),
            np.zeros((4 * hidden_dim, hidden_dim)),
            np.zeros(4 * hidden_dim),
        )


@dataclass
class RnnParams:
    W_in: np.ndarray  # (H, D)
    W_rec: np.ndarray  # (H, H)
    b_h: np.ndarray  # (H,)

    def __post_init__(self):
        h = self.W_in.shape[0]
        if self.W_rec.shape != (h, h) or self.b_h.shape != (h,):
            raise ValueError(f"inconsistent RNN shapes W_in{self.W_in.shape} W_rec{self.W_rec.shape} b_h{self.b_h.shape}")

    @property
    def hidden_dim(self):
        return self.W_in.shape[0]

    @property
    def input_dim(self):
        return self.W_in.shape[1]

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        W_in = uniform(rng, (hidden_dim, input_dim), 1.0 / np.sqrt(input_dim))
        W_rec = uniform(rng, (hidden_dim, hidden_dim), 1.0 / np.sqrt(hidden_dim))
        return cls(W_in, W_rec, np.zeros(hidden_dim, dtype=DTYPE))

    @classmethod
    def zeros(cls, input_dim, hidden_dim):
        return cls(np.zeros((hidden_dim, input_dim)), np.zeros((hidden_dim, hidden_dim)), np.zeros(hidden_dim))


def param_arrays(p):
    """``(name, array)`` pairs of a cell's tensors."""
    return [(f.name, getattr(p, f.name)) for f in fields(p)]


class StepTape(NamedTuple):
    """Per-step cache; gates are stored before masking, c and h after.

    ``gates`` is the stacked ``(i, f, o, g)`` vector the gate fields view into.
    """

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    masks: dict
    gates: np.ndarray


def _check_step_shapes(p, x, h_prev, t=None):
    where = "" if t is None else f" at timestep {t}"
    if x.shape != (p.input_dim,):
        raise ValueError(f"input{where} has shape {x.shape}, cell expects ({p.input_dim},)")
    if h_prev.shape != (p.hidden_dim,):
        raise ValueError(f"hidden state{where} has shape {h_prev.shape}, cell expects ({p.hidden_dim},)")


def _step(W, U, b, H, x_t, h_prev, c_prev, masks):
    z = W @ x_t
    if h_prev.any():  # U @ 0 adds nothing
        z += U @ h_prev
    z += b
    expit(z[:3 * H], out=z[:3 * H])
    np.tanh(z[3 * H:], out=z[3 * H:])
    i, f, o, g = z[:H], z[H:2 * H], z[2 * H:3 * H], z[3 * H:]
    if masks:
        i_m = i * masks["i"] if "i" in masks else i
        g_m = g * masks["g"] if "g" in masks else g
        o_m = o * masks["o"] if "o" in masks else o
    else:
        i_m, g_m, o_m = i, g, o
    c = i_m * g_m
    c += f * c_prev
    if "c" in masks:
        c *= masks["c"]
    tanh_c = np.tanh(c)
    h = o_m * tanh_c
    if "h" in masks:
        h *= masks["h"]
    return h, c, StepTape(x_t, h_prev, c_prev, i, f, o, g, c, tanh_c, h, masks, z)


def lstm_step(p, x_t, h_prev, c_prev, masks=None):
    """One LSTM step; ``masks`` optionally maps a mode in i/g/o/c/h to a mask vector."""
    x_t = np.asarray(x_t, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    c_prev = np.asarray(c_prev, dtype=DTYPE)
    _check_step_shapes(p, x_t, h_prev)
    if c_prev.shape != h_prev.shape:
        raise ValueError(f"cell state has shape {c_prev.shape}, expected {h_prev.shape}")
    return _step(p.W, p.U, p.b, p.hidden_dim, x_t, h_prev, c_prev, masks or {})


def draw_cell_masks(hidden_dim, modes, rate, rng):
    """Masks for one step, drawn in the fixed order i, g, o, c, h."""
    if not modes or rate == 0.0:
        return {}
    return {m: dropout_mask(hidden_dim, rate, rng) for m in CELL_DROPOUT_MODES if m in modes}


def lstm_forward(p, xs, rate=0.0, modes=(), rng=None, masks=None):
    """Run the LSTM over ``xs`` from zero initial state.

    Returns ``(hs, tape)`` with ``hs`` a ``(T, H)`` array.  Inner-cell
    dropout is applied when ``rate > 0`` and ``modes`` is nonempty (masks
    drawn from ``rng``), or when explicit per-step ``masks`` are given.
    """
    xs = np.asarray(xs, dtype=DTYPE).reshape(len(xs), -1) if len(xs) else np.zeros((0, p.input_dim))
    if xs.shape[1] != p.input_dim:
        raise ValueError(f"input at timestep 0 has shape {xs.shape[1:]}, cell expects ({p.input_dim},)")
    H = p.hidden_dim
    W, U, b = p.W, p.U, p.b
    h = np.zeros(H, dtype=DTYPE)
    c = np.zeros(H, dtype=DTYPE)
    hs = np.zeros((len(xs), H), dtype=DTYPE)
    drop = bool(modes) and rate > 0.0
    tape = []
    for t, x in enumerate(xs):
        if masks is not None:
            step_masks = masks[t] or {}
        elif drop:
            step_masks = draw_cell_masks(H, modes, rate, rng)
        else:
            step_masks = {}
        h, c, entry = _step(W, U, b, H, x, h, c, step_masks)
        hs[t] = h
        tape.append(entry)
    return hs, tape


def _stack_masks(tape, mode, H):
    if not any(mode in s.masks for s in tape):
        return None
    ones = np.ones(H, dtype=DTYPE)
    return np.stack([s.masks.get(mode, ones) for s in tape])


def _param_grads(cls, dZ, X, Hprev, lazy):
    """``(dZ^T X, dZ[1:]^T Hprev, sum dZ)``; with ``lazy`` the two matrices stay as ``Outer`` factors."""
    dW, dU = Outer(dZ, X), Outer(dZ[1:], Hprev)
    if not lazy:
        dW, dU = dW.dense(), dU.dense()
    return cls(dW, dU, dZ.sum(axis=0))


def lstm_backward(p, tape, grad_hs, lazy=False):
    """Gradients w.r.t. every LSTM tensor and each input, given dLoss/dh_t.

    Everything except the h/c recurrence is computed for all timesteps at
    once; the loop only carries ``dh`` and ``dc`` backwards.
    """
    grad_hs = np.asarray(grad_hs, dtype=DTYPE)
    T = len(tape)
    if len(grad_hs) != T:
        raise ValueError(f"tape has {T} steps but {len(grad_hs)} hidden-state gradients were given")
    H = p.hidden_dim
    if T == 0:
        empty = np.zeros((0, p.input_dim), dtype=DTYPE)
        return _param_grads(LstmParams, np.zeros((0, 4 * H)), empty, np.zeros((0, H)), lazy), empty
    A = np.stack([s.gates for s in tape]).reshape(T, 4, H)
    i, f, o, g = A[:, 0], A[:, 1], A[:, 2], A[:, 3]
    c_prev = np.stack([s.c_prev for s in tape])
    tanh_c = np.stack([s.tanh_c for s in tape])
    m = {mode: _stack_masks(tape, mode, H) for mode in CELL_DROPOUT_MODES}
    i_m = i if m["i"] is None else i * m["i"]
    g_m = g if m["g"] is None else g * m["g"]
    o_m = o if m["o"] is None else o * m["o"]

    # dZ[t] = K[t] * (dc_t, dc_t, dh_t, dc_t) with dh, dc taken after masking
    K = np.empty_like(A)
    K[:, :3] = A[:, :3] * (1.0 - A[:, :3])
    K[:, 3] = 1.0 - g * g
    K[:, 0] *= g_m if m["i"] is None else g_m * m["i"]
    K[:, 1] *= c_prev
    K[:, 2] *= tanh_c if m["o"] is None else tanh_c * m["o"]
    K[:, 3] *= i_m if m["g"] is None else i_m * m["g"]
    P = o_m * (1.0 - tanh_c * tanh_c)  # d c-path per unit (masked) dh
    F = f
    if m["c"] is not None:
        K[:, (0, 1, 3)] *= m["c"][:, None, :]
        F = f * m["c"]
    if m["h"] is not None:
        K[:, 2] *= m["h"]
        P = P * m["h"]

    dZ = np.empty((T, 4, H), dtype=DTYPE)
    UT = p.U.T
    dh = grad_hs[T - 1]
    dc = np.zeros(H, dtype=DTYPE)
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            dh = grad_hs[t] + UT @ dZ[t + 1].reshape(-1)
        dc += dh * P[t]
        np.multiply(K[t], dc, out=dZ[t])
        np.multiply(K[t, 2], dh, out=dZ[t, 2])
        dc *= F[t]
    dZ = dZ.reshape(T, 4 * H)
    X = np.stack([s.x for s in tape])
    Hprev = np.stack([s.h_prev for s in tape[1:]]) if T > 1 else np.zeros((0, H))
    # h_0 = 0, so step 0 adds nothing to dU
    return _param_grads(LstmParams, dZ, X, Hprev, lazy), dZ @ p.W


def rnn_step(p, x_t, h_prev, mask=None):
    x_t = np.asarray(x_t, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    _check_step_shapes(p, x_t, h_prev)
    h = np.tanh(p.W_in @ x_t + p.W_rec @ h_prev + p.b_h)
    raw = h
    if mask is not None:
        h = h * mask
    return h, (x_t, h_prev, raw, mask)


def rnn_forward(p, xs, rate=0.0, modes=(), rng=None):
    """``h_t = tanh(W_in x_t + W_rec h_{t-1} + b_h)`` from ``h_0 = 0``.

    Only the ``h`` inner-cell dropout mode applies to this cell.
    """
    xs = np.asarray(xs, dtype=DTYPE).reshape(len(xs), -1) if len(xs) else np.zeros((0, p.input_dim))
    H = p.hidden_dim
    h = np.zeros(H, dtype=DTYPE)
    hs = np.zeros((len(xs), H), dtype=DTYPE)
    tape = []
    drop = "h" in modes and rate > 0.0
    for t, x in enumerate(xs):
        if x.shape != (p.input_dim,):
            raise ValueError(f"input at timestep {t} has shape {x.shape}, cell expects ({p.input_dim},)")
        h, entry = rnn_step(p, x, h, dropout_mask(H, rate, rng) if drop else None)
        hs[t] = h
        tape.append(entry)
    return hs, tape


def rnn_backward(p, tape, grad_hs, lazy=False):
    grad_hs = np.asarray(grad_hs, dtype=DTYPE)
    T = len(tape)
    if len(grad_hs) != T:
        raise ValueError(f"tape has {T} steps but {len(grad_hs)} hidden-state gradients were given")
    H = p.hidden_dim
    if T == 0:
        empty = np.zeros((0, p.input_dim), dtype=DTYPE)
        return _param_grads(RnnParams, np.zeros((0, H)), empty, np.zeros((0, H)), lazy), empty
    dZ = np.empty((T, H), dtype=DTYPE)
    dh_next = np.zeros(p.hidden_dim, dtype=DTYPE)
    for t in range(T - 1, -1, -1):
        _, _, raw, mask = tape[t]
        dh = grad_hs[t] + dh_next
        if mask is not None:
            dh = dh * mask
        dZ[t] = dh * (1.0 - raw ** 2)
        dh_next = p.W_rec.T @ dZ[t]
    X = np.stack([e[0] for e in tape])
    Hprev = np.stack([e[1] for e in tape[1:]]) if T > 1 else np.zeros((0, p.hidden_dim))
    return _param_grads(RnnParams, dZ, X, Hprev, lazy), dZ @ p.W_in


def cell_forward(p, xs, rate=0.0, modes=(), rng=None):
    if isinstance(p, LstmParams):
        return lstm_forward(p, xs, rate, modes, rng)
    return rnn_forward(p, xs, rate, modes, rng)


def cell_backward(p, tape, grad_hs, lazy=False):
    if isinstance(p, LstmParams):
        return lstm_backward(p, tape, grad_hs, lazy)
    return rnn_backward(p, tape, grad_hs, lazy)


def max_pool(hs, dim):
    """Coordinatewise max over timesteps and the (earliest) argmax per coordinate.

    An empty sequence pools to the zero vector with an empty argmax record.
    """
    hs = np.asarray(hs, dtype=DTYPE)
    if len(hs) == 0:
        return np.zeros(dim, dtype=DTYPE), np.zeros(0, dtype=np.intp)
    hs = hs.reshape(len(hs), dim)
    arg = np.argmax(hs, axis=0)
    return hs[arg, np.arange(dim)], arg


def max_pool_backward(grad, argmax, length):
    """Route each pooled coordinate's gradient to its argmax timestep."""
    grad = np.asarray(grad, dtype=DTYPE)
    out = np.zeros((length, grad.shape[0]), dtype=DTYPE)
    if length:
        out[argmax, np.arange(grad.shape[0])] = grad
    return out
