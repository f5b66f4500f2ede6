"""A single LSTM cell: forward pass, gate values and a hand-rolled gradient check."""

import numpy as np

from sdplstm.numerics import make_rng
from sdplstm.recurrent import LstmParams, lstm_backward, lstm_forward, max_pool

rng = make_rng(0)
cell = LstmParams.init(input_dim=3, hidden_dim=4, rng=rng)
xs = rng.normal(size=(5, 3))

hs, tape = lstm_forward(cell, xs)
print("hidden states, one row per step:\n", hs.round(4))
print("forget gate at the last step:", tape[-1].f.round(3))

pooled, argmax = max_pool(hs, 4)
print("max-pooled:", pooled.round(4), "taken from steps", argmax)

# Treat sum(hs * R) as a loss and compare backprop with central differences.
R = rng.normal(size=hs.shape)
grads, dxs = lstm_backward(cell, tape, R)

def loss():
    return float(np.sum(lstm_forward(cell, xs)[0] * R))

h = 1e-5
worst = 0.0
for name in ("W", "U", "b"):
    arr, ana = getattr(cell, name), getattr(grads, name)
    for idx in np.ndindex(arr.shape):
        keep = arr[idx]
        arr[idx] = keep + h
        up = loss()
        arr[idx] = keep - h
        down = loss()
        arr[idx] = keep
        num = (up - down) / (2 * h)
        worst = max(worst, abs(num - ana[idx]) / max(abs(num), abs(ana[idx]), 1e-6))
print(f"largest relative error over W, U, b: {worst:.2e}")

# Dropout on the hidden state: masks are drawn once and kept on the tape,
# so the backward pass sees exactly the same zeros.
_, tape_drop = lstm_forward(cell, xs, rate=0.5, modes=("h",), rng=make_rng(1))
print("masked steps keep", [int(np.count_nonzero(s.masks["h"])) for s in tape_drop], "of 4 units")
