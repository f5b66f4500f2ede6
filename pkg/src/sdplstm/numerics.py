"""Small dense kernels shared by the recurrent and output layers.

Everything is float64. Randomness comes from numpy's PCG64 bit generator
(``numpy.random.Generator(PCG64(seed))``); its 128-bit LCG state update and
XSL-RR output are platform independent, so a given seed always yields the
same stream.
"""

from typing import NamedTuple

import numpy as np
from scipy.special import expit

DTYPE = np.float64


def make_rng(seed, *stream):
    """Return a PCG64 generator for ``seed``.

    Extra integers select an independent substream, e.g. ``make_rng(seed,
    epoch, index)``; they are mixed in through ``SeedSequence``.
    """
    if stream:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_vec(values):
    v = np.asarray(values, dtype=DTYPE)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return v


def matvec(m, v):
    m = np.asarray(m, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def sigmoid(v):
    return expit(np.asarray(v, dtype=DTYPE))


def tanh_v(v):
    return np.tanh(np.asarray(v, dtype=DTYPE))


def hadamard(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def softmax(v):
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    z = np.exp(v - v.max())
    return z / z.sum()


def uniform(rng, shape, scale):
    """Uniform draws in [-scale, scale]."""
    return rng.uniform(-scale, scale, size=shape).astype(DTYPE)


BLOCK_BYTES = 1 << 18


class Outer(NamedTuple):
    """The matrix ``a.T @ b`` held as its two thin factors (rows are timesteps)."""

    a: np.ndarray
    b: np.ndarray

    @property
    def shape(self):
        return (self.a.shape[1], self.b.shape[1])

    def dense(self):
        return outer_sum([self], np.empty(self.shape, dtype=DTYPE))


def outer_sum(terms, out):
    """``out = sum(t.a.T @ t.b for t in terms)``, added left to right.

    ``out`` is filled in row blocks that stay in cache, and every product is
    formed block by block, so one term alone gives bit-for-bit the same
    values it contributes to a longer sum.
    """
    m, n = out.shape
    terms = [t for t in terms if len(t.a)]  # empty factors contribute exact zeros
    if not terms:
        out[...] = 0.0
        return out
    step = max(1, BLOCK_BYTES // (8 * max(n, 1)))
    tmp = np.empty((min(step, m), n), dtype=DTYPE)
    for r0 in range(0, m, step):
        acc = out[r0:r0 + step]
        part = tmp[:len(acc)]
        for k, t in enumerate(terms):
            np.matmul(t.a[:, r0:r0 + step].T, t.b, out=part)
            if k:
                acc += part
            else:
                acc[...] = part
    return out
