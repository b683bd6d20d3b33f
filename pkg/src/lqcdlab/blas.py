"""Per-column vector kernels on block spinor fields.

All kernels treat the b columns independently and return per-column results.
``block_dot`` has two strategies:

* ``naive``: one reduction per column over the logical view.
* ``deferred``: lane-parallel partial sums over the flat storage stream with
  the per-column separation done once at the end.  For component-major data
  (Layout 2) consecutive stream positions cycle through the columns, so a
  lane accumulator of width L = ceil(8/b)*b (or b itself once b >= 8) keeps
  every lane pinned to a single column without any shuffling; lane j feeds
  column j mod b.  Column-major data (Layout 1) is already separated, so
  there the deferred strategy runs 8 lanes inside each column's stream.

A short zero pad brings the stream up to a whole number of lane groups; the
pad contributes exact zeros.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import BlockSpinorField, Layout

ACC_LANES = 8  # complex accumulator lanes in the deferred dot

DOT_STRATEGIES = ("naive", "deferred")


def _check_pair(x: BlockSpinorField, y: BlockSpinorField) -> None:
    if (x.n_sites, x.s, x.b) != (y.n_sites, y.s, y.b):
        raise ValueError(
            f"field shapes differ: ({x.n_sites},{x.s},{x.b}) vs ({y.n_sites},{y.s},{y.b})"
        )
    if x.layout != y.layout:
        raise ValueError(f"field layouts differ: {x.layout} vs {y.layout}")


def _as_coeffs(alpha, b: int) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.complex128)
    if a.ndim == 0:
        a = np.full(b, a)
    if a.shape != (b,):
        raise ValueError(f"expected {b} coefficients, got shape {a.shape}")
    return a


def block_axpy(alpha, x: BlockSpinorField, y: BlockSpinorField) -> None:
    """y[:, i] += alpha[i] * x[:, i], in place."""
    _check_pair(x, y)
    a = _as_coeffs(alpha, x.b)
    yv = y.ksi()
    yv += a * x.ksi()


def block_scale(alpha, x: BlockSpinorField) -> None:
    """x[:, i] *= alpha[i], in place."""
    a = _as_coeffs(alpha, x.b)
    xv = x.ksi()
    xv *= a


def block_norms(x: BlockSpinorField) -> np.ndarray:
    """(b,) Euclidean norms, one per column."""
    v = x.ksi()
    return np.sqrt(np.einsum("xkb,xkb->b", v.conj(), v).real)


def _lane_width(b: int) -> int:
    return max(1, math.ceil(ACC_LANES / b)) * b


def _pad_to(stream: np.ndarray, width: int) -> np.ndarray:
    short = (-stream.shape[-1]) % width
    if short == 0:
        return stream
    pad = [(0, 0)] * (stream.ndim - 1) + [(0, short)]
    return np.pad(stream, pad)


def _dot_naive(w: BlockSpinorField, e: BlockSpinorField) -> np.ndarray:
    wv, ev = w.ksi(), e.ksi()
    out = np.empty(w.b, dtype=np.complex128)
    for i in range(w.b):
        out[i] = np.einsum("xk,xk->", wv[..., i].conj(), ev[..., i])
    return out


def _dot_deferred(w: BlockSpinorField, e: BlockSpinorField) -> np.ndarray:
    prod = w.data.conj() * e.data
    if w.layout == Layout.COMPONENT_MAJOR:
        width = _lane_width(w.b)
        lanes = _pad_to(prod, width).reshape(-1, width).sum(axis=0)
        return lanes.reshape(-1, w.b).sum(axis=0)
    # column-major storage: the stream of one column is already contiguous
    per_col = prod.reshape(w.n_sites, w.b, w.s).swapaxes(0, 1).reshape(w.b, -1)
    lanes = _pad_to(per_col, ACC_LANES).reshape(w.b, -1, ACC_LANES).sum(axis=1)
    return lanes.sum(axis=1)


def block_dot(w: BlockSpinorField, e: BlockSpinorField, strategy: str = "deferred") -> np.ndarray:
    """(b,) inner products conj(w[:, i]) . e[:, i]."""
    _check_pair(w, e)
    if strategy == "naive":
        return _dot_naive(w, e)
    if strategy == "deferred":
        return _dot_deferred(w, e)
    raise ValueError(f"unknown dot strategy {strategy!r}; expected one of {DOT_STRATEGIES}")
