"""Embedding, GRU, dense and dropout layers built on the autodiff tape."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, record, sigmoid_np


def glorot_uniform(rng, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def embedding_table(rng, vocab_size: int, width: int, name: str = "embedding") -> Tensor:
    return Tensor(rng.uniform(-0.1, 0.1, size=(vocab_size, width)), requires_grad=True, name=name)


@dataclass
class GRUParams:
    """GRU weights with gates stacked column-wise in the order update, reset, candidate.

    ``W`` maps inputs (D x 3H), ``U`` maps the previous state (H x 3H).
    """

    W: Tensor
    U: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, input_width: int, hidden: int, prefix: str) -> "GRUParams":
        W = np.concatenate([glorot_uniform(rng, input_width, hidden) for _ in range(3)], axis=1)
        U = np.concatenate([glorot_uniform(rng, hidden, hidden) for _ in range(3)], axis=1)
        return cls(
            Tensor(W, True, f"{prefix}.W"),
            Tensor(U, True, f"{prefix}.U"),
            Tensor(np.zeros(3 * hidden), True, f"{prefix}.b"),
        )

    @classmethod
    def zeros(cls, input_width: int, hidden: int, prefix: str = "gru") -> "GRUParams":
        return cls(
            Tensor(np.zeros((input_width, 3 * hidden)), True, f"{prefix}.W"),
            Tensor(np.zeros((hidden, 3 * hidden)), True, f"{prefix}.U"),
            Tensor(np.zeros(3 * hidden), True, f"{prefix}.b"),
        )

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @property
    def input_width(self) -> int:
        return self.W.shape[0]

    def gate(self, which: str):
        """Return (W, U, b) value slices for gate ``z``, ``r`` or ``h``."""
        H = self.hidden
        k = "zrh".index(which)
        sl = slice(k * H, (k + 1) * H)
        return self.W.value[:, sl], self.U.value[:, sl], self.b.value[sl]

    def tensors(self) -> list[Tensor]:
        return [self.W, self.U, self.b]


def embed(indices, table: Tensor) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"token index out of range for table with {table.shape[0]} rows")
    return ad.take(table, idx, axis=0)


def dropout(x, keep_rate: float = 0.8, train_mode: bool = False, rng=None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/keep_rate`` at train time."""
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError("keep_rate must be in (0, 1]")
    x = ad.as_tensor(x)
    if not train_mode or keep_rate == 1.0:
        return x
    mask = (rng.random(x.shape) < keep_rate) / keep_rate
    return ad.mul(x, mask)


def dense(x, W: Tensor, b: Tensor, activation: str = "tanh") -> Tensor:
    """``activation(x @ W + b)`` for a batch ``x`` of row vectors (or one vector)."""
    x = ad.as_tensor(x)
    squeeze = x.value.ndim == 1
    if squeeze:
        x = ad.reshape(x, (1, -1))
    if x.shape[1] != W.shape[0] or b.shape[-1] != W.shape[1]:
        raise ValueError(f"dense shape mismatch: {x.shape} @ {W.shape} + {b.shape}")
    y = ad.add(ad.matmul(x, W), b)
    if activation == "tanh":
        y = ad.tanh(y)
    elif activation != "identity":
        raise ValueError(f"unknown activation {activation!r}")
    return ad.reshape(y, (y.shape[1],)) if squeeze else y


def gru_step(x, h_prev, p: GRUParams) -> Tensor:
    """One GRU step composed from tape primitives.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c.
    Works on single vectors or batches of row vectors.
    """
    x, h_prev = ad.as_tensor(x), ad.as_tensor(h_prev)
    if x.shape[-1] != p.input_width or h_prev.shape[-1] != p.hidden:
        raise ValueError(f"gru_step width mismatch: x {x.shape}, h {h_prev.shape}, params {p.W.shape}/{p.U.shape}")
    squeeze = x.value.ndim == 1
    if squeeze:
        x, h_prev = ad.reshape(x, (1, -1)), ad.reshape(h_prev, (1, -1))
    H = p.hidden
    cols = lambda t, k: ad.take(t, np.arange(k * H, (k + 1) * H), axis=t.value.ndim - 1)
    xw = ad.add(ad.matmul(x, p.W), p.b)
    z = ad.sigmoid(ad.add(cols(xw, 0), ad.matmul(h_prev, cols(p.U, 0))))
    r = ad.sigmoid(ad.add(cols(xw, 1), ad.matmul(h_prev, cols(p.U, 1))))
    c = ad.tanh(ad.add(cols(xw, 2), ad.matmul(ad.mul(r, h_prev), cols(p.U, 2))))
    h = ad.add(ad.mul(ad.sub(1.0, z), h_prev), ad.mul(z, c))
    return ad.reshape(h, (H,)) if squeeze else h


def gru_sequence(X, mask, p: GRUParams) -> Tensor:
    """Run a GRU over a padded batch and return each row's final state.

    ``X`` is (B, T, D); ``mask`` (B, T) marks real positions (1) vs padding
    (0). Padded steps carry the state through unchanged, so right padding
    yields the state after each row's last real token. This is a single
    tape primitive with hand-written backpropagation through time.
    """
    X = ad.as_tensor(X)
    mask = np.asarray(mask, dtype=np.float64)
    B, T, D = X.shape
    H = p.hidden
    if D != p.input_width or mask.shape != (B, T):
        raise ValueError(f"gru_sequence shape mismatch: X {X.shape}, mask {mask.shape}, W {p.W.shape}")
    W, U, bias = p.W.value, p.U.value, p.b.value
    U_zr, U_h = U[:, : 2 * H], U[:, 2 * H :]
    X2 = X.value.reshape(B * T, D)
    # time-major buffers: (T, B, .)
    XW = (X2 @ W + bias).reshape(B, T, 3 * H).transpose(1, 0, 2)
    M = np.ascontiguousarray(mask.T)[:, :, None]
    full = M.reshape(T, B).all(axis=1)
    Hs = np.zeros((T + 1, B, H))
    ZR = np.empty((T, B, 2 * H))
    RH = np.empty((T, B, H))
    C = np.empty((T, B, H))
    for t in range(T):
        h = Hs[t]
        zr = ZR[t] = sigmoid_np(XW[t, :, : 2 * H] + h @ U_zr)
        rh = RH[t] = zr[:, H:] * h
        c = C[t] = np.tanh(XW[t, :, 2 * H :] + rh @ U_h)
        step = zr[:, :H] * (c - h)
        Hs[t + 1] = h + step if full[t] else h + M[t] * step

    def vjp(gh):
        dXW = np.empty((T, B, 3 * H))
        gh = gh.copy()
        for t in range(T - 1, -1, -1):
            h_prev, c = Hs[t], C[t]
            z, r = ZR[t, :, :H], ZR[t, :, H:]
            dhn = gh if full[t] else gh * M[t]
            dac = dXW[t, :, 2 * H :]
            np.multiply(dhn * z, 1.0 - c * c, out=dac)
            drh = dac @ U_h.T
            dXW[t, :, :H] = dhn * (c - h_prev) * z * (1.0 - z)
            dXW[t, :, H : 2 * H] = drh * h_prev * r * (1.0 - r)
            dh = dhn * (1.0 - z) + drh * r + dXW[t, :, : 2 * H] @ U_zr.T
            if not full[t]:
                dh += gh - dhn
            gh = dh
        dU = np.empty_like(U)
        dU[:, : 2 * H] = Hs[:T].reshape(T * B, H).T @ dXW[:, :, : 2 * H].reshape(T * B, 2 * H)
        dU[:, 2 * H :] = RH.reshape(T * B, H).T @ dXW[:, :, 2 * H :].reshape(T * B, H)
        dXW2 = dXW.transpose(1, 0, 2).reshape(B * T, 3 * H)
        dX = (dXW2 @ W.T).reshape(B, T, D) if X.requires_grad else None
        return dX, X2.T @ dXW2, dU, dXW2.sum(axis=0)

    h = Hs[T].copy()
    return record(h, (X, p.W, p.U, p.b), vjp)


def pad_batch(seqs: Sequence[Sequence[int]], pad_index: int = 0):
    """Right-pad index sequences; empty sequences become a single pad token.

    Returns ``(indices, mask, reverse)`` where ``reverse`` gathers each row's
    real tokens in reverse order from the flattened (B*T) positions.
    """
    seqs = [list(s) if len(s) else [pad_index] for s in seqs]
    B, T = len(seqs), max(len(s) for s in seqs)
    idx = np.full((B, T), pad_index, dtype=np.intp)
    mask = np.zeros((B, T))
    rev = np.tile(np.arange(T), (B, 1)) + (np.arange(B) * T)[:, None]
    for i, s in enumerate(seqs):
        n = len(s)
        idx[i, :n] = s
        mask[i, :n] = 1.0
        rev[i, :n] = i * T + np.arange(n - 1, -1, -1)
    return idx, mask, rev


def encode_batch(seqs, table: Tensor, fwd: GRUParams, bwd: GRUParams,
                 keep_rate: float = 1.0, train_mode: bool = False, rng=None) -> Tensor:
    """Bidirectional encoding of a batch: ``[final forward state; final backward state]``."""
    idx, mask, rev = pad_batch(seqs)
    B, T = idx.shape
    E = dropout(embed(idx, table), keep_rate, train_mode, rng)
    E_rev = ad.take(ad.reshape(E, (B * T, -1)), rev, axis=0)
    return ad.concat([gru_sequence(E, mask, fwd), gru_sequence(E_rev, mask, bwd)], axis=1)


def bidir_encode(tokens: Sequence[int], table: Tensor, fwd: GRUParams, bwd: GRUParams,
                 keep_rate: float = 1.0, train_mode: bool = False, rng=None) -> Tensor:
    """Encode one index sequence into a vector of width ``2 * hidden``."""
    out = encode_batch([tokens], table, fwd, bwd, keep_rate, train_mode, rng)
    return ad.reshape(out, (out.shape[1],))
