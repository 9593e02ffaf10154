"""Single-layer LSTM over per-trajectory point embeddings.

The trajectory representation is the hidden state at the last real
timestep; padded positions are masked out of the recurrence entirely, so
batch composition never changes a row's output.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SequenceError


@dataclass
class LstmParams:
    wx: np.ndarray  # (d, 4h) input -> gates, columns [input|forget|cand|output]
    wh: np.ndarray  # (h, 4h) hidden -> gates
    bias: np.ndarray  # (4h,)

    @property
    def hidden(self):
        return self.wh.shape[0]


def init_lstm_params(dim, rng):
    """Uniform [-1/sqrt(d), 1/sqrt(d)]; forget-gate bias starts at 1."""
    lim = 1.0 / np.sqrt(dim)
    bias = rng.uniform(-lim, lim, size=4 * dim)
    bias[dim : 2 * dim] = 1.0
    return LstmParams(
        wx=rng.uniform(-lim, lim, size=(dim, 4 * dim)),
        wh=rng.uniform(-lim, lim, size=(dim, 4 * dim)),
        bias=bias,
    )


@dataclass
class PaddedBatch:
    data: np.ndarray  # (batch, t_max, d), zero beyond each row's length
    lengths: np.ndarray  # (batch,) true lengths, all >= 1


def pad_sequences(seqs):
    """Stack variable-length (T_i, d) arrays into a PaddedBatch."""
    if not seqs:
        raise SequenceError("empty batch")
    lengths = np.array([s.shape[0] for s in seqs], dtype=np.int64)
    if np.any(lengths < 1):
        raise SequenceError("zero-length sequence in batch")
    dim = seqs[0].shape[1]
    data = np.zeros((len(seqs), int(lengths.max()), dim))
    for i, s in enumerate(seqs):
        data[i, : s.shape[0]] = s
    return PaddedBatch(data=data, lengths=lengths)


def lstm_final(batch, params):
    """Final-timestep hidden state per row; returns (h_final, cache)."""
    h, gates, cells, hiddens = kernels.lstm_forward(
        batch.data, batch.lengths, params.wx, params.wh, params.bias
    )
    if not np.all(np.isfinite(h)):
        bad = int(np.flatnonzero(~np.isfinite(h).all(axis=1))[0])
        steps = np.flatnonzero(~np.isfinite(hiddens[bad]).all(axis=1))
        step = int(steps[0]) if steps.size else int(batch.lengths[bad]) - 1
        raise SequenceError(
            f"non-finite LSTM state at batch row {bad}, timestep {step}"
        )
    return h, (gates, cells, hiddens)


def lstm_final_backward(dh_final, batch, params, cache):
    """Gradients w.r.t. inputs and all gate parameters."""
    gates, cells, hiddens = cache
    dx, dwx, dwh, db = kernels.lstm_backward(
        batch.data, batch.lengths, params.wx, params.wh,
        gates, cells, hiddens, dh_final,
    )
    return dx, dwx, dwh, db
