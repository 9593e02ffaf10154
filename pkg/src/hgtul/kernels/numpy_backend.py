"""Pure-numpy reference implementations of the hot kernels.

Semantics are identical to ``numba_backend``; this module is the fallback
when numba is unavailable or when ``HGTUL_BACKEND=numpy`` is set.

Sparse incidence layout: CSR over POIs.  ``indptr`` has length L+1,
``cols[k]`` is the trajectory index of nonzero k, ``rows[k]`` its POI index
(redundant with indptr, precomputed once per hypergraph).  Values attached
to nonzeros are always given in this CSR order.

Scatter-adds use ``np.add.at`` and segment reductions ``np.*.reduceat``,
both of which process elements in index order, so results are deterministic.
"""

import numpy as np


def hyperop_forward(indptr, cols, rows, vals, d_isqrt, b_inv, x):
    """Symmetrically normalized two-pass propagation.

    Computes ``diag(d_isqrt) . H . diag(b_inv) . H^T . diag(d_isqrt) . x``
    without materializing the POI-by-POI product, where H is the (possibly
    weighted) incidence matrix given by (indptr, cols, vals).

    Returns (y, xs, u); xs and u are intermediates cached for the backward
    pass.
    """
    xs = x * d_isqrt[:, None]
    u = np.zeros((b_inv.shape[0], x.shape[1]))
    np.add.at(u, cols, vals[:, None] * xs[rows])
    u *= b_inv[:, None]
    y = np.zeros_like(x)
    np.add.at(y, rows, vals[:, None] * u[cols])
    y *= d_isqrt[:, None]
    return y, xs, u


def hyperop_backward(indptr, cols, rows, vals, d_isqrt, b_inv, dy, xs, u):
    """Gradients of hyperop_forward w.r.t. x and the nonzero values."""
    dw = dy * d_isqrt[:, None]
    du = np.zeros_like(u)
    np.add.at(du, cols, vals[:, None] * dw[rows])
    dv = du * b_inv[:, None]
    dxs = np.zeros_like(xs)
    np.add.at(dxs, rows, vals[:, None] * dv[cols])
    dx = dxs * d_isqrt[:, None]
    dvals = np.einsum("kd,kd->k", dw[rows], u[cols]) + np.einsum(
        "kd,kd->k", xs[rows], dv[cols]
    )
    return dx, dvals


def segment_softmax(indptr, scores):
    """Row-wise softmax over CSR segments (every segment non-empty)."""
    counts = np.diff(indptr)
    starts = indptr[:-1]
    rowmax = np.repeat(np.maximum.reduceat(scores, starts), counts)
    ex = np.exp(scores - rowmax)
    denom = np.repeat(np.add.reduceat(ex, starts), counts)
    return ex / denom


def segment_softmax_backward(indptr, probs, dprobs):
    """Jacobian-vector product of segment_softmax."""
    counts = np.diff(indptr)
    inner = np.repeat(np.add.reduceat(probs * dprobs, indptr[:-1]), counts)
    return probs * (dprobs - inner)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(x, lengths, wx, wh, b):
    """Masked LSTM forward pass over a padded batch.

    Gate columns are laid out [input | forget | candidate | output].  Steps
    at or beyond a row's length are skipped, so padding never influences the
    state.  Gate pre-activations are computed one batch row at a time; the
    arithmetic for a given row is therefore independent of what else sits in
    the batch.

    Returns (h_final, gates, cells, hiddens); the last three are caches for
    lstm_backward, zero-filled at skipped steps.
    """
    bsz, tmax, _ = x.shape
    hdim = wh.shape[0]
    gates = np.zeros((bsz, tmax, 4 * hdim))
    cells = np.zeros((bsz, tmax, hdim))
    hiddens = np.zeros((bsz, tmax, hdim))
    h = np.zeros((bsz, hdim))
    c = np.zeros((bsz, hdim))
    for t in range(tmax):
        for bi in range(bsz):
            if t >= lengths[bi]:
                continue
            pre = x[bi, t] @ wx + h[bi] @ wh + b
            ig = _sigmoid(pre[:hdim])
            fg = _sigmoid(pre[hdim : 2 * hdim])
            gg = np.tanh(pre[2 * hdim : 3 * hdim])
            og = _sigmoid(pre[3 * hdim :])
            c[bi] = fg * c[bi] + ig * gg
            h[bi] = og * np.tanh(c[bi])
            gates[bi, t, :hdim] = ig
            gates[bi, t, hdim : 2 * hdim] = fg
            gates[bi, t, 2 * hdim : 3 * hdim] = gg
            gates[bi, t, 3 * hdim :] = og
            cells[bi, t] = c[bi]
            hiddens[bi, t] = h[bi]
    return h, gates, cells, hiddens


def lstm_backward(x, lengths, wx, wh, gates, cells, hiddens, dh_final):
    """Backpropagation through time for lstm_forward."""
    bsz, tmax, din = x.shape
    hdim = wh.shape[0]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hdim)
    for bi in range(bsz):
        dh = np.zeros(hdim)
        dc = np.zeros(hdim)
        for t in range(int(lengths[bi]) - 1, -1, -1):
            if t == lengths[bi] - 1:
                dh = dh + dh_final[bi]
            ig = gates[bi, t, :hdim]
            fg = gates[bi, t, hdim : 2 * hdim]
            gg = gates[bi, t, 2 * hdim : 3 * hdim]
            og = gates[bi, t, 3 * hdim :]
            tc = np.tanh(cells[bi, t])
            do = dh * tc
            dc = dc + dh * og * (1.0 - tc * tc)
            c_prev = cells[bi, t - 1] if t > 0 else np.zeros(hdim)
            h_prev = hiddens[bi, t - 1] if t > 0 else np.zeros(hdim)
            dpre = np.empty(4 * hdim)
            dpre[:hdim] = dc * gg * ig * (1.0 - ig)
            dpre[hdim : 2 * hdim] = dc * c_prev * fg * (1.0 - fg)
            dpre[2 * hdim : 3 * hdim] = dc * ig * (1.0 - gg * gg)
            dpre[3 * hdim :] = do * og * (1.0 - og)
            db += dpre
            dwx += np.outer(x[bi, t], dpre)
            dwh += np.outer(h_prev, dpre)
            dx[bi, t] = wx @ dpre
            dh = wh @ dpre
            dc = dc * fg
    return dx, dwx, dwh, db
