"""JIT-compiled kernels; loop bodies mirror numpy_backend exactly.

All kernels are serial (no ``parallel=True``): accumulation order is fixed,
so two runs with identical inputs produce bit-identical outputs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def hyperop_forward(indptr, cols, rows, vals, d_isqrt, b_inv, x):
    npoi, dim = x.shape
    ntraj = b_inv.shape[0]
    xs = np.empty((npoi, dim))
    for i in range(npoi):
        for cdx in range(dim):
            xs[i, cdx] = x[i, cdx] * d_isqrt[i]
    u = np.zeros((ntraj, dim))
    for i in range(npoi):
        for k in range(indptr[i], indptr[i + 1]):
            j = cols[k]
            v = vals[k]
            for cdx in range(dim):
                u[j, cdx] += v * xs[i, cdx]
    for j in range(ntraj):
        for cdx in range(dim):
            u[j, cdx] *= b_inv[j]
    y = np.zeros((npoi, dim))
    for i in range(npoi):
        for k in range(indptr[i], indptr[i + 1]):
            j = cols[k]
            v = vals[k]
            for cdx in range(dim):
                y[i, cdx] += v * u[j, cdx]
        for cdx in range(dim):
            y[i, cdx] *= d_isqrt[i]
    return y, xs, u


@njit(cache=True)
def hyperop_backward(indptr, cols, rows, vals, d_isqrt, b_inv, dy, xs, u):
    npoi, dim = xs.shape
    ntraj = b_inv.shape[0]
    dw = np.empty((npoi, dim))
    for i in range(npoi):
        for cdx in range(dim):
            dw[i, cdx] = dy[i, cdx] * d_isqrt[i]
    du = np.zeros((ntraj, dim))
    for i in range(npoi):
        for k in range(indptr[i], indptr[i + 1]):
            j = cols[k]
            v = vals[k]
            for cdx in range(dim):
                du[j, cdx] += v * dw[i, cdx]
    dv = np.empty((ntraj, dim))
    for j in range(ntraj):
        for cdx in range(dim):
            dv[j, cdx] = du[j, cdx] * b_inv[j]
    dx = np.zeros((npoi, dim))
    dvals = np.empty(vals.shape[0])
    for i in range(npoi):
        for k in range(indptr[i], indptr[i + 1]):
            j = cols[k]
            v = vals[k]
            acc = 0.0
            for cdx in range(dim):
                dx[i, cdx] += v * dv[j, cdx]
                acc += dw[i, cdx] * u[j, cdx] + xs[i, cdx] * dv[j, cdx]
            dvals[k] = acc
    for i in range(npoi):
        for cdx in range(dim):
            dx[i, cdx] *= d_isqrt[i]
    return dx, dvals


@njit(cache=True)
def segment_softmax(indptr, scores):
    out = np.empty(scores.shape[0])
    nrows = indptr.shape[0] - 1
    for i in range(nrows):
        lo = indptr[i]
        hi = indptr[i + 1]
        m = scores[lo]
        for k in range(lo + 1, hi):
            if scores[k] > m:
                m = scores[k]
        denom = 0.0
        for k in range(lo, hi):
            e = np.exp(scores[k] - m)
            out[k] = e
            denom += e
        for k in range(lo, hi):
            out[k] /= denom
    return out


@njit(cache=True)
def segment_softmax_backward(indptr, probs, dprobs):
    out = np.empty(probs.shape[0])
    nrows = indptr.shape[0] - 1
    for i in range(nrows):
        lo = indptr[i]
        hi = indptr[i + 1]
        inner = 0.0
        for k in range(lo, hi):
            inner += probs[k] * dprobs[k]
        for k in range(lo, hi):
            out[k] = probs[k] * (dprobs[k] - inner)
    return out


@njit(cache=True)
def _sigmoid_inplace(z):
    for i in range(z.shape[0]):
        if z[i] >= 0.0:
            z[i] = 1.0 / (1.0 + np.exp(-z[i]))
        else:
            e = np.exp(z[i])
            z[i] = e / (1.0 + e)


@njit(cache=True)
def lstm_forward(x, lengths, wx, wh, b):
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
            pre = np.dot(x[bi, t], wx) + np.dot(h[bi], wh) + b
            _sigmoid_inplace(pre[:hdim])
            _sigmoid_inplace(pre[hdim : 2 * hdim])
            for q in range(2 * hdim, 3 * hdim):
                pre[q] = np.tanh(pre[q])
            _sigmoid_inplace(pre[3 * hdim :])
            for q in range(hdim):
                cq = pre[hdim + q] * c[bi, q] + pre[q] * pre[2 * hdim + q]
                c[bi, q] = cq
                h[bi, q] = pre[3 * hdim + q] * np.tanh(cq)
                cells[bi, t, q] = cq
                hiddens[bi, t, q] = h[bi, q]
            gates[bi, t] = pre
    return h, gates, cells, hiddens


@njit(cache=True)
def lstm_backward(x, lengths, wx, wh, gates, cells, hiddens, dh_final):
    bsz, tmax, din = x.shape
    hdim = wh.shape[0]
    dx = np.zeros((bsz, tmax, din))
    dwx = np.zeros(wx.shape)
    dwh = np.zeros(wh.shape)
    db = np.zeros(4 * hdim)
    dpre = np.empty(4 * hdim)
    for bi in range(bsz):
        dh = np.zeros(hdim)
        dc = np.zeros(hdim)
        for t in range(lengths[bi] - 1, -1, -1):
            if t == lengths[bi] - 1:
                for q in range(hdim):
                    dh[q] += dh_final[bi, q]
            for q in range(hdim):
                ig = gates[bi, t, q]
                fg = gates[bi, t, hdim + q]
                gg = gates[bi, t, 2 * hdim + q]
                og = gates[bi, t, 3 * hdim + q]
                tc = np.tanh(cells[bi, t, q])
                dcq = dc[q] + dh[q] * og * (1.0 - tc * tc)
                c_prev = cells[bi, t - 1, q] if t > 0 else 0.0
                dpre[q] = dcq * gg * ig * (1.0 - ig)
                dpre[hdim + q] = dcq * c_prev * fg * (1.0 - fg)
                dpre[2 * hdim + q] = dcq * ig * (1.0 - gg * gg)
                dpre[3 * hdim + q] = dh[q] * tc * og * (1.0 - og)
                dc[q] = dcq * fg
            for q in range(4 * hdim):
                db[q] += dpre[q]
            for p in range(din):
                xv = x[bi, t, p]
                acc = 0.0
                for q in range(4 * hdim):
                    dwx[p, q] += xv * dpre[q]
                    acc += wx[p, q] * dpre[q]
                dx[bi, t, p] = acc
            for p in range(hdim):
                hv = hiddens[bi, t - 1, p] if t > 0 else 0.0
                acc = 0.0
                for q in range(4 * hdim):
                    dwh[p, q] += hv * dpre[q]
                    acc += wh[p, q] * dpre[q]
                dh[p] = acc
    return dx, dwx, dwh, db
