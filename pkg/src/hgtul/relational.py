"""Hypergraph attention network over the trajectory hypergraph.

Each layer recomputes a per-POI softmax attention over the trajectories
containing that POI, propagates vertex features through the symmetrically
normalized incidence weighted by those attentions, applies a linear map,
LeakyReLU, dropout and a residual connection.  POI embeddings from all
layers (input included) are averaged; per-trajectory representations come
from a learnable embedding matrix plus the sum of the trajectory's final
POI embeddings.

Forward passes return explicit caches; backward passes are hand-derived
and verified against central finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import RelationalError

ATTN_MODES = ("full", "a", "ap", "s")


@dataclass
class RelationalParams:
    poi_embed: np.ndarray  # (L, d) vertex features, layer-0 input
    layer_weights: list  # M matrices (d, d)
    attn_vec: np.ndarray  # (2d,) scores POI-trajectory pairs
    traj_embed: np.ndarray  # (N, d) learnable per-trajectory embedding
    leaky_slope: float = 0.2
    dropout_rate: float = 0.3

    @property
    def n_layers(self):
        return len(self.layer_weights)

    @property
    def dim(self):
        return self.poi_embed.shape[1]


def init_relational_params(n_pois, n_trajs, dim, n_layers, rng,
                           leaky_slope=0.2, dropout_rate=0.3):
    """Uniform [-1/sqrt(d), 1/sqrt(d)] init; attention vector uses 2d."""
    lim = 1.0 / np.sqrt(dim)
    lim2 = 1.0 / np.sqrt(2 * dim)
    return RelationalParams(
        poi_embed=rng.uniform(-lim, lim, size=(n_pois, dim)),
        layer_weights=[rng.uniform(-lim, lim, size=(dim, dim)) for _ in range(n_layers)],
        attn_vec=rng.uniform(-lim2, lim2, size=2 * dim),
        traj_embed=rng.uniform(-lim, lim, size=(n_trajs, dim)),
        leaky_slope=leaky_slope,
        dropout_rate=dropout_rate,
    )


def leaky_relu(z, slope):
    return np.where(z >= 0.0, z, slope * z)


def leaky_relu_grad(z, slope):
    return np.where(z >= 0.0, 1.0, slope)


@dataclass
class _AttentionCache:
    x: np.ndarray
    z: np.ndarray  # raw pair scores a . [x_i || s_j], per nonzero
    probs: np.ndarray


def attention_incidence(x, traj_embed, attn_vec, hg, slope=0.2):
    """Per-POI softmax attention over incident trajectories.

    The pair score is attn_vec . [x_i || s_j]; a LeakyReLU sharpens it
    before the softmax, which runs over each POI's incident trajectories
    only, so rows sum to 1 on the incidence sparsity.

    Returns (probs, cache) with probs in CSR nonzero order.
    """
    dim = x.shape[1]
    px = x @ attn_vec[:dim]
    ps = traj_embed @ attn_vec[dim:]
    z = px[hg.rows] + ps[hg.cols]
    probs = kernels.segment_softmax(hg.indptr, leaky_relu(z, slope))
    return probs, _AttentionCache(x=x, z=z, probs=probs)


def attention_incidence_backward(cache, dprobs, attn_vec, traj_embed, hg, slope=0.2):
    """Gradients of attention_incidence w.r.t. x, traj_embed and attn_vec."""
    dim = cache.x.shape[1]
    ds = kernels.segment_softmax_backward(hg.indptr, cache.probs, dprobs)
    dz = ds * leaky_relu_grad(cache.z, slope)
    dpx = np.add.reduceat(dz, hg.indptr[:-1])
    dps = np.bincount(hg.cols, weights=dz, minlength=hg.n_trajs)
    dx = dpx[:, None] * attn_vec[None, :dim]
    dtraj = dps[:, None] * attn_vec[None, dim:]
    da = np.concatenate([cache.x.T @ dpx, traj_embed.T @ dps])
    return dx, dtraj, da


@dataclass
class _LayerCache:
    attn: _AttentionCache
    vals: np.ndarray
    op_xs: np.ndarray
    op_u: np.ndarray
    op_out: np.ndarray  # propagation output, pre weight matrix
    pre_act: np.ndarray  # after weight matrix, before LeakyReLU
    drop_mask: np.ndarray  # None in eval mode


def attentive_layer(x, hg, params, layer, training, rng):
    """One propagation layer: x_next = Dropout(LReLU(op(x) W)) + x."""
    probs, attn_cache = attention_incidence(
        x, params.traj_embed, params.attn_vec, hg, params.leaky_slope
    )
    op_out, xs, u = kernels.hyperop_forward(
        hg.indptr, hg.cols, hg.rows, probs, hg.d_isqrt, hg.b_inv, x
    )
    pre = op_out @ params.layer_weights[layer]
    act = leaky_relu(pre, params.leaky_slope)
    if training and params.dropout_rate > 0.0:
        mask = rng.random(act.shape) >= params.dropout_rate
        act = act * mask / (1.0 - params.dropout_rate)
    else:
        mask = None
    x_next = act + x
    if not np.all(np.isfinite(x_next)):
        raise RelationalError(f"non-finite values after propagation layer {layer}")
    return x_next, _LayerCache(
        attn=attn_cache, vals=probs, op_xs=xs, op_u=u,
        op_out=op_out, pre_act=pre, drop_mask=mask,
    )


def attentive_layer_backward(dx_next, cache, hg, params, layer):
    """Backward of attentive_layer.

    Returns (dx, dw, dtraj, da) where dx already includes the residual path.
    """
    d_act = dx_next
    if cache.drop_mask is not None:
        d_act = d_act * cache.drop_mask / (1.0 - params.dropout_rate)
    d_pre = d_act * leaky_relu_grad(cache.pre_act, params.leaky_slope)
    d_op = d_pre @ params.layer_weights[layer].T
    dw = cache.op_out.T @ d_pre
    dx_op, dvals = kernels.hyperop_backward(
        hg.indptr, hg.cols, hg.rows, cache.vals,
        hg.d_isqrt, hg.b_inv, d_op, cache.op_xs, cache.op_u,
    )
    dx_attn, dtraj, da = attention_incidence_backward(
        cache.attn, dvals, params.attn_vec, params.traj_embed, hg, params.leaky_slope
    )
    dx = dx_next + dx_op + dx_attn
    return dx, dw, dtraj, da


@dataclass
class RelationalOutput:
    x_final: np.ndarray  # (L, d) layer-averaged POI embeddings
    s_stru: np.ndarray  # (N, d) per-trajectory sum of final POI embeddings
    s_rel: np.ndarray  # (N, d) relational trajectory representation


@dataclass
class _RelationalCache:
    layer_inputs: list  # X^(0) .. X^(M)
    layer_caches: list
    attn_mode: str
    final_attn: _AttentionCache = None
    final_vals: np.ndarray = None
    x_final: np.ndarray = None


def forward_relational(params, hg, training=False, rng=None, attn_mode="full"):
    """Full relational branch.

    x_final averages all M+1 layer embeddings (inputs included), s_stru
    sums each trajectory's distinct final POI embeddings through the binary
    incidence, and s_rel composes per ``attn_mode``:

      full  traj_embed + s_stru
      a     s_stru (learned trajectory embedding dropped)
      ap    aggregate of x_final under the last attention, + s_stru
      s     traj_embed (structural term dropped)

    Returns (RelationalOutput, cache).
    """
    if attn_mode not in ATTN_MODES:
        raise RelationalError(f"unknown attention mode {attn_mode!r}")
    if training and params.dropout_rate > 0.0 and rng is None:
        raise RelationalError("training-mode forward needs an RNG for dropout")
    xs = [params.poi_embed]
    caches = []
    x = params.poi_embed
    for m in range(params.n_layers):
        x, cache = attentive_layer(x, hg, params, m, training, rng)
        xs.append(x)
        caches.append(cache)
    x_final = sum(xs) / (params.n_layers + 1)
    s_stru = hg.trajectory_sums(x_final)
    cache = _RelationalCache(layer_inputs=xs, layer_caches=caches,
                             attn_mode=attn_mode, x_final=x_final)
    if attn_mode == "full":
        s_rel = params.traj_embed + s_stru
    elif attn_mode == "a":
        s_rel = s_stru
    elif attn_mode == "s":
        s_rel = params.traj_embed.copy()
    else:  # "ap": aggregate final POI features under one more attention pass
        vals, final_attn = attention_incidence(
            xs[-1], params.traj_embed, params.attn_vec, hg, params.leaky_slope
        )
        s_rel = hg.scatter_columns(vals, x_final) + s_stru
        cache.final_attn = final_attn
        cache.final_vals = vals
    return RelationalOutput(x_final=x_final, s_stru=s_stru, s_rel=s_rel), cache


@dataclass
class RelationalGrads:
    poi_embed: np.ndarray
    layer_weights: list
    attn_vec: np.ndarray
    traj_embed: np.ndarray


def backward_relational(ds_rel, cache, hg, params, dx_final_extra=None):
    """Backward of forward_relational given the s_rel gradient.

    ``dx_final_extra`` lets callers add a direct x_final gradient (unused by
    the standard model, handy for tests).
    """
    n_avg = params.n_layers + 1
    dtraj = np.zeros_like(params.traj_embed)
    da = np.zeros_like(params.attn_vec)
    dws = [np.zeros_like(w) for w in params.layer_weights]

    dx_final = np.zeros_like(cache.x_final)
    if dx_final_extra is not None:
        dx_final += dx_final_extra
    d_last_extra = np.zeros_like(cache.x_final)

    mode = cache.attn_mode
    if mode == "full":
        dtraj += ds_rel
        ds_stru = ds_rel
    elif mode == "a":
        ds_stru = ds_rel
    elif mode == "s":
        dtraj += ds_rel
        ds_stru = None
    else:  # "ap"
        ds_stru = ds_rel
        # s_agg[j] = sum_i vals[ij] x_final[i]
        dx_final += hg_scatter_rows(hg, cache.final_vals, ds_rel)
        dvals = np.einsum(
            "kd,kd->k", cache.x_final[hg.rows], ds_rel[hg.cols]
        )
        dx_attn, dtraj_attn, da_attn = attention_incidence_backward(
            cache.final_attn, dvals, params.attn_vec, params.traj_embed, hg,
            params.leaky_slope,
        )
        d_last_extra += dx_attn
        dtraj += dtraj_attn
        da += da_attn

    if ds_stru is not None:
        # s_stru = H^T x_final with binary H
        dx_final += np.add.reduceat(ds_stru[hg.cols], hg.indptr[:-1], axis=0)

    d_layer_avg = dx_final / n_avg
    dx = d_layer_avg + d_last_extra
    for m in range(params.n_layers - 1, -1, -1):
        dx, dw, dtraj_m, da_m = attentive_layer_backward(
            dx, cache.layer_caches[m], hg, params, m
        )
        dws[m] += dw
        dtraj += dtraj_m
        da += da_m
        dx = dx + d_layer_avg
    return RelationalGrads(
        poi_embed=dx, layer_weights=dws, attn_vec=da, traj_embed=dtraj
    )


def hg_scatter_rows(hg, vals, traj_features):
    """H_w traj_features: weighted sum of trajectory rows per POI."""
    out = np.zeros((hg.n_pois, traj_features.shape[1]))
    np.add.at(out, hg.rows, vals[:, None] * traj_features[hg.cols])
    return out
