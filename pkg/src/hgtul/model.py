"""Full model assembly: branch fusion, classification and loss.

The relational branch runs once per step over the whole hypergraph; batch
rows gather their trajectory representations from it.  The sequence branch
embeds each trajectory's points (geohash cell + half-hour slot + day class)
and runs the LSTM.  Both branch outputs are L2-normalized, summed and fed
through an affine classifier; training minimizes mean cross-entropy.

Ablation variants reassemble the same pieces:

  full  both branches                 l   relational branch only
  a     drop learned traj embedding   h   sequence branch only
  ap    attention-aggregated traj embedding
  s     drop structural term          d   full model, unbalanced training set
"""

from dataclasses import dataclass

import numpy as np

from . import relational, sequence
from .errors import TrainingError
from .relational import RelationalParams, init_relational_params
from .sequence import LstmParams, init_lstm_params
from .st_encoder import init_embedding_table

VARIANTS = ("full", "a", "ap", "s", "l", "h", "d")
NORM_EPS = 1e-12


def validate_variant(variant):
    if variant not in VARIANTS:
        raise TrainingError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


def variant_branches(variant):
    """(use_relational, use_sequence, attn_mode) for a variant id."""
    validate_variant(variant)
    use_rel = variant != "h"
    use_seq = variant != "l"
    attn_mode = variant if variant in ("a", "ap", "s") else "full"
    if not use_rel and not use_seq:
        raise TrainingError("at least one branch must be active")
    return use_rel, use_seq, attn_mode


@dataclass
class ModelParams:
    rel: RelationalParams
    lstm: LstmParams
    geo_table: np.ndarray
    slot_table: np.ndarray
    day_table: np.ndarray
    cls_w: np.ndarray  # (Q, d)
    cls_b: np.ndarray  # (Q,)

    def named_tensors(self):
        """Canonical (name, array) list; fixed order for optimizer/checkpoint."""
        pairs = [
            ("poi_embed", self.rel.poi_embed),
            ("attn_vec", self.rel.attn_vec),
            ("traj_embed", self.rel.traj_embed),
        ]
        pairs += [
            (f"layer_w{m}", w) for m, w in enumerate(self.rel.layer_weights)
        ]
        pairs += [
            ("lstm_wx", self.lstm.wx),
            ("lstm_wh", self.lstm.wh),
            ("lstm_bias", self.lstm.bias),
            ("geo_table", self.geo_table),
            ("slot_table", self.slot_table),
            ("day_table", self.day_table),
            ("cls_w", self.cls_w),
            ("cls_b", self.cls_b),
        ]
        return pairs


def init_model_params(n_pois, n_trajs, n_geo, n_slots, n_days, n_users, dim,
                      n_layers, rng, leaky_slope=0.2, dropout_rate=0.3):
    lim = 1.0 / np.sqrt(dim)
    return ModelParams(
        rel=init_relational_params(
            n_pois, n_trajs, dim, n_layers, rng, leaky_slope, dropout_rate
        ),
        lstm=init_lstm_params(dim, rng),
        geo_table=init_embedding_table(n_geo, dim, rng),
        slot_table=init_embedding_table(n_slots, dim, rng),
        day_table=init_embedding_table(n_days, dim, rng),
        cls_w=rng.uniform(-lim, lim, size=(n_users, dim)),
        cls_b=rng.uniform(-lim, lim, size=n_users),
    )


def l2_normalize_rows(x):
    """Row-wise v / ||v||; rows with near-zero norm pass through unchanged."""
    norms = np.sqrt(np.sum(x * x, axis=1))
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    return x / safe[:, None], norms


def l2_normalize_rows_backward(dout, x, norms):
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    xn = x / safe[:, None]
    inner = np.sum(xn * dout, axis=1)
    dx = dout / safe[:, None] - xn * (inner / safe)[:, None]
    # pass-through rows: identity jacobian
    zero = norms <= NORM_EPS
    if np.any(zero):
        dx[zero] = dout[zero]
    return dx


def fuse(s_st, s_rel):
    """Sum of the L2-normalized branch outputs (rows)."""
    a, _ = l2_normalize_rows(np.atleast_2d(s_st))
    b, _ = l2_normalize_rows(np.atleast_2d(s_rel))
    out = a + b
    return out[0] if s_st.ndim == 1 else out


def classify(s_final, cls_w, cls_b):
    """Affine logits; no softmax here."""
    return s_final @ cls_w.T + cls_b


def batch_loss(logits, labels):
    """Mean cross-entropy with max-subtraction; returns (loss, dlogits)."""
    n, n_cls = logits.shape
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_cls:
        raise TrainingError("label outside [0, Q)")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(logsumexp - shifted[np.arange(n), labels]))
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n


@dataclass
class SequenceFeatures:
    """Per-trajectory index arrays into the three embedding tables."""

    geo_idx: list  # one int64 array per trajectory
    slot_idx: list
    day_idx: list

    def __len__(self):
        return len(self.geo_idx)


@dataclass
class _ForwardCache:
    rel_cache: object
    rel_out: object
    batch: object
    lstm_cache: object
    s_st: np.ndarray
    s_rel_rows: np.ndarray
    st_norms: np.ndarray
    rel_norms: np.ndarray
    s_final: np.ndarray
    geo_pad: np.ndarray
    slot_pad: np.ndarray
    day_pad: np.ndarray


def forward_batch(params, hg, feats, traj_ids, variant="full",
                  training=False, rng=None):
    """Scores for a batch of trajectories; returns (logits, cache)."""
    use_rel, use_seq, attn_mode = variant_branches(variant)
    traj_ids = np.asarray(traj_ids)
    n = traj_ids.shape[0]
    dim = params.rel.dim

    rel_out = rel_cache = None
    s_rel_rows = np.zeros((n, dim))
    if use_rel:
        rel_out, rel_cache = relational.forward_relational(
            params.rel, hg, training=training, rng=rng, attn_mode=attn_mode
        )
        s_rel_rows = rel_out.s_rel[traj_ids]

    batch = lstm_cache = None
    geo_pad = slot_pad = day_pad = None
    s_st = np.zeros((n, dim))
    if use_seq:
        geo_pad, slot_pad, day_pad, batch = _embed_batch(params, feats, traj_ids)
        s_st, lstm_cache = sequence.lstm_final(batch, params.lstm)

    st_n, st_norms = l2_normalize_rows(s_st)
    rel_n, rel_norms = l2_normalize_rows(s_rel_rows)
    if use_rel and use_seq:
        s_final = st_n + rel_n
    elif use_rel:
        s_final = rel_n
    else:
        s_final = st_n
    logits = classify(s_final, params.cls_w, params.cls_b)
    cache = _ForwardCache(
        rel_cache=rel_cache, rel_out=rel_out, batch=batch,
        lstm_cache=lstm_cache, s_st=s_st, s_rel_rows=s_rel_rows,
        st_norms=st_norms, rel_norms=rel_norms, s_final=s_final,
        geo_pad=geo_pad, slot_pad=slot_pad, day_pad=day_pad,
    )
    return logits, cache


def _embed_batch(params, feats, traj_ids):
    """Padded (batch, T, d) embeddings plus padded index arrays for backward."""
    lengths = np.array([feats.geo_idx[t].shape[0] for t in traj_ids], dtype=np.int64)
    t_max = int(lengths.max())
    n = traj_ids.shape[0]
    geo_pad = np.zeros((n, t_max), dtype=np.int64)
    slot_pad = np.zeros((n, t_max), dtype=np.int64)
    day_pad = np.zeros((n, t_max), dtype=np.int64)
    data = np.zeros((n, t_max, params.rel.dim))
    for b, t in enumerate(traj_ids):
        ln = lengths[b]
        gi, si, di = feats.geo_idx[t], feats.slot_idx[t], feats.day_idx[t]
        geo_pad[b, :ln] = gi
        slot_pad[b, :ln] = si
        day_pad[b, :ln] = di
        data[b, :ln] = (
            params.geo_table[gi] + params.slot_table[si] + params.day_table[di]
        )
    return geo_pad, slot_pad, day_pad, sequence.PaddedBatch(data, lengths)


@dataclass
class ModelGrads:
    rel: object  # RelationalGrads or None
    lstm_wx: np.ndarray
    lstm_wh: np.ndarray
    lstm_bias: np.ndarray
    geo_table: np.ndarray
    slot_table: np.ndarray
    day_table: np.ndarray
    cls_w: np.ndarray
    cls_b: np.ndarray

    def named_tensors(self):
        pairs = []
        if self.rel is not None:
            pairs += [
                ("poi_embed", self.rel.poi_embed),
                ("attn_vec", self.rel.attn_vec),
                ("traj_embed", self.rel.traj_embed),
            ]
            pairs += [
                (f"layer_w{m}", w) for m, w in enumerate(self.rel.layer_weights)
            ]
        pairs += [
            ("lstm_wx", self.lstm_wx),
            ("lstm_wh", self.lstm_wh),
            ("lstm_bias", self.lstm_bias),
            ("geo_table", self.geo_table),
            ("slot_table", self.slot_table),
            ("day_table", self.day_table),
            ("cls_w", self.cls_w),
            ("cls_b", self.cls_b),
        ]
        return pairs


def backward_batch(dlogits, cache, params, hg, traj_ids, variant="full"):
    """Gradients of a scalar loss through forward_batch."""
    use_rel, use_seq, _ = variant_branches(variant)
    traj_ids = np.asarray(traj_ids)

    d_final = dlogits @ params.cls_w
    d_cls_w = dlogits.T @ cache.s_final
    d_cls_b = dlogits.sum(axis=0)

    grads = ModelGrads(
        rel=None,
        lstm_wx=np.zeros_like(params.lstm.wx),
        lstm_wh=np.zeros_like(params.lstm.wh),
        lstm_bias=np.zeros_like(params.lstm.bias),
        geo_table=np.zeros_like(params.geo_table),
        slot_table=np.zeros_like(params.slot_table),
        day_table=np.zeros_like(params.day_table),
        cls_w=d_cls_w,
        cls_b=d_cls_b,
    )

    if use_seq:
        d_st = l2_normalize_rows_backward(d_final, cache.s_st, cache.st_norms)
        dx, dwx, dwh, db = sequence.lstm_final_backward(
            d_st, cache.batch, params.lstm, cache.lstm_cache
        )
        grads.lstm_wx = dwx
        grads.lstm_wh = dwh
        grads.lstm_bias = db
        _scatter_embedding_grads(grads, dx, cache)

    if use_rel:
        d_rel_rows = l2_normalize_rows_backward(
            d_final, cache.s_rel_rows, cache.rel_norms
        )
        ds_rel = np.zeros((hg.n_trajs, params.rel.dim))
        np.add.at(ds_rel, traj_ids, d_rel_rows)
        grads.rel = relational.backward_relational(
            ds_rel, cache.rel_cache, hg, params.rel
        )
    return grads


def _scatter_embedding_grads(grads, dx, cache):
    lengths = cache.batch.lengths
    for b in range(dx.shape[0]):
        ln = int(lengths[b])
        rows = dx[b, :ln]
        np.add.at(grads.geo_table, cache.geo_pad[b, :ln], rows)
        np.add.at(grads.slot_table, cache.slot_pad[b, :ln], rows)
        np.add.at(grads.day_table, cache.day_pad[b, :ln], rows)


def loss_and_grads(params, hg, feats, traj_ids, labels, variant="full",
                   training=True, rng=None):
    """One training step's loss and full gradient set."""
    logits, cache = forward_batch(
        params, hg, feats, traj_ids, variant=variant, training=training, rng=rng
    )
    loss, dlogits = batch_loss(logits, labels)
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")
    grads = backward_batch(dlogits, cache, params, hg, traj_ids, variant=variant)
    return loss, grads


def predict_scores(params, hg, feats, traj_ids, variant="full", batch_size=256):
    """Evaluation-mode logits for a list of trajectories."""
    use_rel, use_seq, attn_mode = variant_branches(variant)
    traj_ids = np.asarray(traj_ids)
    dim = params.rel.dim
    s_rel = None
    if use_rel:
        rel_out, _ = relational.forward_relational(
            params.rel, hg, training=False, attn_mode=attn_mode
        )
        s_rel = rel_out.s_rel
    out = np.zeros((traj_ids.shape[0], params.cls_b.shape[0]))
    for lo in range(0, traj_ids.shape[0], batch_size):
        ids = traj_ids[lo : lo + batch_size]
        n = ids.shape[0]
        s_st = np.zeros((n, dim))
        if use_seq:
            _, _, _, batch = _embed_batch(params, feats, ids)
            s_st, _ = sequence.lstm_final(batch, params.lstm)
        rows = s_rel[ids] if use_rel else np.zeros((n, dim))
        st_n, _ = l2_normalize_rows(s_st)
        rel_n, _ = l2_normalize_rows(rows)
        if use_rel and use_seq:
            s_final = st_n + rel_n
        elif use_rel:
            s_final = rel_n
        else:
            s_final = st_n
        out[lo : lo + n] = classify(s_final, params.cls_w, params.cls_b)
    return out
