import numpy as np
import pytest

from hgtul import kernels
from hgtul.artifacts import TrainingDataset
from hgtul.hypergraph import build_hypergraph
from hgtul.model import SequenceFeatures, init_model_params
from hgtul.st_encoder import Vocabulary

from oracles import random_hypergraph_lists


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once, outside any timed test section."""
    lists = [[0, 1], [1]]
    hg = build_hypergraph(lists, 2)
    vals = np.ones(hg.nnz)
    x = np.ones((2, 3))
    y, xs, u = kernels.hyperop_forward(
        hg.indptr, hg.cols, hg.rows, vals, hg.d_isqrt, hg.b_inv, x
    )
    kernels.hyperop_backward(
        hg.indptr, hg.cols, hg.rows, vals, hg.d_isqrt, hg.b_inv, y, xs, u
    )
    probs = kernels.segment_softmax(hg.indptr, np.zeros(hg.nnz))
    kernels.segment_softmax_backward(hg.indptr, probs, probs)
    data = np.zeros((2, 3, 4))
    lengths = np.array([3, 1], dtype=np.int64)
    wx = np.zeros((4, 16))
    wh = np.zeros((4, 16))
    b = np.zeros(16)
    h, g, c, hs = kernels.lstm_forward(data, lengths, wx, wh, b)
    kernels.lstm_backward(data, lengths, wx, wh, g, c, hs, h)


def make_random_hypergraph(rng, n_pois, n_trajs):
    return build_hypergraph(random_hypergraph_lists(rng, n_pois, n_trajs), n_pois)


@pytest.fixture
def micro_setup():
    """Tiny end-to-end instance: 6 POIs, 4 trajectories, 3 users, d=8, M=2."""
    rng = np.random.default_rng(2024)
    n_pois, n_trajs, n_users, dim = 6, 4, 3, 8
    lists = [[0, 1, 2], [2, 3], [3, 4, 5], [0, 5]]
    hg = build_hypergraph(lists, n_pois)
    n_geo, n_slots, n_days = 6, 49, 3
    params = init_model_params(
        n_pois, n_trajs, n_geo, n_slots, n_days, n_users, dim,
        n_layers=2, rng=rng, dropout_rate=0.0,
    )
    feats = SequenceFeatures(geo_idx=[], slot_idx=[], day_idx=[])
    for t in range(n_trajs):
        ln = int(rng.integers(1, 4))
        feats.geo_idx.append(rng.integers(0, n_geo, size=ln))
        feats.slot_idx.append(rng.integers(0, n_slots, size=ln))
        feats.day_idx.append(rng.integers(0, n_days, size=ln))
    traj_ids = np.arange(n_trajs)
    labels = np.array([0, 1, 2, 1])
    return params, hg, feats, traj_ids, labels


def make_toy_dataset(seed=0, n_users=4, trajs_per_user=6, n_pois=8):
    """In-memory separable dataset: each user sticks to one home POI."""
    rng = np.random.default_rng(seed)
    n_trajs = n_users * trajs_per_user
    poi_lists, geo_idx, slot_idx, day_idx, labels = [], [], [], [], []
    n_geo = n_pois + 1
    for u in range(n_users):
        for _ in range(trajs_per_user):
            home = u * (n_pois // n_users)
            pois = [home] + list(rng.integers(0, n_pois, size=rng.integers(1, 3)))
            poi_lists.append(pois)
            geo_idx.append(np.asarray([p + 1 for p in pois], dtype=np.int64))
            slot_idx.append(rng.integers(1, 49, size=len(pois)))
            day_idx.append(rng.integers(1, 3, size=len(pois)))
            labels.append(u)
    used = {p for lst in poi_lists for p in lst}
    for p in range(n_pois):
        if p not in used:
            poi_lists[int(rng.integers(0, n_trajs))].append(p)
    order = rng.permutation(n_trajs)
    ids = np.arange(n_trajs)[order]
    n_train = int(0.6 * n_trajs)
    n_valid = int(0.2 * n_trajs)
    train = np.sort(ids[:n_train])
    valid = np.sort(ids[n_train : n_train + n_valid])
    test = np.sort(ids[n_train + n_valid :])
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels[train], minlength=n_users)
    dataset = TrainingDataset(
        features=SequenceFeatures(geo_idx=geo_idx, slot_idx=slot_idx, day_idx=day_idx),
        labels=labels,
        train_ids=train.copy(),
        train_ids_unbalanced=train.copy(),
        valid_ids=valid,
        test_ids=test,
        train_counts=counts,
        n_geo=n_geo,
        n_slots=49,
        n_days=3,
        n_users=n_users,
        n_pois=n_pois,
        user_vocab=Vocabulary([f"u{i}" for i in range(n_users)], with_unk=False),
        traj_poi_lists=poi_lists,
    )
    return dataset, build_hypergraph(poi_lists, n_pois)
