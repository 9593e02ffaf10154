"""Preprocessed-directory layout: writing after preprocessing, loading for
training and evaluation.

Files (all TSV, LF, UTF-8):
  meta.tsv             key/value provenance incl. format version
  manifest.tsv         traj_id, user_id, week_key, split, point_count
  points.tsv           traj_id, timestamp, geohash cell, poi token
  vocab_{poi,geo,slot,day,user}.tsv   token, index
  balanced_train.tsv   training trajectory id multiset, one id per line
  balance_report.tsv   user_id, count before, count after
  stats.txt            headline statistics
"""

import os
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from . import st_encoder
from .data import BalanceConfig
from .errors import DataError, EvaluationError, FormatError
from .hypergraph import build_hypergraph
from .model import SequenceFeatures
from .st_encoder import Vocabulary, geohash7, time_features

FORMAT_VERSION = 1


def preprocess(input_path, out_dir, cfg):
    """Parse, filter, segment, split and balance; write all artifacts.

    Returns the stats dict that is also printed by the CLI.
    """
    with open(input_path, "rb") as fh:
        checkins, malformed = data_mod.parse_checkins(fh, cfg.format)
    if not checkins:
        raise DataError(f"{input_path}: no valid check-ins")
    filtered = data_mod.filter_sparse(
        checkins, cfg.min_user_checkins, cfg.min_poi_visits
    )
    if not filtered:
        raise DataError("no check-ins left after filtering")
    trajectories = data_mod.segment_trajectories(filtered)
    seeds = np.random.SeedSequence(cfg.split_seed).spawn(2)
    split = data_mod.split_dataset(
        trajectories,
        seed=seeds[0],
        chronological=cfg.split_mode == "chronological",
    )
    by_id = {t.traj_id: t for t in trajectories}
    train_trajs = [by_id[i] for i in split.train]
    balanced = data_mod.balance_training_set(
        train_trajs, BalanceConfig(theta_t=cfg.theta_t, seed=seeds[1])
    )

    os.makedirs(out_dir, exist_ok=True)
    poi_vocab = Vocabulary(
        sorted({c.poi_id for c in filtered}), with_unk=False
    )
    cells = {}
    for t in trajectories:
        for p in t.points:
            key = (p.lat, p.lon)
            if key not in cells:
                cells[key] = geohash7(p.lat, p.lon)
    geo_vocab = Vocabulary(sorted(set(cells.values())))
    user_vocab = Vocabulary(sorted(split.user_index), with_unk=False)

    poi_vocab.save(os.path.join(out_dir, "vocab_poi.tsv"))
    geo_vocab.save(os.path.join(out_dir, "vocab_geo.tsv"))
    st_encoder.slot_vocabulary().save(os.path.join(out_dir, "vocab_slot.tsv"))
    st_encoder.day_vocabulary().save(os.path.join(out_dir, "vocab_day.tsv"))
    user_vocab.save(os.path.join(out_dir, "vocab_user.tsv"))

    data_mod.write_manifest(os.path.join(out_dir, "manifest.tsv"), trajectories, split)
    with open(os.path.join(out_dir, "points.tsv"), "w", encoding="utf-8") as fh:
        for t in sorted(trajectories, key=lambda t: t.traj_id):
            for p in t.points:
                fh.write(
                    f"{t.traj_id}\t{p.timestamp}\t{cells[(p.lat, p.lon)]}\t{p.poi_id}\n"
                )
    with open(os.path.join(out_dir, "balanced_train.tsv"), "w", encoding="utf-8") as fh:
        for t in balanced:
            fh.write(f"{t.traj_id}\n")
    before = data_mod.user_trajectory_counts(train_trajs)
    after = data_mod.user_trajectory_counts(balanced)
    data_mod.write_balance_report(
        os.path.join(out_dir, "balance_report.tsv"), before, after
    )

    lengths = [len(t.points) for t in trajectories]
    stats = {
        "users": len(split.user_index),
        "trajectories": len(trajectories),
        "train": len(split.train),
        "valid": len(split.valid),
        "test": len(split.test),
        "balanced_train": len(balanced),
        "pois": len(poi_vocab),
        "geo_cells": len(geo_vocab) - 1,
        "checkins": len(filtered),
        "malformed_lines": malformed,
        "min_length": min(lengths),
        "max_length": max(lengths),
    }
    meta = {
        "format_version": FORMAT_VERSION,
        "utc_offset": cfg.utc_offset,
        "split_seed": cfg.split_seed,
        "split_mode": cfg.split_mode,
        "theta_t": cfg.theta_t,
        "min_user_checkins": cfg.min_user_checkins,
        "min_poi_visits": cfg.min_poi_visits,
    }
    _write_kv(os.path.join(out_dir, "meta.tsv"), meta)
    _write_kv(os.path.join(out_dir, "stats.txt"), stats)
    return stats


def _write_kv(path, mapping):
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in mapping.items():
            fh.write(f"{key}\t{val}\n")


def _read_kv(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            key, val = line.rstrip("\n").split("\t", 1)
            out[key] = val
    return out


@dataclass
class TrainingDataset:
    features: SequenceFeatures
    labels: np.ndarray  # (N,) class per trajectory
    train_ids: np.ndarray  # balanced multiset
    train_ids_unbalanced: np.ndarray
    valid_ids: np.ndarray
    test_ids: np.ndarray
    train_counts: np.ndarray  # (Q,) pre-balance per-class training counts
    n_geo: int
    n_slots: int
    n_days: int
    n_users: int
    n_pois: int
    user_vocab: Vocabulary
    traj_poi_lists: list

    def hypergraph(self):
        return build_hypergraph(self.traj_poi_lists, self.n_pois)


def load_dataset(out_dir):
    """Rebuild everything training and evaluation need from the artifacts."""
    meta = _read_kv(os.path.join(out_dir, "meta.tsv"))
    version = int(meta.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{out_dir}: artifact format version {version}, expected {FORMAT_VERSION}"
        )
    utc_offset = int(meta.get("utc_offset", 0))
    poi_vocab = Vocabulary.load(os.path.join(out_dir, "vocab_poi.tsv"))
    geo_vocab = Vocabulary.load(os.path.join(out_dir, "vocab_geo.tsv"))
    slot_vocab = Vocabulary.load(os.path.join(out_dir, "vocab_slot.tsv"))
    day_vocab = Vocabulary.load(os.path.join(out_dir, "vocab_day.tsv"))
    user_vocab = Vocabulary.load(os.path.join(out_dir, "vocab_user.tsv"))

    rows, split_ids = data_mod.read_manifest(os.path.join(out_dir, "manifest.tsv"))
    n_trajs = len(rows)
    if sorted(rows) != list(range(n_trajs)):
        raise FormatError(f"{out_dir}: manifest trajectory ids are not dense")

    geo_idx = [[] for _ in range(n_trajs)]
    slot_idx = [[] for _ in range(n_trajs)]
    day_idx = [[] for _ in range(n_trajs)]
    poi_lists = [[] for _ in range(n_trajs)]
    with open(os.path.join(out_dir, "points.tsv"), "r", encoding="utf-8") as fh:
        for line in fh:
            tid_s, ts_s, cell, poi = line.rstrip("\n").split("\t")
            tid = int(tid_s)
            tf = time_features(int(ts_s), utc_offset)
            geo_idx[tid].append(geo_vocab.index(cell))
            slot_idx[tid].append(slot_vocab.index(str(tf.slot)))
            day_idx[tid].append(day_vocab.index(tf.day_token))
            poi_lists[tid].append(poi_vocab.index(poi))
    for tid, (user, week, part, count) in rows.items():
        if len(poi_lists[tid]) != count:
            raise FormatError(f"{out_dir}: trajectory {tid} point count mismatch")

    labels = np.zeros(n_trajs, dtype=np.int64)
    for tid, (user, _w, _p, _c) in rows.items():
        labels[tid] = user_vocab.index(user)

    balanced = []
    with open(os.path.join(out_dir, "balanced_train.tsv"), "r", encoding="utf-8") as fh:
        for line in fh:
            balanced.append(int(line.strip()))

    train_counts = np.zeros(len(user_vocab), dtype=np.int64)
    for tid in split_ids["train"]:
        train_counts[labels[tid]] += 1

    features = SequenceFeatures(
        geo_idx=[np.asarray(v, dtype=np.int64) for v in geo_idx],
        slot_idx=[np.asarray(v, dtype=np.int64) for v in slot_idx],
        day_idx=[np.asarray(v, dtype=np.int64) for v in day_idx],
    )
    return TrainingDataset(
        features=features,
        labels=labels,
        train_ids=np.asarray(balanced, dtype=np.int64),
        train_ids_unbalanced=np.asarray(split_ids["train"], dtype=np.int64),
        valid_ids=np.asarray(split_ids["valid"], dtype=np.int64),
        test_ids=np.asarray(split_ids["test"], dtype=np.int64),
        train_counts=train_counts,
        n_geo=len(geo_vocab),
        n_slots=len(slot_vocab),
        n_days=len(day_vocab),
        n_users=len(user_vocab),
        n_pois=len(poi_vocab),
        user_vocab=user_vocab,
        traj_poi_lists=poi_lists,
    )


def check_params_match(params, dataset, hg):
    """Loaded checkpoint tensors must agree with the artifacts' dimensions."""
    if params.cls_w.shape[0] != dataset.n_users:
        raise EvaluationError(
            f"checkpoint has {params.cls_w.shape[0]} users, artifacts have {dataset.n_users}"
        )
    if params.rel.poi_embed.shape[0] != hg.n_pois:
        raise EvaluationError(
            f"checkpoint has {params.rel.poi_embed.shape[0]} POIs, hypergraph has {hg.n_pois}"
        )
    if params.rel.traj_embed.shape[0] != hg.n_trajs:
        raise EvaluationError(
            f"checkpoint has {params.rel.traj_embed.shape[0]} trajectories, "
            f"hypergraph has {hg.n_trajs}"
        )
