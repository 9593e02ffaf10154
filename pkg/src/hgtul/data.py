"""Check-in ingestion and trajectory preparation.

Pipeline: parse -> filter sparse users/POIs -> segment into weekly
trajectories -> per-user train/valid/test split -> balance the training
multiset.  Every seeded operation is a pure function of (input, seed).
"""

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import BalanceError, DataError, EmptyDatasetError, FormatError

MALFORMED_FRACTION_LIMIT = 0.10


@dataclass(frozen=True)
class CheckIn:
    user_id: str
    timestamp: int  # epoch seconds, already-local wall clock
    lat: float
    lon: float
    poi_id: str


@dataclass
class Trajectory:
    traj_id: int
    user_id: str
    week_key: str  # ISO year-week label, e.g. "2012-W05"
    points: list  # CheckIns sorted by timestamp, one user, one week


@dataclass
class DatasetSplit:
    train: list  # traj_ids
    valid: list
    test: list
    user_index: dict  # user_id -> class label in [0, Q)


@dataclass
class BalanceConfig:
    theta_t: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.theta_t < 0:
            raise BalanceError(f"theta_t must be non-negative, got {self.theta_t}")


def _parse_canonical(fields):
    user, ts, lat, lon, poi = fields
    return user, int(ts), float(lat), float(lon), poi


def _parse_gowalla(fields):
    # user \t ISO-8601 UTC time \t lat \t lon \t location id
    user, when, lat, lon, loc = fields
    dt = datetime.strptime(when, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return user, int(dt.timestamp()), float(lat), float(lon), loc


def _parse_foursquare(fields):
    # user \t venue \t category id \t category name \t lat \t lon \t
    # tz offset (minutes) \t UTC time; offset converts to local wall clock
    user, venue, _cat_id, _cat_name, lat, lon, offset, when = fields
    dt = datetime.strptime(when, "%a %b %d %H:%M:%S %z %Y")
    ts = int(dt.timestamp()) + int(offset) * 60
    return user, ts, float(lat), float(lon), venue

_FIELD_COUNT = {"canonical_tsv": 5, "gowalla_raw": 5, "foursquare_raw": 8}
_LINE_PARSERS = {
    "canonical_tsv": _parse_canonical,
    "gowalla_raw": _parse_gowalla,
    "foursquare_raw": _parse_foursquare,
}


def parse_checkins(source, fmt="canonical_tsv"):
    """Parse a byte stream of check-in lines into CheckIns.

    Returns (checkins, malformed_count).  Line order is preserved; blank
    lines are ignored.  More than 10% malformed lines raises FormatError
    naming the first offending line.

    Raw Gowalla / Foursquare rows are normalized into the canonical field
    set (user, epoch seconds, lat, lon, poi).
    """
    if fmt not in _LINE_PARSERS:
        raise FormatError(f"unknown check-in format {fmt!r}")
    parser = _LINE_PARSERS[fmt]
    nfields = _FIELD_COUNT[fmt]
    data = source.read() if hasattr(source, "read") else source
    checkins = []
    malformed = 0
    first_bad = None
    total = 0
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        if not raw.strip():
            continue
        total += 1
        try:
            fields = raw.decode("utf-8").rstrip("\r").split("\t")
            if len(fields) != nfields:
                raise ValueError(f"expected {nfields} fields, got {len(fields)}")
            user, ts, lat, lon, poi = parser(fields)
            if ts <= 0:
                raise ValueError("timestamp must be positive")
            if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
                raise ValueError("coordinates out of range")
            if not user or not poi:
                raise ValueError("empty identifier")
        except (ValueError, UnicodeDecodeError):
            malformed += 1
            if first_bad is None:
                first_bad = lineno
            continue
        checkins.append(CheckIn(user, ts, lat, lon, poi))
    if total and malformed / total > MALFORMED_FRACTION_LIMIT:
        raise FormatError(
            f"{malformed}/{total} malformed lines (first at line {first_bad})"
        )
    return checkins, malformed


def filter_sparse(checkins, min_user_checkins=10, min_poi_visits=10):
    """Drop sparse users then sparse POIs, repeating until stable.

    Removing a POI can push a user below threshold (and vice versa), so the
    pass alternates until a full sweep removes nothing; the result is the
    unique fixpoint and is deterministic.
    """
    if min_user_checkins < 1 or min_poi_visits < 1:
        raise DataError("filter thresholds must be >= 1")
    current = list(checkins)
    last_removed = None
    while True:
        removed = False
        user_counts = {}
        for c in current:
            user_counts[c.user_id] = user_counts.get(c.user_id, 0) + 1
        keep_users = {u for u, n in user_counts.items() if n >= min_user_checkins}
        if len(keep_users) < len(user_counts):
            current = [c for c in current if c.user_id in keep_users]
            removed = True
            last_removed = "user"
        poi_counts = {}
        for c in current:
            poi_counts[c.poi_id] = poi_counts.get(c.poi_id, 0) + 1
        keep_pois = {p for p, n in poi_counts.items() if n >= min_poi_visits}
        if len(keep_pois) < len(poi_counts):
            current = [c for c in current if c.poi_id in keep_pois]
            removed = True
            last_removed = "poi"
        if not removed:
            break
    if checkins and not current:
        raise EmptyDatasetError(
            f"filtering removed everything (last removed: {last_removed}s)"
        )
    return current


def week_key_of(timestamp):
    """ISO year-week label; weeks start Monday 00:00 UTC, half-open."""
    iso = datetime.fromtimestamp(int(timestamp), tz=timezone.utc).isocalendar()
    return f"{iso[0]:04d}-W{iso[1]:02d}"


def segment_trajectories(checkins):
    """Cut each user's time-sorted check-ins at ISO week boundaries.

    Each non-empty (user, week) bucket becomes one Trajectory; traj_ids are
    assigned densely in (user_id, week_key) lexical order.
    """
    if not checkins:
        raise EmptyDatasetError("no check-ins to segment")
    buckets = {}
    for order, c in enumerate(checkins):
        buckets.setdefault((c.user_id, week_key_of(c.timestamp)), []).append(
            (c.timestamp, order, c)
        )
    trajectories = []
    for traj_id, key in enumerate(sorted(buckets)):
        user_id, week = key
        pts = [c for _, _, c in sorted(buckets[key])]
        trajectories.append(Trajectory(traj_id, user_id, week, pts))
    return trajectories


def split_dataset(trajectories, ratios=(6, 2, 2), seed=0, chronological=False):
    """Per-user split into train/valid/test.

    For a user with n >= 5 trajectories: floor(n * ratio) each for valid and
    test, remainder to train.  Users with fewer than 5 put their first
    trajectory in train and alternate the rest valid/test.  Order within a
    user is a seeded shuffle (or time order when ``chronological``).
    """
    total = sum(ratios)
    frac_valid = ratios[1] / total
    frac_test = ratios[2] / total
    per_user = {}
    for t in trajectories:
        per_user.setdefault(t.user_id, []).append(t)
    rng = np.random.default_rng(seed)
    train, valid, test = [], [], []
    for user_id in sorted(per_user):
        trajs = sorted(per_user[user_id], key=lambda t: t.week_key)
        if not chronological:
            trajs = [trajs[i] for i in rng.permutation(len(trajs))]
        n = len(trajs)
        if n >= 5:
            n_valid = math.floor(n * frac_valid)
            n_test = math.floor(n * frac_test)
            n_train = n - n_valid - n_test
            train += [t.traj_id for t in trajs[:n_train]]
            valid += [t.traj_id for t in trajs[n_train : n_train + n_valid]]
            test += [t.traj_id for t in trajs[n_train + n_valid :]]
        else:
            train.append(trajs[0].traj_id)
            for i, t in enumerate(trajs[1:]):
                (valid if i % 2 == 0 else test).append(t.traj_id)
    user_index = {u: i for i, u in enumerate(sorted(per_user))}
    return DatasetSplit(sorted(train), sorted(valid), sorted(test), user_index)


def balance_training_set(train_trajectories, cfg):
    """Duplicate-or-trim per-user training trajectories toward the mean.

    With n_ave = (total trajectories) / (user count) from the original
    train set: users below n_ave are topped up to ceil(n_ave) with seeded
    uniform duplicates (with replacement, drawn from the user's original
    list); users above (1 + theta_t) * n_ave are trimmed by seeded uniform
    removal down to floor of that cap.  Duplicates share the source
    traj_id: they reweight sampling, they are not new hyperedges.
    """
    if not train_trajectories:
        raise EmptyDatasetError("empty training set")
    per_user = {}
    for t in train_trajectories:
        per_user.setdefault(t.user_id, []).append(t)
    n_total = len(train_trajectories)
    n_users = len(per_user)
    n_ave = n_total / n_users
    low_target = math.ceil(n_ave)
    cap = (1.0 + cfg.theta_t) * n_ave
    high_target = math.floor(cap)
    if high_target < low_target:
        raise BalanceError(
            f"cap floor({cap:.3f}) < ceil(n_ave={n_ave:.3f}); increase theta_t"
        )
    rng = np.random.default_rng(cfg.seed)
    balanced = []
    for user_id in sorted(per_user):
        trajs = per_user[user_id]
        n = len(trajs)
        if n < n_ave:
            extra = [trajs[i] for i in rng.integers(0, n, size=low_target - n)]
            balanced += trajs + extra
        elif n > cap:
            keep = rng.choice(n, size=high_target, replace=False)
            balanced += [trajs[i] for i in sorted(keep)]
        else:
            balanced += trajs
    return balanced


def user_trajectory_counts(trajectories):
    counts = {}
    for t in trajectories:
        counts[t.user_id] = counts.get(t.user_id, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# Interchange formats


def format_canonical_line(checkin):
    """Canonical TSV row: user, epoch seconds, lat, lon, poi."""
    return (
        f"{checkin.user_id}\t{checkin.timestamp}\t{checkin.lat:.6f}\t"
        f"{checkin.lon:.6f}\t{checkin.poi_id}"
    )


def write_manifest(path, trajectories, split):
    """traj_id, user_id, week_key, split, point_count — one row per trajectory."""
    split_of = {}
    for name, ids in (("train", split.train), ("valid", split.valid), ("test", split.test)):
        for tid in ids:
            split_of[tid] = name
    with open(path, "w", encoding="utf-8") as fh:
        for t in sorted(trajectories, key=lambda t: t.traj_id):
            fh.write(
                f"{t.traj_id}\t{t.user_id}\t{t.week_key}\t{split_of[t.traj_id]}\t{len(t.points)}\n"
            )


def read_manifest(path):
    """Returns (rows, split_ids) where rows map traj_id -> (user, week, split, count)."""
    rows = {}
    split_ids = {"train": [], "valid": [], "test": []}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            tid_s, user, week, part, count = line.rstrip("\n").split("\t")
            tid = int(tid_s)
            if part not in split_ids:
                raise FormatError(f"manifest: unknown split {part!r}")
            rows[tid] = (user, week, part, int(count))
            split_ids[part].append(tid)
    return rows, split_ids


def write_balance_report(path, before_counts, after_counts):
    """Per-user before/after trajectory counts of the balancing step."""
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(before_counts):
            fh.write(f"{user}\t{before_counts[user]}\t{after_counts.get(user, 0)}\n")
