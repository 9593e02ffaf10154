"""Seeded synthetic check-in corpora for desk-scale end-to-end validation.

Each user draws a sharp POI preference: a small "owned" set (disjoint
across users) plus a personal handful of haunts from a shared pool.
Haunts overlap across users, so any single POI is ambiguous evidence and
linking a trajectory requires its POI combination.  The owned share grows
with the concentration parameter and reaches 1 in the infinite limit, at
which point user POI sets are disjoint and a nearest-POI-set classifier
attains perfect accuracy.  Per-user weekly activity decays with a power
law controlled by the imbalance exponent.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import CheckIn, format_canonical_line
from .errors import SynthError

# Monday 2012-01-02 00:00:00 UTC
WEEK_EPOCH = 1325462400
WEEK_SECONDS = 7 * 86400
# grid spacing ~333 m with ±33 m jitter keeps 7-char geohash cells (~150 m)
# distinct across POIs
GRID_STEP_DEG = 0.003
JITTER_DEG = 0.0003


@dataclass
class SynthConfig:
    n_users: int = 20
    n_pois: int = 60
    weeks: int = 12
    checkins_min: int = 4
    checkins_max: int = 12
    preference_concentration: float = 9.0
    imbalance_exponent: float = 1.0
    seed: int = 7

    def __post_init__(self):
        if self.n_users < 4:
            raise SynthError("need at least 4 users")
        if self.n_pois < self.n_users:
            raise SynthError("need at least one POI per user")
        if self.weeks < 1 or self.checkins_min < 1 or self.checkins_max < self.checkins_min:
            raise SynthError("invalid week/check-in counts")
        if self.preference_concentration < 0:
            raise SynthError("concentration must be non-negative")


def user_activity_rates(cfg):
    """Probability that a user is active in a given week, by user rank."""
    ranks = np.arange(cfg.n_users, dtype=np.float64)
    return (ranks + 1.0) ** (-cfg.imbalance_exponent)


N_HAUNTS = 6
# background visits split between the user's stable haunts and one-off
# visits to a diffuse shared tail of rarely-seen POIs
HAUNT_SHARE = 0.5
TAIL_POOL_FRACTION = 0.5


def owned_poi_sets(cfg):
    """Disjoint owned-POI index sets; half the POIs stay shared background."""
    per_user = max(1, (cfg.n_pois // 2) // cfg.n_users)
    return [list(range(u * per_user, (u + 1) * per_user)) for u in range(cfg.n_users)]


def shared_pools(cfg, owned):
    """(haunt candidate pool, diffuse tail pool) from the unowned POIs."""
    first_shared = max(pois[-1] for pois in owned) + 1
    pool = np.arange(first_shared, cfg.n_pois)
    n_tail = int(pool.size * TAIL_POOL_FRACTION)
    if pool.size and n_tail == pool.size:
        n_tail = pool.size - 1
    return pool[: pool.size - n_tail], pool[pool.size - n_tail :]


def haunt_poi_sets(cfg, pool, rng):
    """Per-user subsets of the haunt pool; users overlap here by design."""
    if pool.size == 0:
        return [np.empty(0, dtype=np.int64) for _ in range(cfg.n_users)]
    size = min(N_HAUNTS, pool.size)
    return [np.sort(rng.choice(pool, size=size, replace=False)) for _ in range(cfg.n_users)]


def poi_coordinates(cfg, rng):
    """Jittered grid around the origin; spacing keeps geohash cells distinct."""
    side = math.ceil(math.sqrt(cfg.n_pois))
    coords = []
    for p in range(cfg.n_pois):
        lat = (p // side) * GRID_STEP_DEG + rng.uniform(-JITTER_DEG, JITTER_DEG)
        lon = (p % side) * GRID_STEP_DEG + rng.uniform(-JITTER_DEG, JITTER_DEG)
        coords.append((lat, lon))
    return coords


def generate(cfg):
    """Generate check-ins; returns (checkins, truth) with truth mapping
    user_id -> owned POI ids.

    Every user is active often enough to survive the default sparsity
    filter (at least 10 check-ins); extra active weeks follow the power-law
    activity rate.  Check-in times are uniform within each active week.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    coords = poi_coordinates(cfg, rng)
    owned = owned_poi_sets(cfg)
    haunt_pool, tail_pool = shared_pools(cfg, owned)
    haunts = haunt_poi_sets(cfg, haunt_pool, rng)
    rates = user_activity_rates(cfg)
    conc = cfg.preference_concentration
    owned_share = 1.0 if math.isinf(conc) else conc / (conc + 1.0)
    # enough forced weeks that the user clears the sparsity filter even if
    # a few background check-ins later vanish with an under-visited POI,
    # and has at least 5 trajectories so it lands in all three splits
    forced = min(cfg.weeks, max(math.ceil(10 / cfg.checkins_min) + 1, 5))

    checkins = []
    truth = {}
    for u in range(cfg.n_users):
        user_id = f"u{u:03d}"
        truth[user_id] = [f"p{p:03d}" for p in owned[u]]
        active = np.zeros(cfg.weeks, dtype=bool)
        active[:forced] = True
        active |= rng.random(cfg.weeks) < rates[u]
        own = np.array(owned[u])
        all_haunts = haunts[u] if haunts[u].size else own
        for w in range(cfg.weeks):
            if not active[w]:
                continue
            # weekly drift: each week concentrates on half of the haunts,
            # so linking needs co-occurrence patterns across weeks
            n_week = max(1, (all_haunts.shape[0] + 1) // 2)
            background = np.sort(rng.choice(all_haunts, size=n_week, replace=False))
            count = int(rng.integers(cfg.checkins_min, cfg.checkins_max + 1))
            times = np.sort(rng.integers(0, WEEK_SECONDS, size=count))
            for ts in times:
                if rng.random() < owned_share:
                    poi = int(own[rng.integers(0, own.shape[0])])
                elif tail_pool.size and rng.random() >= HAUNT_SHARE:
                    poi = int(tail_pool[rng.integers(0, tail_pool.shape[0])])
                else:
                    poi = int(background[rng.integers(0, background.shape[0])])
                lat, lon = coords[poi]
                checkins.append(
                    CheckIn(
                        user_id=user_id,
                        timestamp=WEEK_EPOCH + w * WEEK_SECONDS + int(ts),
                        lat=lat,
                        lon=lon,
                        poi_id=f"p{poi:03d}",
                    )
                )
    return checkins, truth


def write_corpus(cfg, tsv_path, truth_path):
    """Write the canonical TSV plus the user -> owned POIs sidecar."""
    checkins, truth = generate(cfg)
    with open(tsv_path, "w", encoding="utf-8") as fh:
        for c in checkins:
            fh.write(format_canonical_line(c) + "\n")
    with open(truth_path, "w", encoding="utf-8") as fh:
        for user in sorted(truth):
            fh.write(f"{user}\t{','.join(truth[user])}\n")
    return checkins, truth
