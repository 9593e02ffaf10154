"""Spatio-temporal point encoding.

A check-in becomes the sum of three learned d-vectors: a geohash-cell
embedding (7-character cells, roughly 150 m square), a half-hour slot
embedding (48 slots per day) and a weekday/weekend embedding.
"""

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import EncodingError

GEOHASH_BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
GEOHASH_LENGTH = 7
N_TIME_SLOTS = 48
UNK_TOKEN = "<unk>"
DAY_TOKENS = ("weekday", "weekend")


def geohash7(lat, lon):
    """Encode coordinates as a 7-character base-32 geohash cell.

    Standard bit interleaving, longitude on even bit positions.
    """
    if not (-90.0 <= lat <= 90.0):
        raise EncodingError(f"latitude {lat} outside [-90, 90]")
    if not (-180.0 <= lon <= 180.0):
        raise EncodingError(f"longitude {lon} outside [-180, 180]")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    bit = 0
    acc = 0
    even = True  # even bits refine longitude
    while len(chars) < GEOHASH_LENGTH:
        if even:
            mid = (lon_lo + lon_hi) / 2.0
            if lon >= mid:
                acc = (acc << 1) | 1
                lon_lo = mid
            else:
                acc = acc << 1
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2.0
            if lat >= mid:
                acc = (acc << 1) | 1
                lat_lo = mid
            else:
                acc = acc << 1
                lat_hi = mid
        even = not even
        bit += 1
        if bit == 5:
            chars.append(GEOHASH_BASE32[acc])
            bit = 0
            acc = 0
    return "".join(chars)


@dataclass(frozen=True)
class TimeFeatures:
    slot: int  # half-hour slot in [0, 48)
    weekend: bool

    @property
    def day_token(self):
        return DAY_TOKENS[1] if self.weekend else DAY_TOKENS[0]


def time_features(timestamp, utc_offset=0):
    """Half-hour slot and weekday/weekend class of a check-in time.

    Timestamps are taken as already-local wall clock; ``utc_offset`` (in
    seconds) shifts them first for datasets that store true UTC.
    """
    if timestamp < 0:
        raise EncodingError(f"negative timestamp {timestamp}")
    dt = datetime.fromtimestamp(int(timestamp) + int(utc_offset), tz=timezone.utc)
    slot = (dt.hour * 60 + dt.minute) // 30
    return TimeFeatures(slot=slot, weekend=dt.weekday() >= 5)


class Vocabulary:
    """Ordered token -> index map, optionally with a reserved UNK at index 0."""

    def __init__(self, tokens, with_unk=True):
        self.with_unk = with_unk
        self.tokens = ([UNK_TOKEN] if with_unk else []) + list(tokens)
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise EncodingError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token):
        """Index of a token; unknown tokens map to the UNK row."""
        idx = self._index.get(token)
        if idx is None:
            if self.with_unk:
                return 0
            raise EncodingError(f"token {token!r} not in vocabulary")
        return idx

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i, tok in enumerate(self.tokens):
                fh.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path):
        tokens = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2 or int(parts[1]) != lineno:
                    raise EncodingError(f"{path}: bad vocabulary line {lineno + 1}")
                tokens.append(parts[0])
        if tokens and tokens[0] == UNK_TOKEN:
            return cls(tokens[1:], with_unk=True)
        return cls(tokens, with_unk=False)


def slot_vocabulary():
    return Vocabulary([str(s) for s in range(N_TIME_SLOTS)])


def day_vocabulary():
    return Vocabulary(DAY_TOKENS)


def init_embedding_table(vocab_size, dim, rng):
    """Uniform init in [-1/sqrt(d), 1/sqrt(d)]; row 0 serves as UNK."""
    limit = 1.0 / np.sqrt(dim)
    return rng.uniform(-limit, limit, size=(vocab_size, dim))


@dataclass
class STEncoder:
    """Bundles the three vocabularies/tables plus the time offset."""

    geo_vocab: Vocabulary
    slot_vocab: Vocabulary
    day_vocab: Vocabulary
    geo_table: np.ndarray
    slot_table: np.ndarray
    day_table: np.ndarray
    utc_offset: int = 0

    def __post_init__(self):
        dims = {self.geo_table.shape[1], self.slot_table.shape[1], self.day_table.shape[1]}
        if len(dims) != 1:
            raise EncodingError(f"embedding tables disagree on dimension: {sorted(dims)}")
        for vocab, table, name in (
            (self.geo_vocab, self.geo_table, "geo"),
            (self.slot_vocab, self.slot_table, "slot"),
            (self.day_vocab, self.day_table, "day"),
        ):
            if len(vocab) != table.shape[0]:
                raise EncodingError(f"{name} table rows {table.shape[0]} != vocab {len(vocab)}")

    @property
    def dim(self):
        return self.geo_table.shape[1]

    def point_indices(self, checkin):
        """(geo, slot, day) table indices for one check-in."""
        cell = geohash7(checkin.lat, checkin.lon)
        tf = time_features(checkin.timestamp, self.utc_offset)
        return (
            self.geo_vocab.index(cell),
            self.slot_vocab.index(str(tf.slot)),
            self.day_vocab.index(tf.day_token),
        )

    def cell_indices(self, cell, timestamp):
        """Like point_indices but from a precomputed geohash cell."""
        tf = time_features(timestamp, self.utc_offset)
        return (
            self.geo_vocab.index(cell),
            self.slot_vocab.index(str(tf.slot)),
            self.day_vocab.index(tf.day_token),
        )

    def embed_point(self, checkin):
        """Sum of the three embedding rows for one check-in."""
        gi, si, di = self.point_indices(checkin)
        return self.geo_table[gi] + self.slot_table[si] + self.day_table[di]

    def embed_indices(self, geo_idx, slot_idx, day_idx):
        """Batched lookup-and-sum; index arrays share one shape."""
        return (
            self.geo_table[geo_idx]
            + self.slot_table[slot_idx]
            + self.day_table[day_idx]
        )

    def encode_sequence(self, points):
        """(T, d) matrix of point embeddings, one row per check-in, in order."""
        if not points:
            raise EncodingError("cannot encode an empty trajectory")
        return np.stack([self.embed_point(p) for p in points])
