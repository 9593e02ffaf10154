"""Run configuration.

Hyperparameters live in a ``key = value`` file; command-line flags override
file values.  Defaults reproduce the published training setup, so a bare
run needs no config at all.  Unknown keys are rejected.
"""

from dataclasses import dataclass, fields

from .errors import ConfigError
from .model import VARIANTS
from .training import TrainConfig


@dataclass
class RunConfig:
    # model / optimization
    dim: int = 128
    layers: int = 2
    epochs: int = 50
    batch_size: int = 64
    dropout: float = 0.3
    weight_decay: float = 5e-4
    lr_init: float = 1e-3
    lr_min: float = 1e-6
    lr_factor: float = 0.1
    plateau_patience: int = 2
    early_stop_patience: int = 5
    seed: int = 42
    # preprocessing
    input: str = ""
    format: str = "canonical_tsv"
    min_user_checkins: int = 10
    min_poi_visits: int = 10
    utc_offset: int = 0
    split_mode: str = "random"
    split_seed: int = 42
    theta_t: float = 0.5
    # run orchestration
    variant: str = "full"
    repeat: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.split_mode not in ("random", "chronological"):
            raise ConfigError(f"split_mode must be random|chronological, got {self.split_mode!r}")
        if self.repeat < 1:
            raise ConfigError("repeat must be >= 1")
        if self.theta_t < 0:
            raise ConfigError("theta_t must be non-negative")

    def train_config(self):
        return TrainConfig(
            dim=self.dim,
            n_layers=self.layers,
            epochs=self.epochs,
            batch_size=self.batch_size,
            dropout=self.dropout,
            weight_decay=self.weight_decay,
            lr_init=self.lr_init,
            lr_min=self.lr_min,
            lr_factor=self.lr_factor,
            plateau_patience=self.plateau_patience,
            early_stop_patience=self.early_stop_patience,
            theta_t=self.theta_t,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _convert(key, raw):
    kind = _FIELD_TYPES[key]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config_file(path):
    """Read ``key = value`` lines into a dict; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in body.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _convert(key, raw)
    return values


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional file plus explicit overrides."""
    values = parse_config_file(path) if path else {}
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    return RunConfig(**values)
