"""Optimization loop: Adam with decoupled weight decay, reduce-on-plateau
learning rate, early stopping on validation top-1 accuracy.

The whole loop is a pure function of (dataset, config, seed): batch
shuffling, dropout and parameter init all draw from seeded generators, so
identical runs produce bit-identical parameters and history.
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .errors import TrainingError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    dim: int = 128
    n_layers: int = 2
    epochs: int = 50
    batch_size: int = 64
    dropout: float = 0.3
    weight_decay: float = 5e-4
    lr_init: float = 1e-3
    lr_min: float = 1e-6
    lr_factor: float = 0.1
    plateau_patience: int = 2
    early_stop_patience: int = 5
    theta_t: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if self.lr_min > self.lr_init:
            raise TrainingError("lr_min must not exceed lr_init")
        for name in ("dim", "n_layers", "epochs", "batch_size",
                     "plateau_patience", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise TrainingError(f"{name} must be positive")


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3

    @classmethod
    def for_params(cls, params, lr):
        named = params.named_tensors()
        return cls(
            m={n: np.zeros_like(t) for n, t in named},
            v={n: np.zeros_like(t) for n, t in named},
            step=0,
            lr=lr,
        )


def adam_step(params, grads, state, weight_decay):
    """In-place Adam update with weight decay decoupled from the moments."""
    state.step += 1
    b1t = 1.0 - ADAM_BETA1 ** state.step
    b2t = 1.0 - ADAM_BETA2 ** state.step
    grad_of = dict(grads.named_tensors())
    for name, tensor in params.named_tensors():
        g = grad_of.get(name)
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        update = (m / b1t) / (np.sqrt(v / b2t) + ADAM_EPS)
        if weight_decay > 0.0:
            update = update + weight_decay * tensor
        tensor -= state.lr * update


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_acc1: float
    lr: float


@dataclass
class TrainResult:
    params: object  # parameters from the best-validation epoch
    history: list  # EpochRecords, one per completed epoch
    best_epoch: int
    best_valid_acc1: float


def accuracy_at_1(scores, labels):
    """Top-1 accuracy; argmax breaks ties toward the lower class index."""
    return float(np.mean(np.argmax(scores, axis=1) == np.asarray(labels)))


def train(dataset, hg, config, variant="full", rng=None):
    """Run the training loop and return the best-validation parameters.

    ``dataset`` bundles features, per-split trajectory ids and labels (see
    ``artifacts.TrainingDataset``).  ``rng`` overrides the config-seeded
    generator (used by the repeat machinery); parameter init draws from the
    same stream, so one seed pins the entire run.
    """
    model_mod.validate_variant(variant)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    params = model_mod.init_model_params(
        n_pois=hg.n_pois,
        n_trajs=hg.n_trajs,
        n_geo=dataset.n_geo,
        n_slots=dataset.n_slots,
        n_days=dataset.n_days,
        n_users=dataset.n_users,
        dim=config.dim,
        n_layers=config.n_layers,
        rng=rng,
        dropout_rate=config.dropout,
    )
    train_ids = np.asarray(
        dataset.train_ids if variant != "d" else dataset.train_ids_unbalanced
    )
    labels_of = dataset.labels
    valid_ids = np.asarray(dataset.valid_ids)
    valid_labels = labels_of[valid_ids]

    state = AdamState.for_params(params, config.lr_init)
    history = []
    best_acc = -1.0
    best_epoch = -1
    best_params = None
    stall = 0
    plateau = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_ids.shape[0])
        epoch_ids = train_ids[order]
        losses = []
        for lo in range(0, epoch_ids.shape[0], config.batch_size):
            ids = epoch_ids[lo : lo + config.batch_size]
            loss, grads = model_mod.loss_and_grads(
                params, hg, dataset.features, ids, labels_of[ids],
                variant=variant, training=True, rng=rng,
            )
            adam_step(params, grads, state, config.weight_decay)
            losses.append(loss)
        scores = model_mod.predict_scores(
            params, hg, dataset.features, valid_ids, variant=variant
        )
        acc1 = accuracy_at_1(scores, valid_labels)
        history.append(EpochRecord(epoch, float(np.mean(losses)), acc1, state.lr))
        if acc1 > best_acc:
            best_acc = acc1
            best_epoch = epoch
            best_params = copy.deepcopy(params)
            stall = 0
            plateau = 0
        else:
            stall += 1
            plateau += 1
            if plateau >= config.plateau_patience:
                state.lr = max(state.lr * config.lr_factor, config.lr_min)
                plateau = 0
            if stall >= config.early_stop_patience:
                break
    if best_params is None:
        raise TrainingError("training produced no epochs")
    return TrainResult(
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_valid_acc1=best_acc,
    )


def write_history(path, history):
    """One line per epoch: epoch, train loss, validation ACC@1, lr."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(
                f"{rec.epoch}\t{rec.train_loss:.6f}\t{rec.valid_acc1:.4f}\t{rec.lr:.6e}\n"
            )


def read_history(path):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            e, tl, va, lr = line.rstrip("\n").split("\t")
            out.append(EpochRecord(int(e), float(tl), float(va), float(lr)))
    return out
