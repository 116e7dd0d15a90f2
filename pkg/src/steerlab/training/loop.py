"""Task-model training loop with early stopping, plus task evaluation."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, no_grad
from ..autodiff.optim import build_optimizer
from ..autodiff.tensor import log_softmax, softmax
from ..data import make_batches, make_sofa_targets
from ..data.records import TimeSeriesRecord
from ..data.tasks import SOFA_HORIZON_H
from ..seqmodels import last_step_logits
from .metrics import auc, bootstrap_ci, confusion_matrix, masked_rmse

_OPTIMIZER_ALIASES = {
    "adam": "adam",
    "adaptive-moment": "adam",
    "sgd": "sgd",
    "plain-sgd": "sgd",
}


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    early_stop_patience: int = 10
    optimizer: str = "adam"

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.optimizer not in _OPTIMIZER_ALIASES:
            raise ValueError(
                f"optimizer must be one of {sorted(_OPTIMIZER_ALIASES)}, "
                f"got {self.optimizer!r}"
            )

    @property
    def optimizer_name(self) -> str:
        return _OPTIMIZER_ALIASES[self.optimizer]


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, history: dict):
        super().__init__(message)
        self.history = history


def _targets_fn(task, horizon_h: int = SOFA_HORIZON_H):
    if task == "ihm":
        return lambda r: 1.0 if r.death_hour is not None else 0.0
    if task == "sofa":
        return lambda r: make_sofa_targets(r, horizon_h)
    raise ValueError(f"unknown task {task!r}")


def _usable(records: list[TimeSeriesRecord], task: str, horizon_h: int):
    if task == "sofa":
        return [r for r in records if r.T > horizon_h]
    return list(records)


def _statics_fn(model):
    """Fusion models declare `uses_statics` and provide a per-record encoder."""
    if getattr(model, "uses_statics", False):
        return model.static_fn
    return None


def _model_outputs(model, batch, rng=None) -> Tensor:
    if getattr(model, "uses_statics", False):
        return model(Tensor(batch.x), batch.mask, rng, statics=batch.statics)
    return model(Tensor(batch.x), batch.mask, rng)


def _batch_loss(model, batch, task: str, rng=None) -> Tensor:
    outputs = _model_outputs(model, batch, rng)
    if task == "ihm":
        logits = last_step_logits(outputs, batch.lengths)
        logp = log_softmax(logits, axis=-1)
        onehot = np.zeros(logits.shape)
        onehot[np.arange(len(batch)), batch.targets.astype(int)] = 1.0
        return -(logp * Tensor(onehot)).sum() * (1.0 / len(batch))
    l_max = batch.targets.shape[1]
    preds = outputs[:, :l_max, 0]
    diff = preds - Tensor(batch.targets)
    w = Tensor(batch.target_mask.astype(np.float64))
    return (diff * diff * w).sum() * (1.0 / batch.target_mask.sum())


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.default_rng([seed, epoch, 0xE90C]).integers(2**31 - 1))


def train_task(
    model,
    parts: dict[str, list[TimeSeriesRecord]],
    task: str,
    cfg: TrainConfig,
    penalty_fn=None,
    horizon_h: int = SOFA_HORIZON_H,
    restore_best: bool = True,
) -> dict:
    """Optimize `model` on parts['train'], early-stopping on parts['val'].

    The best-validation parameters are restored into the model before
    returning (set restore_best=False to keep the final-epoch weights, e.g.
    for weight-magnitude analyses). `penalty_fn(model) -> Tensor` adds a
    differentiable penalty to every training step (used for selective weight
    regularization). Returns the loss history. Raises TrainingDivergedError
    on non-finite loss.
    """
    targets_fn = _targets_fn(task, horizon_h)
    train_recs = _usable(parts["train"], task, horizon_h)
    val_recs = _usable(parts.get("val", []), task, horizon_h)
    if not train_recs:
        raise ValueError("no usable training records for this task")

    optimizer = build_optimizer(cfg.optimizer_name, list(model.parameters()), cfg.lr)
    drop_rng = np.random.default_rng([cfg.seed, 0xD120])
    history = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    best_val = np.inf
    best_state = copy.deepcopy(model.state_dict())
    stale = 0

    for epoch in range(cfg.epochs):
        model.train()
        total, count = 0.0, 0
        for batch in make_batches(
            train_recs, cfg.batch_size,
            shuffle_seed=_epoch_seed(cfg.seed, epoch),
            targets_fn=targets_fn,
            statics_fn=_statics_fn(model),
        ):
            optimizer.zero_grad()
            loss = _batch_loss(model, batch, task, drop_rng)
            if penalty_fn is not None:
                loss = loss + penalty_fn(model)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDivergedError(
                    f"non-finite loss {loss_val} at epoch {epoch}, "
                    f"batch {count}", history,
                )
            loss.backward()
            optimizer.step()
            total += loss_val * len(batch)
            count += len(batch)
        history["train_loss"].append(total / count)

        if val_recs:
            val_loss = _dataset_loss(model, val_recs, task, cfg.batch_size, targets_fn)
            history["val_loss"].append(val_loss)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_state = copy.deepcopy(model.state_dict())
                history["best_epoch"] = epoch
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break

    if val_recs and restore_best:
        model.load_state_dict(best_state)
    elif not val_recs:
        history["best_epoch"] = cfg.epochs - 1
    model.eval()
    return history


def _dataset_loss(model, records, task, batch_size, targets_fn) -> float:
    model.eval()
    total, count = 0.0, 0
    with no_grad():
        for batch in make_batches(records, batch_size, targets_fn=targets_fn,
                                  statics_fn=_statics_fn(model)):
            loss = float(_batch_loss(model, batch, task).data)
            total += loss * len(batch)
            count += len(batch)
    model.train()
    return total / count


def predict_ihm(model, records, batch_size: int = 64):
    """(positive-class probabilities, labels) over `records`, in order."""
    model.eval()
    probs, labels = [], []
    with no_grad():
        for batch in make_batches(
            records, batch_size, targets_fn=_targets_fn("ihm"),
            statics_fn=_statics_fn(model),
        ):
            outputs = _model_outputs(model, batch)
            logits = last_step_logits(outputs, batch.lengths)
            p = softmax(logits, axis=-1).data[:, 1]
            probs.append(p)
            labels.append(batch.targets)
    return np.concatenate(probs), np.concatenate(labels).astype(np.int64)


def predict_sofa(model, records, batch_size: int = 64,
                 horizon_h: int = SOFA_HORIZON_H):
    """Padded (preds, targets, mask) blocks with one row per record."""
    model.eval()
    usable = _usable(records, "sofa", horizon_h)
    if not usable:
        raise ValueError("no records long enough for the forecasting task")
    l_max = max(r.T for r in usable) - horizon_h
    n = len(usable)
    preds = np.zeros((n, l_max))
    targets = np.zeros((n, l_max))
    mask = np.zeros((n, l_max), dtype=bool)
    row = 0
    with no_grad():
        for batch in make_batches(
            usable, batch_size, targets_fn=_targets_fn("sofa", horizon_h),
            statics_fn=_statics_fn(model),
        ):
            outputs = _model_outputs(model, batch)
            l_batch = batch.targets.shape[1]
            block = outputs.data[:, :l_batch, 0]
            for j in range(len(batch)):
                preds[row, :l_batch] = block[j]
                targets[row, :l_batch] = batch.targets[j]
                mask[row, :l_batch] = batch.target_mask[j]
                row += 1
    return preds, targets, mask


def evaluate_task(
    model, records, task: str, n_boot: int = 1000, seed: int = 0,
    horizon_h: int = SOFA_HORIZON_H,
):
    """MetricReport for the task metric: AUC (ihm) or masked RMSE (sofa)."""
    if task == "ihm":
        probs, labels = predict_ihm(model, records)
        report = bootstrap_ci(
            auc, (probs, labels), n_boot=n_boot, seed=seed, metric_name="auc"
        )
        report.confusion = confusion_matrix(probs, labels)
        return report
    preds, targets, mask = predict_sofa(model, records, horizon_h=horizon_h)
    return bootstrap_ci(
        masked_rmse, (preds, targets, mask),
        n_boot=n_boot, seed=seed, metric_name="rmse",
    )
