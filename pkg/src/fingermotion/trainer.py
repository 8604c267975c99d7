"""Training loop: multi-horizon loss, Adam, stepped learning-rate decay.

All randomness derives from the single ``seed``: initial weights come from
streams keyed by ``(seed, parameter name)`` and ``default_rng([seed, epoch])``
shuffles and drives dropout within an epoch, so a run resumed from an epoch
snapshot replays the remaining epochs exactly.
"""
import csv
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import read_checkpoint, save_checkpoint, save_model
from .data import samples_from_sequences
from .errors import ConfigError, ContractError, TrainingError
from .evaluator import mae
from .model import Model, ModelConfig, fit_buffers, param_shapes
from .ndgrad import AdamState, adam_step


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 2048
    lr: float = 1e-3
    lr_decay: float = 0.95
    decay_every: int = 20
    weight_decay: float = 0.0
    seed: int = 0
    deterministic: bool = False      # drop the last partial batch so batch counts are stable
    stride: int = 1                  # window stride when cutting training samples
    val_stride: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")
        if self.stride < 1 or self.val_stride < 1:
            raise ConfigError("strides must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def lr_at(epoch, cfg=None):
    """``lr * decay ** floor(epoch / decay_every)``."""
    cfg = cfg or TrainConfig()
    if epoch < 0:
        raise ContractError("epoch must be >= 0")
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)


def batches(n, cfg, epoch):
    """Shuffled index batches for one epoch and the generator that made them."""
    rng = np.random.default_rng([cfg.seed, epoch])
    perm = rng.permutation(n)
    stop = n - n % cfg.batch_size if cfg.deterministic and n >= cfg.batch_size else n
    return [perm[i:i + cfg.batch_size] for i in range(0, stop, cfg.batch_size)], rng


def train_step(model, batch, state, rng=None, training=True):
    """One forward/backward/Adam update; returns the loss value."""
    p = model.tensors(requires_grad=True)
    loss = model.loss(batch, p=p, training=training, rng=rng)
    value = float(loss.data)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in p.items()}
    if not np.isfinite(value):
        bad = next((k for k, g in grads.items() if not np.all(np.isfinite(g))), None)
        raise TrainingError(f"non-finite loss {value}" +
                            (f"; first non-finite gradient in {bad!r}" if bad else ""))
    adam_step(model.params, grads, state)
    return value


@dataclass
class TrainResult:
    model: Model                 # best checkpoint (or final epoch without a val split)
    log: list                    # one dict per epoch
    best_epoch: int
    state: AdamState
    final: Model = None          # weights after the last epoch


def val_columns(cfg):
    return [f"val_mae_t{h:g}" for h in cfg.horizons_ms]


def _quantized(model):
    """Copy of ``model`` with weights rounded to checkpoint precision."""
    params = {k: v.astype(np.float32).astype(np.float64) for k, v in model.params.items()}
    buffers = {k: v.astype(np.float32).astype(np.float64) for k, v in model.buffers.items()}
    return Model(model.cfg, params=params, buffers=buffers)


def validation_mae(model, samples, horizons_ms, chunk=64):
    pred = model.predict(samples.windows, np.asarray(horizons_ms) / 1000.0, chunk=chunk)
    return [mae(pred[k], samples.targets[h]) for k, h in enumerate(horizons_ms)]


def save_snapshot(model, state, path, meta):
    """Full-precision weights, buffers and Adam moments for exact resume."""
    arrays = {f"param.{k}": v for k, v in model.params.items()}
    arrays.update({f"buffer.{k}": v for k, v in model.buffers.items()})
    arrays.update({f"adam.m.{k}": v for k, v in state.m.items()})
    arrays.update({f"adam.v.{k}": v for k, v in state.v.items()})
    meta = dict(meta, adam_step=state.step, adam_lr=state.lr)
    save_checkpoint(arrays, model.cfg.to_dict(), path, meta, dtype="f8")


def load_snapshot(path):
    arrays, cfg_d, meta = read_checkpoint(path)
    cfg = ModelConfig.from_dict(cfg_d)
    pick = lambda pre: {k[len(pre):]: v for k, v in arrays.items() if k.startswith(pre)}
    model = Model(cfg, params=pick("param."), buffers=pick("buffer."))
    state = AdamState(lr=meta["adam_lr"], step=meta["adam_step"], m=pick("adam.m."),
                      v=pick("adam.v."))
    return model, state, meta


def _write_log(path, rows, cols, append):
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        if not append:
            w.writeheader()
        for r in rows:
            w.writerow(r)


def train(splits, model_cfg, train_cfg, out=None, log_path=None, snapshot=None, resume=None,
          progress=None):
    """Fit a model on ``splits["train"]``, selecting by mean validation MAE.

    ``splits`` maps ``train``/``val`` to lists of recordings. ``out`` receives
    the selected checkpoint; ``snapshot`` a resumable full-precision state
    after every epoch; ``resume`` continues from such a snapshot. ``progress``
    is called with each epoch's log row.
    """
    if not splits.get("train"):
        raise ContractError("training split is empty")
    hms = model_cfg.horizons_ms
    train_set = samples_from_sequences(splits["train"], hms, stride=train_cfg.stride,
                                       window=model_cfg.window, sigma=model_cfg.gauss_sigma)
    if len(train_set) == 0:
        raise ContractError("training recordings are too short for a single window")
    val_set = None
    if splits.get("val"):
        val_set = samples_from_sequences(splits["val"], hms, stride=train_cfg.val_stride,
                                         window=model_cfg.window, sigma=model_cfg.gauss_sigma)
        val_set = val_set if len(val_set) else None

    cols = ["epoch", "lr", "train_loss"] + val_columns(model_cfg) + ["wall_s"]
    if resume is not None:
        model, state, meta = load_snapshot(resume)
        if model.cfg != model_cfg:
            raise ConfigError(f"{resume}: snapshot model config differs from the requested one")
        start = meta["epoch"] + 1
        best_score, best_epoch = meta["best_score"], meta["best_epoch"]
        best = None
        if out is not None and Path(out).exists():
            from .checkpoint import load_model
            best = load_model(out)[0]
        log = []
    else:
        model = Model(model_cfg, seed=train_cfg.seed)
        model.buffers = fit_buffers(model_cfg, [s.frames for s in splits["train"]])
        state = AdamState(lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
        start, best_score, best_epoch, best, log = 0, np.inf, -1, None, []

    if not param_shapes(model_cfg):
        raise ContractError("model has no learnable parameters to train")
    for epoch in range(start, train_cfg.epochs):
        t0 = time.perf_counter()
        state.lr = lr_at(epoch, train_cfg)
        idx, rng = batches(len(train_set), train_cfg, epoch)
        total = 0.0
        for b, ix in enumerate(idx):
            try:
                total += train_step(model, train_set.subset(ix), state, rng)
            except TrainingError as e:
                raise TrainingError(f"epoch {epoch} batch {b}: {e}") from None
        row = {"epoch": epoch, "lr": state.lr, "train_loss": total / max(len(idx), 1)}
        frozen = _quantized(model)
        if val_set is not None:
            maes = validation_mae(frozen, val_set, hms)
            row.update(zip(val_columns(model_cfg), maes))
            score = float(np.mean(maes))
        else:
            row.update({c: "" for c in val_columns(model_cfg)})
            score = -epoch                   # no validation: keep the latest
        row["wall_s"] = time.perf_counter() - t0
        log.append(row)
        if score < best_score:
            best_score, best_epoch, best = score, epoch, frozen
            if out is not None:
                save_model(frozen, out, meta={"epoch": epoch, "val_mae_mean": score
                                              if val_set is not None else None,
                                              "train_config": train_cfg.to_dict()})
        if snapshot is not None:
            save_snapshot(model, state, snapshot,
                          {"epoch": epoch, "best_score": float(best_score), "best_epoch": best_epoch,
                           "train_config": train_cfg.to_dict()})
        if log_path is not None:
            _write_log(log_path, [row], cols, append=epoch > 0)
        if progress is not None:
            progress(row)
    if best is None:
        best = _quantized(model)
    return TrainResult(model=best, log=log, best_epoch=best_epoch, state=state, final=model)
