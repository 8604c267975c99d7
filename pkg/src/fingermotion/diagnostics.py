"""Reduced-width instances and the finite-difference gradient suite."""
import numpy as np

from .data import MotionSequence, make_samples
from .kinematics import SeriesMeta
from .model import Model, ModelConfig, fit_buffers
from .ndgrad import (
    affine, concat, gradient_check, lstm_sequence, matmul, mse, mul, tanh, tsum,
)

GRAD_TOL = 1e-4


def reduced_config(hidden=4, joints=2, horizons_ms=(40.0, 80.0), **kw):
    """A chain of ``joints`` joints with every width shrunk to ``hidden``."""
    names = tuple(f"q{i}" for i in range(joints))
    base = dict(joints=names, edges=tuple(zip(names[:-1], names[1:])), kfe_hidden=hidden,
                enc_hidden=hidden, head_widths=(hidden, hidden, hidden, 1),
                decoder_widths=(3, hidden, hidden, hidden, hidden, hidden, hidden, 1),
                horizons_ms=tuple(horizons_ms), horizon_weights=(1.0,) * len(horizons_ms))
    base.update(kw)
    return ModelConfig(**base)


def reduced_instance(cfg, batch=3, seed=0):
    """A model with fitted buffers and a batch cut from a smooth random recording."""
    rng = np.random.default_rng(seed)
    C = cfg.n_channels
    radius = 4 * int(cfg.gauss_sigma) + 1
    n = 2 * radius + cfg.window + int(round(max(cfg.horizons_ms) / 1000.0 / cfg.t_s)) + batch
    t = np.arange(n)[:, None] * cfg.t_s
    freq = rng.uniform(0.5, 2.0, C)
    phase = rng.uniform(0, 2 * np.pi, C)
    amp = rng.uniform(0.5, 2.0, C)
    frames = amp * np.sin(2 * np.pi * freq * t + phase) + 0.01 * rng.standard_normal((n, C))
    seq = MotionSequence(frames, SeriesMeta(cfg.t_s, "degrees", cfg.skeleton.channel_names()))
    samples = make_samples(seq, cfg.horizons_ms, window=cfg.window, sigma=cfg.gauss_sigma)
    model = Model(cfg, seed=seed)
    model.buffers = fit_buffers(cfg, [frames])
    return model, samples.subset(np.arange(min(batch, len(samples))))


def full_loss_check(hidden=4, joints=2, horizons_ms=(40.0, 80.0), seed=0, max_coords=10_000, **kw):
    """Worst relative error of the complete training loss at reduced width."""
    cfg = reduced_config(hidden, joints, horizons_ms, **kw)
    model, batch = reduced_instance(cfg, seed=seed)
    return gradient_check(lambda p: model.loss(batch, p=p), model.params, max_coords=max_coords)


def _layer_checks(rng):
    x = rng.normal(size=(2, 5, 3))
    yield "affine", (lambda p: tsum(mul(tanh(affine(p["x"], p["w"], p["b"])), p["r"])),
                     {"x": x, "w": rng.normal(size=(2, 3, 4)), "b": rng.normal(size=(2, 1, 4)),
                      "r": rng.normal(size=(2, 5, 4))})
    yield "lstm", (lambda p: tsum(mul(lstm_sequence(p["x"], p["wi"], p["wh"], p["b"]), p["r"])),
                   {"x": rng.normal(size=(2, 3, 6, 1)), "wi": rng.normal(size=(2, 1, 16)),
                    "wh": rng.normal(size=(2, 4, 16)) * 0.5, "b": rng.normal(size=(2, 1, 16)) * 0.1,
                    "r": rng.normal(size=(2, 3, 6, 4))})
    yield "concat+mse", (lambda p: mse(concat([p["a"], p["b"]], axis=-1), p["t"]),
                         {"a": rng.normal(size=(4, 2)), "b": rng.normal(size=(4, 3)),
                          "t": rng.normal(size=(4, 5))})
    yield "propagation", (lambda p: tsum(tanh(matmul(matmul(p["A"], p["h"]), p["w"]))),
                          {"A": rng.random((3, 3)), "h": rng.normal(size=(2, 3, 3)),
                           "w": rng.normal(size=(3, 2))})


def gradcheck_suite(full=False, seed=0):
    """``[(name, max relative error, tolerance)]`` for each layer and the full loss."""
    rng = np.random.default_rng(seed)
    out = [(name, gradient_check(fn, params), GRAD_TOL) for name, (fn, params) in _layer_checks(rng)]
    out.append(("loss[hidden=4,joints=2,horizons=2]", full_loss_check(seed=seed), GRAD_TOL))
    if full:
        out.append(("loss[no_kfe]", full_loss_check(seed=seed, use_kfe=False), GRAD_TOL))
        out.append(("loss[no_gcn]", full_loss_check(seed=seed, use_gcn=False), GRAD_TOL))
        out.append(("loss[joints=3,horizons=3]",
                    full_loss_check(joints=3, horizons_ms=(40.0, 200.0, 400.0), seed=seed),
                    GRAD_TOL))
    return out
