"""The finger-motion network.

Three stages:

* kinematic feature extractor: causal moving average, backward differences,
  then a per-channel LSTM and 32->1 head that correct the velocity and
  acceleration estimates;
* physics encoder: per-channel LSTMs over ``omega * t`` and ``alpha * t**2``
  followed by a small feed-forward net giving a displacement per channel;
* graph decoder: seven propagation layers ``A_hat @ X @ W`` over the hand
  skeleton.

Everything upstream of the decoder is instanced per joint-axis channel, so
arrays carry a leading channel axis ``C`` and run as batched matmuls.
"""
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kinematics as kin
from .errors import ConfigError, ContractError, ShapeError
from .ndgrad import (
    Tensor, add, affine, as_tensor, concat, dropout, lstm_sequence, matmul, mse, mul, repeat,
    reshape, tanh, transpose, tsum,
)
from .skeleton import build_skeleton, normalized_adjacency

DEFAULT_HORIZONS_MS = tuple(range(40, 401, 40))


@dataclass
class ModelConfig:
    layout: str = "vrhands14"
    joints: tuple = None              # custom skeleton; overrides ``layout`` when set
    edges: tuple = ()
    t_s: float = 0.010
    window: int = 16
    ma_window: int = kin.MA_WINDOW
    gauss_sigma: float = kin.GAUSS_SIGMA
    kfe_hidden: int = 32
    enc_hidden: int = 32
    head_widths: tuple = (64, 128, 32, 1)
    dropout: float = 0.3
    decoder_widths: tuple = (3, 32, 64, 128, 128, 64, 32, 1)
    horizons_ms: tuple = DEFAULT_HORIZONS_MS
    horizon_weights: tuple = (1.0,) * 10
    taylor_order: int = 2
    use_kfe: bool = True
    use_gcn: bool = True
    raw_adjacency: bool = False
    # numerical knobs; see README "Model choices"
    normalize: bool = True
    decoder_residual: bool = True
    diagnostic: bool = False

    def __post_init__(self):
        if self.joints is not None:
            self.joints = tuple(str(j) for j in self.joints)
            self.layout = "custom"
        self.edges = tuple(tuple(str(j) for j in e) for e in self.edges)
        self.head_widths = tuple(int(w) for w in self.head_widths)
        self.decoder_widths = tuple(int(w) for w in self.decoder_widths)
        self.horizons_ms = tuple(float(t) for t in self.horizons_ms)
        self.horizon_weights = tuple(float(w) for w in self.horizon_weights)
        if len(self.horizon_weights) != len(self.horizons_ms):
            raise ConfigError(f"{len(self.horizon_weights)} horizon weights for "
                              f"{len(self.horizons_ms)} horizons")
        if any(not 0.0 <= w <= 1.0 for w in self.horizon_weights):
            raise ConfigError("horizon weights must lie in [0, 1]")
        if self.decoder_widths[0] != 3 or self.decoder_widths[-1] != 1:
            raise ConfigError("decoder widths must start at 3 and end at 1")
        if self.head_widths[-1] != 1:
            raise ConfigError("encoder head must end in width 1")
        if self.window < 3:
            raise ConfigError("window must hold at least 3 frames")
        if not self.t_s > 0:
            raise ConfigError("t_s must be positive")
        if self.taylor_order not in (0, 1, 2):
            raise ConfigError("taylor_order must be 0, 1 or 2")
        if self.diagnostic and (self.use_kfe or self.use_gcn):
            raise ConfigError("diagnostic mode needs use_kfe and use_gcn disabled")

    @property
    def skeleton(self):
        return build_skeleton(self.layout, self.joints, self.edges)

    @property
    def n_channels(self):
        return self.skeleton.n_channels

    @property
    def horizons_s(self):
        return np.asarray(self.horizons_ms) / 1000.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# -- parameters -------------------------------------------------------------------

def _lstm_shapes(prefix, C, n_in, h):
    return {f"{prefix}.w_in": (C, n_in, 4 * h), f"{prefix}.w_hid": (C, h, 4 * h),
            f"{prefix}.b": (C, 1, 4 * h)}


def param_shapes(cfg):
    """Ordered ``{name: shape}`` for every learnable array under ``cfg``."""
    C = cfg.n_channels
    shapes = {}
    if cfg.diagnostic:
        return shapes
    if cfg.use_kfe:
        for d in ("vel", "acc"):
            shapes.update(_lstm_shapes(f"kfe.{d}", C, 1, cfg.kfe_hidden))
            shapes[f"kfe.{d}.head_w"] = (C, cfg.kfe_hidden, 1)
            shapes[f"kfe.{d}.head_b"] = (C, 1, 1)
    for d in ("vel", "acc"):
        shapes.update(_lstm_shapes(f"enc.{d}", C, 1, cfg.enc_hidden))
    widths = (2 * cfg.enc_hidden,) + cfg.head_widths
    for k, (i, o) in enumerate(zip(widths[:-1], widths[1:])):
        shapes[f"enc.fc{k}.w"] = (C, i, o)
        shapes[f"enc.fc{k}.b"] = (C, 1, o)
    if cfg.use_gcn:
        dw = cfg.decoder_widths
        for k, (i, o) in enumerate(zip(dw[:-1], dw[1:])):
            shapes[f"dec.w{k}"] = (i, o)
    return shapes


def init_params(cfg, seed=0):
    """Uniform in +-1/sqrt(fan_in) for weights, zero biases.

    Each array draws from its own stream keyed by ``(seed, name)``, so model
    variants that share a parameter also share its initial value.
    """
    params = {}
    for name, shape in param_shapes(cfg).items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("b", "head_b"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[-2])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def parameter_count(cfg):
    """Per-component and total learnable-parameter counts.

    ``kfe_per_channel`` and ``encoder_per_channel`` count one channel's
    instance; ``total`` multiplies them by the channel count.
    """
    shapes = param_shapes(cfg)
    C = cfg.n_channels
    size = {k: int(np.prod(s)) for k, s in shapes.items()}
    kfe = sum(v for k, v in size.items() if k.startswith("kfe."))
    enc = sum(v for k, v in size.items() if k.startswith("enc."))
    dec = sum(v for k, v in size.items() if k.startswith("dec."))
    return {
        "channels": C,
        "kfe_per_channel": kfe // C,
        "encoder_per_channel": enc // C,
        "decoder": dec,
        "total": kfe + enc + dec,
    }


# -- normalisation ----------------------------------------------------------------

def identity_buffers(C):
    return {"vel_scale": np.ones(C), "acc_scale": np.ones(C),
            "pose_scale": np.ones(C), "pose_mean": np.zeros(C)}


def fit_buffers(cfg, frames_list):
    """Per-channel scales from training recordings (raw units in, raw units out)."""
    C = cfg.n_channels
    if not cfg.normalize:
        return identity_buffers(C)
    frames = np.concatenate(frames_list, axis=0)
    vel = np.concatenate([kin.finite_difference(kin.moving_average(f, cfg.ma_window), cfg.t_s, 1)
                          for f in frames_list])
    acc = np.concatenate([kin.finite_difference(kin.moving_average(f, cfg.ma_window), cfg.t_s, 2)
                          for f in frames_list])

    def scale(x):
        s = x.std(axis=0)
        return np.where(s > 1e-8, s, 1.0)

    return {"vel_scale": scale(vel), "acc_scale": scale(acc),
            "pose_scale": scale(frames), "pose_mean": frames.mean(axis=0)}


# -- stages -----------------------------------------------------------------------

def _lstm(p, prefix, x):
    return lstm_sequence(x, p[f"{prefix}.w_in"], p[f"{prefix}.w_hid"], p[f"{prefix}.b"])


def _channel_affine(x, w, b):
    """Per-channel affine on (C, ..., I) with w (C, I, O)."""
    shp = x.shape
    flat = reshape(x, (shp[0], -1, shp[-1]))
    out = affine(flat, w, b)
    return reshape(out, shp[:-1] + (w.shape[-1],))


def approximate_derivatives(windows, cfg):
    """Raw causal estimates, each (C, B, T): filtered angle, velocity, acceleration."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[1] != cfg.window:
        raise ContractError(f"expected windows of shape (B, {cfg.window}, C), got {windows.shape}")
    feats = kin.kinematic_features(windows, cfg.t_s, cfg.ma_window, axis=1)
    to_cbt = lambda a: np.ascontiguousarray(np.transpose(a, (2, 0, 1)))
    return to_cbt(feats.filtered), to_cbt(feats.velocity), to_cbt(feats.acceleration)


def kfe_forward(vel_approx, acc_approx, p, cfg, buffers):
    """Corrected velocity/acceleration sequences and their final-step values.

    Inputs are (C, B, T) arrays of raw estimates. Returns Tensors
    ``(omega_seq, alpha_seq, omega0, alpha0)``; sequences are (C, B, T),
    current-time values (C, B).
    """
    omega, alpha = as_tensor(vel_approx), as_tensor(acc_approx)
    if cfg.use_kfe:
        out = []
        for d, raw, s in (("vel", vel_approx, buffers["vel_scale"]),
                          ("acc", acc_approx, buffers["acc_scale"])):
            s = s[:, None, None]
            h = _lstm(p, f"kfe.{d}", Tensor((raw / s)[..., None]))
            corr = _channel_affine(h, p[f"kfe.{d}.head_w"], p[f"kfe.{d}.head_b"])
            corr = reshape(corr, raw.shape)
            out.append(add(Tensor(raw), mul(corr, s)))
        omega, alpha = out
    T = vel_approx.shape[-1]
    return omega, alpha, omega[:, :, T - 1], alpha[:, :, T - 1]


def encoder_forward(omega, alpha, t, p, cfg, buffers, training=False, rng=None):
    """Displacement per channel for every horizon in ``t``.

    ``omega`` and ``alpha`` are (C, B, T) Tensors, ``t`` a 1-D array of
    horizons in seconds. Returns a (C, H*B) Tensor, horizon-major.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t < 0):
        raise ContractError("horizon t must be non-negative")
    C, B, T = omega.shape
    H = len(t)
    tcol = np.repeat(t, B)[None, :, None]            # (1, H*B, 1)
    s = buffers["pose_scale"][:, None, None]
    ws = mul(repeat(omega, H, 1), tcol / s)
    as_ = mul(repeat(alpha, H, 1), tcol ** 2 / s)
    hv = _lstm(p, "enc.vel", reshape(ws, (C, H * B, T, 1)))[:, :, T - 1, :]
    ha = _lstm(p, "enc.acc", reshape(as_, (C, H * B, T, 1)))[:, :, T - 1, :]
    z = concat([hv, ha], axis=-1)
    n_fc = len(cfg.head_widths)
    for k in range(n_fc):
        z = affine(z, p[f"enc.fc{k}.w"], p[f"enc.fc{k}.b"])
        if k < n_fc - 1:
            z = dropout(tanh(z), cfg.dropout, rng, training)
    return mul(reshape(z, (C, H * B)), buffers["pose_scale"][:, None])


def decoder_forward(theta, adj, p, cfg, buffers, linear=False):
    """Graph propagation over (N, J, 3) poses.

    The final layer is 32->1, so the stack is evaluated once per output axis
    with the input triple cyclically rotated to put that axis first; the
    three scalar outputs form the (N, J, 3) result. ``linear`` drops the tanh
    between layers (used by tests).
    """
    theta = as_tensor(theta)
    J = adj.shape[0]
    if theta.ndim != 3 or theta.shape[1:] != (J, 3):
        raise ShapeError(f"decoder expects (N, {J}, 3) poses, got {theta.shape}")
    N = theta.shape[0]
    mean = buffers["pose_mean"].reshape(J, 3)
    scale = buffers["pose_scale"].reshape(J, 3)
    q = mul(add(theta, -mean), 1.0 / scale)
    rolled = concat([q[:, :, [(a + r) % 3 for r in range(3)]] for a in range(3)], axis=0)
    A = Tensor(adj)
    h = rolled
    n_layers = len(cfg.decoder_widths) - 1
    for k in range(n_layers):
        h = matmul(matmul(A, h), p[f"dec.w{k}"])
        if k < n_layers - 1 and not linear:
            h = tanh(h)
    out = transpose(reshape(h, (3, N, J)), (1, 2, 0))     # (N, J, 3)
    out = mul(out, scale)
    return add(out, theta) if cfg.decoder_residual else add(out, mean)


def lag_compensated(vel_approx, acc_approx, cfg):
    """Current-time derivatives with the causal filter's delay removed.

    For a quadratic signal the full-window moving average is the signal
    delayed by ``(ma_window - 1) t_s / 2``; the backward difference adds
    another half sample. Exact on quadratics once the window is full.
    """
    lag = cfg.ma_window * cfg.t_s / 2.0
    a0 = acc_approx[..., -1]
    return vel_approx[..., -1] + a0 * lag, a0


# -- composition ------------------------------------------------------------------

class Model:
    """Configuration, parameters, normalisation buffers and the forward pass."""

    def __init__(self, cfg, params=None, buffers=None, seed=0):
        self.cfg = cfg
        C = cfg.n_channels
        self.params = params if params is not None else init_params(cfg, seed)
        self.buffers = buffers if buffers is not None else identity_buffers(C)
        expected = param_shapes(cfg)
        for name, shape in expected.items():
            if name not in self.params:
                raise ShapeError(f"missing parameter {name!r}")
            if tuple(self.params[name].shape) != tuple(shape):
                raise ShapeError(f"parameter {name!r} has shape {self.params[name].shape}, expected {shape}")
        self.adj = normalized_adjacency(cfg.skeleton, raw=cfg.raw_adjacency)

    def tensors(self, requires_grad=False):
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.params.items()}

    def forward(self, windows, t, p=None, training=False, rng=None):
        """Predicted poses for every horizon.

        Returns ``(pred, omega0, alpha0)``: ``pred`` is a (H, B, C) Tensor,
        the others (B, C) Tensors of current-time derivative estimates.
        """
        cfg = self.cfg
        p = p if p is not None else self.tensors()
        windows = np.asarray(windows, dtype=np.float64)
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t < 0):
            raise ContractError("horizon t must be non-negative")
        B, _, C = windows.shape
        if C != cfg.n_channels:
            raise ShapeError(f"windows have {C} channels, skeleton needs {cfg.n_channels}")
        H = len(t)
        _, va, aa = approximate_derivatives(windows, cfg)
        theta0 = windows[:, -1, :]                        # (B, C)
        if cfg.diagnostic:
            w0, a0 = lag_compensated(va, aa, cfg)
            pred = kin.taylor_extrapolate(theta0.T[None], w0[None], a0[None], t[:, None, None],
                                          kin.TaylorConfig(cfg.taylor_order))
            pred = np.transpose(pred, (0, 2, 1))
            return Tensor(pred), Tensor(w0.T), Tensor(a0.T)
        omega, alpha, w0, a0 = kfe_forward(va, aa, p, cfg, self.buffers)
        delta = encoder_forward(omega, alpha, t, p, cfg, self.buffers, training, rng)   # (C, H*B)
        init = add(transpose(delta), np.tile(theta0, (H, 1)))                           # (H*B, C)
        if cfg.use_gcn:
            J = C // 3
            out = decoder_forward(reshape(init, (H * B, J, 3)), self.adj, p, cfg, self.buffers)
            init = reshape(out, (H * B, C))
        return reshape(init, (H, B, C)), transpose(w0), transpose(a0)

    def predict(self, windows, t, chunk=64):
        """Deterministic numpy prediction, (H, B, C), evaluated in chunks."""
        windows = np.asarray(windows, dtype=np.float64)
        single = windows.ndim == 2
        if single:
            windows = windows[None]
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        p = self.tensors()
        outs = [self.forward(windows[i:i + chunk], t, p=p)[0].data
                for i in range(0, len(windows), chunk)]
        out = np.concatenate(outs, axis=1)
        return out[:, 0] if single else out

    def loss_terms(self, batch, p=None, training=False, rng=None, horizons_ms=None):
        """Named loss components; see :func:`total_loss` for the combination."""
        cfg = self.cfg
        hms = cfg.horizons_ms if horizons_ms is None else tuple(horizons_ms)
        for h in hms:
            if h not in batch.targets:
                raise ContractError(f"batch has no ground truth for horizon {h:g} ms")
        t = np.asarray(hms) / 1000.0
        pred, w0, a0 = self.forward(batch.windows, t, p=p, training=training, rng=rng)
        terms = {}
        for k, h in enumerate(hms):
            terms[f"pose@{h:g}"] = mse(pred[k], batch.targets[h])
        if cfg.use_kfe and not cfg.diagnostic:
            vs, as_ = self.buffers["vel_scale"], self.buffers["acc_scale"]
            terms["velocity"] = _channel_sum_mse(w0, batch.oracle_vel, vs)
            terms["acceleration"] = _channel_sum_mse(a0, batch.oracle_acc, as_)
        return terms

    def loss(self, batch, p=None, training=False, rng=None):
        return total_loss(self.loss_terms(batch, p, training, rng), self.cfg)


def _channel_sum_mse(est, target, scale):
    """Batch-mean squared error per channel, summed over channels (in scaled units)."""
    diff = add(est, -np.asarray(target, dtype=np.float64))
    diff = mul(diff, 1.0 / scale)
    B = diff.shape[0]
    return mul(tsum(mul(diff, diff)), 1.0 / B)


def total_loss(terms, cfg):
    """Weighted pose errors over horizons plus the two auxiliary terms."""
    loss = None
    for h, w in zip(cfg.horizons_ms, cfg.horizon_weights):
        key = f"pose@{h:g}"
        if key in terms:
            term = mul(terms[key], w)
            loss = term if loss is None else add(loss, term)
    for key in ("velocity", "acceleration"):
        if key in terms:
            loss = terms[key] if loss is None else add(loss, terms[key])
    return loss
