"""Causal smoothing, derivative estimates, Taylor extrapolation and the
zero-velocity baseline.

All derivatives are expressed per second, so a horizon ``t`` in seconds means
the same thing at 100 Hz and at 90 Hz. Functions accept an ``axis`` along
which time runs and operate independently on every other axis.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ContractError

MA_WINDOW = 10
GAUSS_SIGMA = 3.0
GAUSS_RADIUS_SIGMAS = 4


@dataclass(frozen=True)
class SeriesMeta:
    t_s: float
    unit: str = "degrees"
    channels: tuple = ()

    def __post_init__(self):
        if not self.t_s > 0:
            raise ContractError(f"sampling interval must be positive, got {self.t_s}")
        if self.unit not in ("degrees", "mm"):
            raise ContractError(f"unknown unit {self.unit!r}; expected 'degrees' or 'mm'")
        if len(set(self.channels)) != len(self.channels):
            raise ContractError("channel names must be unique")


@dataclass(frozen=True)
class TaylorConfig:
    order: int = 2

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ContractError(f"Taylor order must be 0, 1 or 2, got {self.order}")


@dataclass
class KinematicFeatures:
    filtered: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def moving_average(series, window=MA_WINDOW, axis=0):
    """Causal running mean, truncated at the start.

    ``out[i] = mean(series[max(0, i - window + 1) : i + 1])``; no padding, so
    the first ``window - 1`` outputs average over fewer samples.
    """
    if window < 1:
        raise ContractError(f"moving-average window must be >= 1, got {window}")
    x = np.moveaxis(np.asarray(series, dtype=np.float64), axis, 0)
    n = x.shape[0]
    if n == 0:
        raise ContractError("moving_average: empty series")
    acc = np.zeros_like(x)
    # oldest sample first, so every output is summed in time order
    for lag in range(min(window, n) - 1, -1, -1):
        acc[lag:] += x[: n - lag]
    count = np.minimum(np.arange(1, n + 1), window).astype(np.float64)
    out = acc / count.reshape((n,) + (1,) * (x.ndim - 1))
    return np.moveaxis(out, 0, axis)


def finite_difference(series, t_s, order=1, axis=0):
    """Backward differences per second; the first entry copies the second.

    ``order=2`` applies the order-1 rule twice.
    """
    if order not in (1, 2):
        raise ContractError(f"finite_difference order must be 1 or 2, got {order}")
    x = np.moveaxis(np.asarray(series, dtype=np.float64), axis, 0)
    if x.shape[0] < order + 1:
        raise ContractError(f"finite_difference: need at least {order + 1} samples, got {x.shape[0]}")
    for _ in range(order):
        d = np.empty_like(x)
        d[1:] = (x[1:] - x[:-1]) / t_s
        d[0] = d[1]
        x = d
    return np.moveaxis(x, 0, axis)


def kinematic_features(window, t_s, ma_window=MA_WINDOW, axis=0):
    filtered = moving_average(window, ma_window, axis=axis)
    return KinematicFeatures(filtered,
                             finite_difference(filtered, t_s, 1, axis=axis),
                             finite_difference(filtered, t_s, 2, axis=axis))


def gaussian_kernel(sigma=GAUSS_SIGMA, radius=None):
    if not sigma > 0:
        raise ContractError(f"Gaussian sigma must be positive, got {sigma}")
    if radius is None:
        radius = int(GAUSS_RADIUS_SIGMAS * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(series, sigma=GAUSS_SIGMA, axis=0):
    """Non-causal Gaussian smoothing with half-sample symmetric (reflect) padding."""
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    x = np.moveaxis(np.asarray(series, dtype=np.float64), axis, 0)
    n = x.shape[0]
    if n < len(k):
        raise ContractError(f"sequence of {n} samples is shorter than the {len(k)}-tap Gaussian kernel")
    pad = np.pad(x, [(r, r)] + [(0, 0)] * (x.ndim - 1), mode="symmetric")
    out = np.zeros_like(x)
    for j, w in enumerate(k):
        out += w * pad[j:j + n]
    return np.moveaxis(out, 0, axis)


def gaussian_derivative_oracle(full_series, t_s, order=1, sigma=GAUSS_SIGMA, axis=0):
    """Derivative of the Gaussian-smoothed recording (training targets only).

    Central differences: ``(s[i+1] - s[i-1]) / (2 t_s)`` for velocity and
    ``(s[i+1] - 2 s[i] + s[i-1]) / t_s**2`` for acceleration. End samples copy
    their neighbour.
    """
    if order not in (0, 1, 2):
        raise ContractError(f"derivative order must be 0, 1 or 2, got {order}")
    s = np.moveaxis(gaussian_smooth(full_series, sigma, axis=axis), axis, 0)
    if order == 0:
        return np.moveaxis(s, 0, axis)
    d = np.empty_like(s)
    if order == 1:
        d[1:-1] = (s[2:] - s[:-2]) / (2.0 * t_s)
    else:
        d[1:-1] = (s[2:] - 2.0 * s[1:-1] + s[:-2]) / (t_s * t_s)
    d[0] = d[1]
    d[-1] = d[-2]
    return np.moveaxis(d, 0, axis)


def taylor_extrapolate(theta0, omega, alpha, t, cfg=TaylorConfig()):
    if np.any(np.asarray(t) < 0):
        raise ContractError("horizon t must be non-negative")
    terms = (theta0, omega, alpha)[: cfg.order + 1]
    return sum(np.asarray(d, dtype=np.float64) * np.asarray(t, dtype=np.float64) ** i / factorial(i)
               for i, d in enumerate(terms))


def zero_velocity_predict(window, t=None, axis=0):
    """Repeat the last observed frame, whatever the horizon.

    ``axis`` is the time axis; a batch of windows (B, T, C) uses ``axis=1``.
    """
    window = np.asarray(window)
    if window.shape[axis] == 0:
        raise ContractError("zero_velocity_predict: empty window")
    return np.take(window, -1, axis=axis).copy()
