"""Central finite-difference check of reverse-mode gradients."""
import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric, floor=1e-7):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def gradient_check(fn, params, eps=1e-5, max_coords=10_000, rng=None, floor=None):
    """Worst relative error between backprop and central differences.

    Parameters
    ----------
    fn : callable
        Maps ``{name: Tensor}`` to a scalar :class:`Tensor`. Must be
        deterministic (disable dropout).
    params : dict of str -> ndarray
        Evaluation point; copied to 64-bit before perturbation.
    eps : float
        Finite-difference step.
    max_coords : int
        Above this many coordinates in total, a random subsample of that size
        is checked.
    floor : float, optional
        Denominator floor, so coordinates whose gradient is too small for a
        finite difference to resolve are judged on absolute error. Defaults
        to ``1e-6 * max(|f|, 1e-3)``: central differences carry rounding
        noise proportional to the function value, about ``1e-12 |f|`` at
        ``eps=1e-5``.

    Returns
    -------
    float
        Maximum relative error over the checked coordinates.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
    out = fn(leaves)
    out.backward()
    if floor is None:
        floor = 1e-6 * max(abs(float(out.data)), 1e-3)
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}

    def value():
        return float(fn({k: Tensor(v, name=k) for k, v in params.items()}).data)

    coords = [(k, i) for k, v in params.items() for i in range(v.size)]
    if len(coords) > max_coords:
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in np.sort(pick)]

    worst = 0.0
    for k, i in coords:
        flat = params[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        up = value()
        flat[i] = orig - eps
        down = value()
        flat[i] = orig
        numeric = (up - down) / (2.0 * eps)
        err = float(relative_error(analytic[k].reshape(-1)[i], numeric, floor))
        worst = max(worst, err)
    return worst
