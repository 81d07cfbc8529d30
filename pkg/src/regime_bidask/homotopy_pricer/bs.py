"""Black-Scholes call surfaces, the zeroth term of the series."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import ndtr

from ..model_core import RegimeModel
from .grid import GridSpec


def bs_call(s: ArrayLike, K: float, r: float, sigma: float, tau: ArrayLike) -> NDArray[np.float64]:
    """European call ``s N(d1) - K exp(-r tau) N(d2)``; the payoff where ``tau == 0``."""
    s, tau = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(tau, dtype=float))
    shape = s.shape
    s, tau = s.ravel(), tau.ravel()
    out = np.maximum(s - K, 0.0)
    live = tau > 0
    if K <= 0:
        out[live] = s[live] - K * np.exp(-r * tau[live])
    elif np.any(live):
        st = sigma * np.sqrt(tau[live])
        d1 = (np.log(s[live] / K) + (r + 0.5 * sigma ** 2) * tau[live]) / st
        out[live] = s[live] * ndtr(d1) - K * np.exp(-r * tau[live]) * ndtr(d1 - st)
    return out.reshape(shape)


def bs_base_term(model: RegimeModel, i: int, K: float, T: float, grid: GridSpec) -> NDArray[np.float64]:
    """Surface ``C0_i(t_k, x_j)`` with rows indexed by ascending time."""
    t = grid.times(T)
    x = grid.x
    return bs_call(np.exp(x)[None, :], K, model.rate[i], model.sigma[i], (T - t)[:, None])
