"""Monte Carlo estimate of the objective ``J(u) = E^{Q^u}[g(Z_T, X_T)]``."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..asset_dynamics import FeedbackControl, simulate_q_measure
from ..mc_engine import McReport, stat_suite
from ..model_core import ControlBox, RegimeModel
from .hjb import DISCOUNT_MODES

Payoff = Callable[[NDArray[np.float64], NDArray[np.int_]], NDArray[np.float64]]


def call_payoff(K: float, model: RegimeModel, T: float, discount: str = "path"):
    """Discounted call ``g``; ``path`` discounting needs the realised rate integral."""
    if discount not in DISCOUNT_MODES:
        raise ValueError(f"discount must be one of {DISCOUNT_MODES}, got {discount!r}")

    def g(z, states, rate_integral):
        base = np.maximum(z - K, 0.0)
        if discount == "path":
            return np.exp(-rate_integral) * base
        if discount == "frozen":
            return np.exp(-model.rate[states] * T) * base
        return base

    return g


def j_functional_mc(model: RegimeModel, u: ArrayLike | FeedbackControl, K: float, T: float,
                    n_paths: int, seed: int, x0: int = 0, s0: float = 100.0, n_steps: int = 50,
                    discount: str = "path", g: Payoff | None = None,
                    box: ControlBox | None = None, threads: int = 1) -> McReport:
    """Simulate under ``Q^u`` and average the payoff.

    ``g(z_T, x_T)`` overrides the default discounted call.  Constant controls
    are checked against ``box`` when one is given.
    """
    if box is not None and not callable(u) and not box.contains(u):
        raise ValueError(f"control {np.asarray(u).tolist()} outside the box")
    start = time.perf_counter()
    paths = simulate_q_measure(model, u, x0, s0, T, n_steps, seed, n_paths, threads=threads)
    x_T = paths.states[:, -1].astype(int)
    if g is None:
        samples = call_payoff(K, model, T, discount)(paths.s_T, x_T, paths.rate_integral)
    else:
        samples = np.asarray(g(paths.s_T, x_T), dtype=float) * np.ones(paths.n_paths)
    return stat_suite(samples, seed, "Q", time.perf_counter() - start)
