"""Monte Carlo statistics and the cross-measure call-price oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from .asset_dynamics import discount_factor, simulate_paths
from .measure import girsanov_density
from .model_core import RegimeModel, validate_model

Z99 = float(norm.ppf(0.995))


class McError(ValueError):
    pass


@dataclass(frozen=True)
class McReport:
    estimate: float
    se: float
    n_paths: int
    seed: int | None = None
    measure: str = ""
    runtime: float = 0.0

    @property
    def ci99(self) -> tuple[float, float]:
        return (self.estimate - Z99 * self.se, self.estimate + Z99 * self.se)

    def agrees_with(self, value: float, n_se: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.estimate - value) <= n_se * self.se + slack


def stat_suite(samples: ArrayLike, seed: int | None = None, measure: str = "",
               runtime: float = 0.0) -> McReport:
    """Mean, standard error ``std / sqrt(n)`` (unbiased std) and 99% interval."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise McError(f"need at least 2 samples, got {x.size}")
    return McReport(float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size)), int(x.size),
                    seed, measure, runtime)


def combined_se(a: McReport, b: McReport) -> float:
    return float(np.hypot(a.se, b.se))


def call_samples(model: RegimeModel, u: ArrayLike, K: float, T: float, n_paths: int,
                 n_steps: int, seed: int, mode: str = "direct-Q", x0: int = 0,
                 s0: float = 100.0, threads: int = 1) -> NDArray[np.float64]:
    """Per-path discounted call payoffs (reweighted by ``Lambda^u`` under ``P``)."""
    validate_model(model)
    u = np.asarray(u, dtype=float)
    if mode == "direct-Q":
        paths = simulate_paths(model, x0, s0, T, n_steps, n_paths, seed, "Q", control=u,
                               threads=threads)
        return discount_factor(paths) * np.maximum(paths.s_T - K, 0.0)
    if mode == "reweighted-P":
        paths = simulate_paths(model, x0, s0, T, n_steps, n_paths, seed, "P", threads=threads)
        weight = girsanov_density(paths, model, u).value
        return weight * discount_factor(paths) * np.maximum(paths.s_T - K, 0.0)
    raise McError(f"unknown mode {mode!r}")


def price_mc(model: RegimeModel, u: ArrayLike, K: float, T: float, n_paths: int, n_steps: int,
             seed: int, mode: str = "direct-Q", x0: int = 0, s0: float = 100.0,
             threads: int = 1) -> McReport:
    """Estimate ``E^{Q^u}[exp(-int r) (S_T - K)^+]``."""
    start = time.perf_counter()
    samples = call_samples(model, u, K, T, n_paths, n_steps, seed, mode, x0, s0, threads)
    return stat_suite(samples, seed, mode, time.perf_counter() - start)
