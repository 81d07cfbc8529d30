"""Uniform log-price by time lattices and per-regime value surfaces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class GridSpec:
    """Uniform nodes ``x_min .. x_max`` (``n_x`` of them) and ``n_t`` time steps."""

    x_min: float
    x_max: float
    n_x: int
    n_t: int

    def __post_init__(self) -> None:
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n_x < 5 or self.n_t < 1:
            raise ValueError("grid needs n_x >= 5 and n_t >= 1")

    @classmethod
    def around(cls, s0: float, T: float, sigma_max: float, n_x: int = 401, n_t: int = 200,
               width: float = 6.0, min_half_width: float = 1.0) -> "GridSpec":
        """Grid centred on ``log s0`` spanning ``width`` standard deviations each way."""
        half = max(width * sigma_max * np.sqrt(T), min_half_width)
        c = float(np.log(s0))
        if n_x % 2 == 0:
            n_x += 1
        return cls(c - half, c + half, n_x, n_t)

    @property
    def x(self) -> NDArray[np.float64]:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    def times(self, T: float) -> NDArray[np.float64]:
        return np.linspace(0.0, T, self.n_t + 1)


@dataclass(frozen=True)
class PriceGrid:
    """Value surfaces ``values[k, i, j] = C_i(t_k, x_j)`` with ``t`` ascending to ``T``."""

    x: NDArray[np.float64]
    times: NDArray[np.float64]
    values: NDArray[np.float64]
    K: float
    T: float

    @property
    def n_states(self) -> int:
        return int(self.values.shape[1])

    @property
    def s(self) -> NDArray[np.float64]:
        return np.exp(self.x)

    def at(self, s: float | NDArray[np.float64], regime: int, k: int = 0) -> float | NDArray[np.float64]:
        """Cubic-spline interpolation of slice ``k`` in log price."""
        spline = CubicSpline(self.x, self.values[k, regime])
        out = spline(np.log(s))
        return float(out) if np.ndim(out) == 0 else out

    def price(self, s0: float, regime: int) -> float:
        return float(self.at(s0, regime, 0))

    def terminal_error(self) -> float:
        payoff = np.maximum(np.exp(self.x) - self.K, 0.0)
        return float(np.max(np.abs(self.values[-1] - payoff[None, :])))

    def min_value(self) -> float:
        return float(self.values.min())

    def convexity_violation(self, k: int = 0) -> float:
        """Most negative discrete second divided difference in ``s`` at slice ``k``."""
        s = np.exp(self.x)
        v = self.values[k]
        slope = np.diff(v, axis=-1) / np.diff(s)
        curv = np.diff(slope, axis=-1) / (0.5 * (s[2:] - s[:-2]))
        return float(min(0.0, curv.min()))

    def monotonicity_violation(self, k: int = 0) -> float:
        return float(min(0.0, np.diff(self.values[k], axis=-1).min()))

    def to_csv(self, out: Path, every: int = 1) -> None:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["regime", "t", "x", "value"])
            for i in range(self.n_states):
                for k in range(0, len(self.times), every):
                    for j, xj in enumerate(self.x):
                        w.writerow([i + 1, repr(float(self.times[k])), repr(float(xj)),
                                    repr(float(self.values[k, i, j]))])
