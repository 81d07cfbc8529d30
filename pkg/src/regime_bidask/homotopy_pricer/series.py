"""Homotopy-analysis series for the coupled pricing system.

With ``L_i = d/dt + (r_i - sigma_i^2/2) d/dx + sigma_i^2/2 d2/dx2 - r_i`` the
terms solve

    L_i C^0_i = 0,    L_i C^m_i + m <C^{m-1}, B e_i> = 0,    C^m_i(T) = 0,

and the price is ``sum_m C^m / m!``, whose residual after ``M`` terms is
``<C^M, B e_i> / M!``.  Each inhomogeneous problem is mapped to a heat equation
by the weight

    gamma_i(tau, x) = exp((beta_i - 1)(x - x_c)/2 + (beta_i + 1)^2 sigma_i^2 tau / 8),
    beta_i = 2 r_i / sigma_i^2,

(``tau = T - t``; the reference point ``x_c`` cancels) and solved by a Duhamel
integral of the Gaussian heat kernel with variance ``sigma_i^2 (tau - s)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.signal import fftconvolve

from ..model_core import RegimeModel, controlled_generator, validate_model
from .bs import bs_base_term
from .grid import GridSpec, PriceGrid


def beta(r: float, sigma: float) -> float:
    return 2.0 * r / sigma ** 2


def gamma_weight(r: float, sigma: float, tau: ArrayLike, x: ArrayLike, x_c: float = 0.0) -> NDArray[np.float64]:
    b = beta(r, sigma)
    tau = np.asarray(tau, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(0.5 * (b - 1.0) * (x - x_c) + 0.125 * (b + 1.0) ** 2 * sigma ** 2 * tau)


def heat_kernel(x: NDArray[np.float64], var: float) -> NDArray[np.float64]:
    """Discrete Gaussian weights on the offsets of a uniform grid, centred at the middle.

    Weights are ``h * phi(offset; var)``; a vanishing variance gives the unit
    impulse (the delta limit).
    """
    h = x[1] - x[0]
    offsets = h * np.arange(-(x.size - 1), x.size)
    if var <= 0 or np.sqrt(var) < 1e-3 * h:
        k = np.zeros(offsets.size)
        k[x.size - 1] = 1.0
        return k
    return h * np.exp(-0.5 * offsets ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def heat_step(values: NDArray[np.float64], kernel: NDArray[np.float64]) -> NDArray[np.float64]:
    """Convolve every row with ``kernel`` (zero data outside the grid)."""
    values = np.atleast_2d(values)
    return fftconvolve(values, kernel[None, :], mode="same", axes=1)


def solve_transformed(r: float, sigma: float, source: NDArray[np.float64], x: NDArray[np.float64],
                      T: float) -> NDArray[np.float64]:
    """Solve ``L f = -source`` with ``f(T) = 0`` through the heat transform.

    ``source[k]`` is given at ascending times ``t_k`` on a uniform grid of
    ``[0, T]``.  The Duhamel integral uses the trapezoid rule in time, written
    as a one-step recursion through the heat semigroup.
    """
    n_t = source.shape[0] - 1
    dtau = T / n_t
    tau = T - np.linspace(0.0, T, n_t + 1)
    x_c = 0.5 * (x[0] + x[-1])
    g_tau = source[::-1]  # index by tau
    gam = gamma_weight(r, sigma, tau[::-1][:, None], x[None, :], x_c)
    G = gam * g_tau
    kernel = heat_kernel(x, sigma ** 2 * dtau)
    w = np.zeros_like(G)
    for n in range(1, n_t + 1):
        w[n] = heat_step(w[n - 1] + 0.5 * dtau * G[n - 1], kernel)[0] + 0.5 * dtau * G[n]
    return (w / gam)[::-1]


def coupling_source(terms: NDArray[np.float64], B: NDArray[np.float64]) -> NDArray[np.float64]:
    """``<C(t, x), B e_i>`` for all regimes; ``terms`` has shape ``(n_t + 1, N, n_x)``."""
    return np.einsum("kjx,ji->kix", terms, B)


def homotopy_step(prev: NDArray[np.float64], B: NDArray[np.float64], grid: GridSpec,
                  model: RegimeModel, m: int, T: float) -> NDArray[np.float64]:
    """Term ``C^m`` from ``C^{m-1}``: solves ``L_i C^m_i = -m <C^{m-1}, B e_i>``."""
    src = m * coupling_source(prev, B)
    out = np.zeros_like(prev)
    if not np.any(src):
        return out
    x = grid.x
    for i in range(model.n_states):
        out[:, i] = solve_transformed(model.rate[i], model.sigma[i], src[:, i], x, T)
    return out


@dataclass(frozen=True)
class HomotopySeries:
    terms: list[NDArray[np.float64]]
    order: int
    increments: NDArray[np.float64]  # sup |C^m| / m!
    price_increments: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))

    def partial_sum(self, M: int | None = None) -> NDArray[np.float64]:
        M = self.order if M is None else M
        return sum(self.terms[m] / factorial(m) for m in range(M + 1))


@dataclass(frozen=True)
class TruncationReport:
    order: int
    converged: bool
    diverging: bool
    last_increment: float
    tol: float

    def __str__(self) -> str:
        return (f"order={self.order} converged={self.converged} diverging={self.diverging} "
                f"last_increment={self.last_increment:.3e} tol={self.tol:.1e}")


def price_series(model: RegimeModel, u: ArrayLike, K: float, T: float, grid: GridSpec,
                 M_max: int = 5, tol: float = 1e-6,
                 window: tuple[float, float] | None = None) -> tuple[PriceGrid, HomotopySeries, TruncationReport]:
    """Sum ``C^m / m!`` until the sup-norm increment drops below ``tol`` or ``M_max``.

    The sup norm is taken over the whole surface, or over the log-price
    ``window`` if given (edges carry boundary truncation of the convolution).
    ``diverging`` flags increments that grew over three consecutive orders.
    """
    validate_model(model)
    u = np.asarray(u, dtype=float)
    B = controlled_generator(model, u)
    x = grid.x
    mask = np.ones(x.size, dtype=bool) if window is None else (x >= window[0]) & (x <= window[1])
    base = np.stack([bs_base_term(model, i, K, T, grid) for i in range(model.n_states)], axis=1)
    terms = [base]
    incs = [float(np.max(np.abs(base[..., mask])))]
    converged = False
    for m in range(1, M_max + 1):
        nxt = homotopy_step(terms[-1], B, grid, model, m, T)
        terms.append(nxt)
        incs.append(float(np.max(np.abs(nxt[..., mask]))) / factorial(m))
        if incs[-1] < tol:
            converged = True
            break
    incs_a = np.asarray(incs)
    d = np.diff(incs_a[1:])
    diverging = bool(d.size >= 3 and np.any(np.convolve(d > 0, np.ones(3), "valid") == 3))
    series = HomotopySeries(terms, len(terms) - 1, incs_a)
    values = series.partial_sum()
    pg = PriceGrid(x=x, times=grid.times(T), values=values, K=float(K), T=float(T))
    report = TruncationReport(series.order, converged, diverging, float(incs_a[-1]), tol)
    return pg, series, report


def pde_residual(model: RegimeModel, B: NDArray[np.float64], values: NDArray[np.float64],
                 x: NDArray[np.float64], times: NDArray[np.float64]) -> NDArray[np.float64]:
    """Discrete ``L_i C_i + <C, B e_i>`` on interior nodes (central differences).

    Returns shape ``(n_t - 1, N, n_x - 2)`` aligned with ``times[1:-1]`` and
    ``x[1:-1]``.
    """
    h = x[1] - x[0]
    dt = times[1] - times[0]
    v = values
    vt = (v[2:] - v[:-2]) / (2 * dt)
    vt = vt[..., 1:-1]
    core = v[1:-1]
    vx = (core[..., 2:] - core[..., :-2]) / (2 * h)
    vxx = (core[..., 2:] - 2 * core[..., 1:-1] + core[..., :-2]) / h ** 2
    r = model.rate[None, :, None]
    s2 = model.sigma[None, :, None] ** 2
    res = vt + (r - 0.5 * s2) * vx + 0.5 * s2 * vxx - r * core[..., 1:-1]
    return res + coupling_source(core[..., 1:-1], B)
