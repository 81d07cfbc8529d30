"""Crank-Nicolson solver for the coupled regime-switching pricing system.

In ``tau = T - t`` and ``x = log s`` every regime solves

    dC_i/dtau = (r_i - sigma_i^2/2) C_i' + sigma_i^2/2 C_i'' - r_i C_i + <C, B e_i>

with Dirichlet far-field data.  The coupling is handled implicitly through one
sparse block system.  The jump of ``S`` at a regime switch is not part of this
system, so it prices the call exactly only when ``alpha = 1``.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.linalg import splu

from ..model_core import RegimeModel, controlled_generator, validate_model
from .grid import GridSpec, PriceGrid

ControlPath = Callable[[float], ArrayLike]


class PecletWarning(RuntimeWarning):
    pass


def regime_operator(x: NDArray[np.float64], drift: float, diff: float,
                    kill: float) -> sp.csr_matrix:
    """Central-difference ``drift d/dx + diff d2/dx2 - kill`` with zero boundary rows."""
    n = x.size
    h = x[1] - x[0]
    lo = diff / h ** 2 - drift / (2 * h)
    mid = -2 * diff / h ** 2 - kill
    hi = diff / h ** 2 + drift / (2 * h)
    main = np.full(n, mid)
    lower = np.full(n - 1, lo)
    upper = np.full(n - 1, hi)
    main[[0, -1]] = 0.0
    upper[0] = 0.0
    lower[-1] = 0.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


def coupled_operator(model: RegimeModel, B: NDArray[np.float64], x: NDArray[np.float64]) -> sp.csr_matrix:
    """Block operator acting on ``V`` stacked regime-major; boundary rows are zero."""
    n = model.n_states
    blocks = [regime_operator(x, model.rate[i] - 0.5 * model.sigma[i] ** 2,
                              0.5 * model.sigma[i] ** 2, model.rate[i]) for i in range(n)]
    interior = np.ones(x.size)
    interior[[0, -1]] = 0.0
    coupling = sp.kron(sp.csr_matrix(B.T), sp.diags(interior))
    return (sp.block_diag(blocks) + coupling).tocsr()


def check_peclet(model: RegimeModel, h: float) -> float:
    """Largest cell Peclet number ``|drift| h / diff``; warns above 2."""
    drift = np.abs(model.rate - 0.5 * model.sigma ** 2)
    pe = float(np.max(drift * h / (0.5 * model.sigma ** 2)))
    if pe > 2.0:
        warnings.warn(f"cell Peclet number {pe:.2f} > 2: advection dominates, refine the grid",
                      PecletWarning, stacklevel=3)
    return pe


def _control_at(control: ArrayLike | ControlPath, t: float, n: int) -> NDArray[np.float64]:
    u = np.asarray(control(t) if callable(control) else control, dtype=float)
    if u.shape != (n,):
        raise ValueError(f"control has shape {u.shape}, expected ({n},)")
    return u


def fd_price(model: RegimeModel, u: ArrayLike | ControlPath, K: float, T: float, grid: GridSpec,
             rannacher_steps: int = 2) -> PriceGrid:
    """Solve the coupled system backwards from the call payoff.

    ``u`` is a constant control or a map ``t -> u``; in the latter case ``B`` is
    re-assembled at the midpoint of every step.  The first ``rannacher_steps``
    steps are each replaced by two implicit Euler half steps to damp the payoff
    kink.
    """
    validate_model(model)
    n = model.n_states
    x = grid.x
    nx = x.size
    check_peclet(model, grid.h)
    times = grid.times(T)
    dt = T / grid.n_t
    payoff = np.maximum(np.exp(x) - K, 0.0)
    values = np.empty((grid.n_t + 1, n, nx))
    values[-1] = payoff
    eye = sp.identity(n * nx, format="csc")
    cache: dict[tuple[bytes, float, float], object] = {}

    def solver(B, theta, step):
        key = (B.tobytes(), theta, step)
        if key not in cache:
            L = coupled_operator(model, B, x)
            cache[key] = (splu((eye - theta * step * L).tocsc()), L)
        return cache[key]

    def boundary(tau):
        lo = np.zeros(n)
        hi = np.exp(x[-1]) - K * np.exp(-model.rate * tau)
        return lo, hi

    v = np.tile(payoff, n)
    for k in range(grid.n_t, 0, -1):
        tau0 = T - times[k]
        t_mid = 0.5 * (times[k] + times[k - 1])
        B = controlled_generator(model, _control_at(u, t_mid, n))
        sub = [(0.5 * dt, 1.0)] * 2 if grid.n_t - k < rannacher_steps else [(dt, 0.5)]
        tau = tau0
        for step, theta in sub:
            lu, L = solver(B, theta, step)
            tau += step
            rhs = v + (1.0 - theta) * step * (L @ v)
            lo, hi = boundary(tau)
            rhs[0::nx] = lo
            rhs[nx - 1::nx] = hi
            v = lu.solve(rhs)
        values[k - 1] = v.reshape(n, nx)
    return PriceGrid(x=x, times=times, values=values, K=float(K), T=float(T))
