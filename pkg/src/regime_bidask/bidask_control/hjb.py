"""Finite-difference solution of the inf/sup HJB systems in ``y = log z``.

For regime ``j`` the value ``v_j(t, y)`` solves

    v_t + (r_j - sigma_j^2/2) v_y + sigma_j^2/2 v_yy - k_j v
        + opt_{u_j} u_j [ -c_j v_y + sum_{m != j} a_mj phi2_m ] = 0,

where ``opt`` is ``min`` (bid) or ``max`` (ask), ``c_j = sum_k alpha_k a_kj / alpha_j``
and ``phi2_m`` is the jump integrand of the move to regime ``m``.  The bracket is
the ``u``-coefficient of the driver with ``phi1 = sigma v_y``.  ``k_j = r_j``
when the payoff is discounted along the path and ``0`` otherwise.

Two couplings are offered.  ``literal`` takes ``phi2 = v + eta`` at the same
``z`` with ``eta_m = z / alpha_m``; ``consistent`` moves ``z`` by the factor
``alpha_m / alpha_j`` on a switch.  They agree when ``alpha = 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from ..homotopy_pricer.fd import check_peclet, regime_operator
from ..homotopy_pricer.grid import GridSpec
from ..model_core import ControlBox, RegimeModel, validate_model
from .driver import vertex_choice

DISCOUNT_MODES = ("path", "frozen", "none")
COUPLINGS = ("literal", "consistent")
SCHEMES = ("policy", "imex")


class HjbError(RuntimeError):
    pass


class StepSizeWarning(RuntimeWarning):
    pass


def default_coupling(model: RegimeModel) -> str:
    return "literal" if np.allclose(model.alpha, 1.0) else "consistent"


def payoff(z: NDArray[np.float64], K: float, model: RegimeModel, T: float,
           discount: str) -> NDArray[np.float64]:
    """Terminal values ``g(z, e_j)`` stacked per regime, shape ``(N, len(z))``."""
    if discount not in DISCOUNT_MODES:
        raise ValueError(f"discount must be one of {DISCOUNT_MODES}, got {discount!r}")
    base = np.maximum(np.asarray(z) - K, 0.0)[None, :] * np.ones((model.n_states, 1))
    if discount == "frozen":
        base = base * np.exp(-model.rate * T)[:, None]
    return base


def far_field(z_max: float, K: float, model: RegimeModel, T: float, tau: float,
              discount: str) -> NDArray[np.float64]:
    """Deep in-the-money values per regime at time-to-maturity ``tau``."""
    if discount == "path":
        return z_max - K * np.exp(-model.rate * tau)
    grow = z_max * np.exp(model.rate * tau) - K
    if discount == "frozen":
        return np.exp(-model.rate * T) * grow
    return grow


def shift_matrix(x: NDArray[np.float64], delta: float) -> sp.csr_matrix:
    """Linear interpolation of grid values at ``x + delta`` (clamped at the edges)."""
    n = x.size
    if delta == 0.0:
        return sp.identity(n, format="csr")
    h = x[1] - x[0]
    p = np.clip((x + delta - x[0]) / h, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(p).astype(int), n - 2)
    w = p - i0
    rows = np.repeat(np.arange(n), 2)
    cols = np.stack([i0, i0 + 1], axis=1).ravel()
    vals = np.stack([1.0 - w, w], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def first_derivative(x: NDArray[np.float64]) -> sp.csr_matrix:
    """Central difference with zero boundary rows."""
    n = x.size
    h = x[1] - x[0]
    upper = np.full(n - 1, 0.5 / h)
    lower = np.full(n - 1, -0.5 / h)
    upper[0] = 0.0
    lower[-1] = 0.0
    return sp.diags([lower, upper], [-1, 1], format="csr")


@dataclass(frozen=True)
class JumpOperator:
    """Maps stacked values ``V`` to ``phi2`` (zero at the current regime) and the ``u``-coefficient."""

    phi2_blocks: list[list[sp.csr_matrix | None]]
    phi2_source: NDArray[np.float64]  # (N, N, n_y)
    Q: sp.csr_matrix
    q: NDArray[np.float64]
    D1: sp.csr_matrix

    def phi2(self, V: NDArray[np.float64]) -> NDArray[np.float64]:
        """``phi2[j, i, m]``: integrand at regime ``j``, node ``i``, destination ``m``."""
        n = V.shape[0]
        out = np.zeros((n, V.shape[1], n))
        for j in range(n):
            for m in range(n):
                if m != j:
                    out[j, :, m] = self.phi2_blocks[j][m] @ V[m] - V[j] + self.phi2_source[j, m]
        return out


def jump_operator(model: RegimeModel, x: NDArray[np.float64], coupling: str) -> JumpOperator:
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}, got {coupling!r}")
    n = model.n_states
    nx = x.size
    A = model.generator
    alpha = model.alpha
    c = model.alpha_drift()
    D1 = first_derivative(x)
    interior = np.ones(nx)
    interior[[0, -1]] = 0.0
    Iint = sp.diags(interior)
    blocks: list[list[sp.csr_matrix | None]] = [[None] * n for _ in range(n)]
    phi2_blocks: list[list[sp.csr_matrix | None]] = [[None] * n for _ in range(n)]
    source = np.zeros((n, n, nx))
    q = np.zeros((n, nx))
    z = np.exp(x)
    for j in range(n):
        diag_part = -c[j] * D1 + A[j, j] * Iint
        blocks[j][j] = diag_part
        for m in range(n):
            if m == j:
                continue
            if coupling == "consistent":
                P = shift_matrix(x, float(np.log(alpha[m] / alpha[j])))
            else:
                P = sp.identity(nx, format="csr")
                source[j, m] = z * (1.0 / alpha[m] - 1.0 / alpha[j])
            phi2_blocks[j][m] = P.tocsr()
            blocks[j][m] = A[m, j] * (Iint @ P)
            q[j] += A[m, j] * source[j, m] * interior
    Q = sp.bmat(blocks, format="csr")
    return JumpOperator(phi2_blocks, source, Q, q.ravel(), D1)


@dataclass(frozen=True)
class HjbSolution:
    """Value surfaces, optimal feedback controls and driver integrands on the grid.

    Arrays are indexed ``[k, j, i]`` by ascending time ``t_k``, regime ``j`` and
    log-price node ``x_i``; ``phi2`` carries a trailing destination axis.
    """

    x: NDArray[np.float64]
    times: NDArray[np.float64]
    values: NDArray[np.float64]
    controls: NDArray[np.float64]
    phi1: NDArray[np.float64]
    phi2: NDArray[np.float64]
    direction: str
    coupling: str
    discount: str
    K: float
    T: float
    box: ControlBox = field(repr=False)
    policy_iterations: int = 0

    def value(self, z: float, regime: int, k: int = 0) -> float:
        return float(CubicSpline(self.x, self.values[k, regime])(np.log(z)))

    def feedback(self):
        """Feedback map ``(t, s, states) -> u`` (shape ``(k, N)``) for path simulation."""
        times, x, ctrl = self.times, self.x, self.controls
        n = ctrl.shape[1]

        def u_star(t: float, s: NDArray[np.float64], states: NDArray[np.int_]) -> NDArray[np.float64]:
            k = min(int(np.searchsorted(times, t, side="right")) - 1, len(times) - 1)
            k = max(k, 0)
            y = np.log(np.asarray(s, dtype=float))
            idx = np.clip(np.rint((y - x[0]) / (x[1] - x[0])).astype(int), 0, x.size - 1)
            out = np.empty((y.size, n))
            for j in range(n):
                out[:, j] = ctrl[k, j, idx]
            return out

        return u_star


def hjb_solve(model: RegimeModel, box: ControlBox, K: float, T: float, grid: GridSpec,
              direction: str = "inf", coupling: str | None = None, discount: str = "path",
              scheme: str = "policy", rannacher_steps: int = 2,
              max_policy_iter: int = 50, value_tol: float = 1e-12) -> HjbSolution:
    """Backward time stepping of the HJB system for a call payoff.

    ``scheme="policy"`` is Crank-Nicolson with the optimised term implicit and
    policy iteration at every step (Rannacher-started).  ``scheme="imex"`` keeps
    diffusion implicit and the optimised driver and chain coupling explicit; it
    warns when the step exceeds the explicit stability guard.
    """
    validate_model(model)
    if direction not in ("inf", "sup"):
        raise ValueError(f"direction must be 'inf' or 'sup', got {direction!r}")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if box.dim != model.n_states:
        raise ValueError(f"box has dimension {box.dim}, model has {model.n_states} states")
    coupling = default_coupling(model) if coupling is None else coupling
    n = model.n_states
    x = grid.x
    nx = x.size
    h = grid.h
    z = np.exp(x)
    check_peclet(model, h)
    times = grid.times(T)
    dt = T / grid.n_t
    kill = model.rate if discount == "path" else np.zeros(n)
    L = sp.block_diag([regime_operator(x, model.rate[j] - 0.5 * model.sigma[j] ** 2,
                                       0.5 * model.sigma[j] ** 2, kill[j]) for j in range(n)],
                      format="csr")
    jump = jump_operator(model, x, coupling)
    Q, q = jump.Q, jump.q
    lo = np.repeat(box.lo, nx)
    hi = np.repeat(box.hi, nx)
    eye = sp.identity(n * nx, format="csr")
    bidx_lo = np.arange(n) * nx
    bidx_hi = bidx_lo + nx - 1

    if scheme == "imex":
        c = np.abs(model.alpha_drift())
        rate = np.max(box.hi * (-np.diag(model.generator) + c / h))
        if dt * rate > 1.0:
            warnings.warn(f"explicit coupling step {dt:.3g} exceeds stability guard {1 / rate:.3g}",
                          StepSizeWarning, stacklevel=2)

    def policy(V):
        return vertex_choice(Q @ V + q, lo, hi, direction)

    def set_bc(rhs, tau):
        rhs[bidx_lo] = 0.0
        rhs[bidx_hi] = far_field(z[-1], K, model, T, tau, discount)
        return rhs

    V = payoff(z, K, model, T, discount).ravel()
    values = np.empty((grid.n_t + 1, n, nx))
    controls = np.empty_like(values)
    values[-1] = V.reshape(n, nx)
    u = policy(V)
    controls[-1] = u.reshape(n, nx)
    total_iter = 0
    imex_cache: dict[float, object] = {}
    for k in range(grid.n_t, 0, -1):
        tau = T - times[k]
        if scheme == "imex":
            if dt not in imex_cache:
                imex_cache[dt] = splu((eye - dt * L).tocsc())
            u = policy(V)
            rhs = V + dt * (u * (Q @ V + q))
            tau += dt
            V = imex_cache[dt].solve(set_bc(rhs, tau))
            u = policy(V)
        else:
            sub = [(0.5 * dt, 1.0)] * 2 if grid.n_t - k < rannacher_steps else [(dt, 0.5)]
            for step, theta in sub:
                explicit = V + (1.0 - theta) * step * (L @ V + u * (Q @ V + q))
                tau += step
                u_new = u
                V_prev = None
                for it in range(max_policy_iter):
                    M = eye - theta * step * (L + sp.diags(u_new) @ Q)
                    rhs = set_bc(explicit + theta * step * u_new * q, tau)
                    V_new = splu(M.tocsc()).solve(rhs)
                    u_next = policy(V_new)
                    total_iter += 1
                    if np.array_equal(u_next, u_new):
                        break
                    # switches at nodes with a vanishing coefficient can cycle without moving V
                    if V_prev is not None and np.max(np.abs(V_new - V_prev)) <= value_tol * (1.0 + np.max(np.abs(V_new))):
                        break
                    V_prev = V_new
                    u_new = u_next
                else:
                    warnings.warn("policy iteration did not converge", RuntimeWarning, stacklevel=2)
                V, u = V_new, u_next
        values[k - 1] = V.reshape(n, nx)
        controls[k - 1] = u.reshape(n, nx)
    phi1 = np.empty_like(values)
    phi2 = np.empty(values.shape + (n,))
    for k in range(values.shape[0]):
        for j in range(n):
            phi1[k, j] = model.sigma[j] * (jump.D1 @ values[k, j])
        phi2[k] = jump.phi2(values[k])
    return HjbSolution(x=x, times=times, values=values, controls=controls, phi1=phi1, phi2=phi2,
                       direction=direction, coupling=coupling, discount=discount, K=float(K),
                       T=float(T), box=box, policy_iterations=total_iter)
