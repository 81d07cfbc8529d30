"""Pathwise Radon-Nikodym densities for the chain and the Brownian driver.

``Lambda_1`` changes the chain generator from ``A`` to ``B(u)``.  Its SDE
``dL = L_- (D_0(u) X_- - 1)^T dJ_bar`` is solved in closed form: every jump
``i -> j`` multiplies by ``d_ji = b_ji / a_ji`` and between jumps the density
grows at rate ``b_ii - a_ii``.  ``Lambda_2`` is the Esscher density of the
Brownian part.  Everything is accumulated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import solve_ivp

from .asset_dynamics import PricePaths
from .chain_sim import ChainBatch, ChainPath, simulate_chain_batch
from .model_core import (RegimeModel, build_controlled_generator, controlled_generator,
                         esscher_theta, validate_model)
from .streams import map_blocks


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class DensityValue:
    """Log-space density parts; arrays or scalars of matching shape."""

    log_lambda1: NDArray[np.float64] | float
    log_lambda2: NDArray[np.float64] | float = 0.0

    @property
    def lambda1(self):
        return np.exp(self.log_lambda1)

    @property
    def lambda2(self):
        return np.exp(self.log_lambda2)

    @property
    def value(self):
        return np.exp(np.asarray(self.log_lambda1) + np.asarray(self.log_lambda2))


def _log_ratio(A: NDArray[np.float64], B: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(B / A)
    out[np.eye(A.shape[0], dtype=bool)] = 0.0
    return out


def lambda1_pathwise(path: ChainPath, A: NDArray[np.float64], B: NDArray[np.float64]) -> DensityValue:
    """Closed-form ``Lambda_1(T)`` along one path."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    states = path.states
    log_l = 0.0
    for src, dst in zip(states[:-1], states[1:]):
        if A[dst, src] <= 0:
            raise DensityError(f"jump {src + 1}->{dst + 1} has zero rate under A; density undefined")
        log_l += np.log(B[dst, src] / A[dst, src])
    occ = path.occupation()
    log_l += float(occ @ (np.diag(B) - np.diag(A)))
    return DensityValue(log_l)


def lambda1_sde(path: ChainPath, A: NDArray[np.float64], B: NDArray[np.float64],
                rtol: float = 1e-13) -> float:
    """Integrate the defining SDE of ``Lambda_1`` numerically along ``path``.

    Between jumps ``dJ_bar = -A_0 X ds`` so the SDE is a linear ODE, solved with
    an adaptive high-order integrator; at a jump ``Delta J_bar = e_dst``.  Used
    as an independent check of :func:`lambda1_pathwise`.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    A0 = A - np.diag(np.diag(A))
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where(A != 0, B / np.where(A != 0, A, 1.0), 1.0)
    D0 = D - np.diag(np.diag(D))
    knots = path.knots
    lam = 1.0
    for k, state in enumerate(path.states):
        beta = D0[:, state] - 1.0
        slope = -float(beta @ A0[:, state])
        t0, t1 = knots[k], knots[k + 1]
        if t1 > t0:
            sol = solve_ivp(lambda t, y: slope * y, (t0, t1), [lam], method="DOP853",
                            rtol=rtol, atol=0.0)
            lam = float(sol.y[0, -1])
        if k < path.n_events:
            dst = path.to_states[k]
            dJ = np.zeros(n)
            dJ[dst] = 1.0
            lam = lam * (1.0 + beta @ dJ)
    return lam


def lambda1_batch(transitions: NDArray[np.int_], occupation: NDArray[np.float64],
                  A: NDArray[np.float64], B: NDArray[np.float64]) -> NDArray[np.float64]:
    """``log Lambda_1(T)`` from per-path transition counts ``[i, j]`` and occupation times."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    L = _log_ratio(A, B)  # L[j, i] for i -> j
    if np.any(transitions[:, ~np.eye(A.shape[0], dtype=bool) & (A.T <= 0)] > 0):
        raise DensityError("observed a jump with zero rate under A; density undefined")
    with np.errstate(invalid="ignore"):
        jump_part = np.einsum("pij,ji->p", transitions, np.where(np.isfinite(L), L, 0.0))
    return jump_part + occupation @ (np.diag(B) - np.diag(A))


def lambda2_esscher(w_increments: ArrayLike, kernel_path: ArrayLike,
                    dt: ArrayLike) -> DensityValue:
    """Left-point Riemann sums for ``log Lambda_2`` on a grid.

    ``kernel_path[..., k]`` is the Brownian tilt held over step ``k``.
    """
    w = np.asarray(w_increments, dtype=float)
    k = np.asarray(kernel_path, dtype=float)
    if w.shape != k.shape:
        raise DensityError(f"increments {w.shape} and kernel {k.shape} differ in shape")
    dt = np.broadcast_to(np.asarray(dt, dtype=float), w.shape[-1:])
    log_l2 = np.sum(k * w, axis=-1) - 0.5 * np.sum(k ** 2 * dt, axis=-1)
    return DensityValue(np.zeros_like(log_l2), log_l2)


def lambda2_exact(paths: PricePaths, kernel: ArrayLike) -> NDArray[np.float64]:
    """``log Lambda_2(T)`` for a regime-wise constant tilt, exact along each path."""
    k = np.asarray(kernel, dtype=float)
    return paths.w_by_state @ k - 0.5 * paths.occupation @ k ** 2


def girsanov_density(paths: PricePaths, model: RegimeModel, u: ArrayLike) -> DensityValue:
    """``Lambda^u(T) = Lambda_1 Lambda_2`` for paths simulated under ``P``."""
    if paths.measure != "P":
        raise DensityError("densities are defined relative to P-paths")
    u = np.asarray(u, dtype=float)
    B = controlled_generator(model, u)
    l1 = lambda1_batch(paths.transitions, paths.occupation, model.generator, B)
    l2 = lambda2_exact(paths, esscher_theta(model, u))
    return DensityValue(l1, l2)


# ----------------------------------------------------------------------------
# Reweighted chain statistics
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RateRecovery:
    """Density-weighted generator estimate with delta-method standard errors."""

    rates: NDArray[np.float64]
    rates_se: NDArray[np.float64]
    holding_means: NDArray[np.float64]
    holding_se: NDArray[np.float64]
    density_mean: float
    density_se: float


def _ratio_se(num: NDArray[np.float64], den: NDArray[np.float64]) -> tuple[float, float]:
    n = num.size
    mn, md = num.mean(), den.mean()
    ratio = mn / md
    resid = num - ratio * den
    return float(ratio), float(resid.std(ddof=1) / (np.sqrt(n) * abs(md)))


def recover_rates(batch: ChainBatch, weights: NDArray[np.float64] | None = None) -> RateRecovery:
    """Estimate ``b_ji = E[w N_ij] / E[w occ_i]`` and mean holding times ``1 / -b_ii``."""
    n = batch.occupation.shape[1]
    w = np.ones(batch.n_paths) if weights is None else np.asarray(weights)
    rates = np.zeros((n, n))
    rates_se = np.zeros((n, n))
    hold = np.full(n, np.nan)
    hold_se = np.full(n, np.nan)
    occ = batch.occupation * w[:, None]
    for i in range(n):
        exits = batch.transitions[:, i, :].sum(axis=1) * w
        if occ[:, i].sum() <= 0:
            continue
        for j in range(n):
            if j == i:
                continue
            rates[j, i], rates_se[j, i] = _ratio_se(batch.transitions[:, i, j] * w, occ[:, i])
        rates[i, i] = -rates[:, i].sum()
        if exits.sum() > 0:
            hold[i], hold_se[i] = _ratio_se(occ[:, i], exits)
            rates_se[i, i] = _ratio_se(exits, occ[:, i])[1]
    return RateRecovery(rates, rates_se, hold, hold_se, float(w.mean()),
                        float(w.std(ddof=1) / np.sqrt(w.size)))


def reweighted_rate_check(model: RegimeModel, u: ArrayLike, x0: int, T: float, n_paths: int,
                          seed: int, threads: int = 1) -> tuple[RateRecovery, NDArray[np.float64]]:
    """Simulate under ``A``, reweight by ``Lambda_1`` and recover ``B(u)``."""
    validate_model(model, require_positive_rates=True)
    B = build_controlled_generator(model, u).B
    batch = simulate_chain_batch(model.generator, x0, T, n_paths, seed, threads)
    w = np.exp(lambda1_batch(batch.transitions, batch.occupation, model.generator, B))
    return recover_rates(batch, w), B


# ----------------------------------------------------------------------------
# Stochastic exponential of the combined driver
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialReport:
    mean: float
    mean_se: float
    second_moment: float
    second_moment_se: float
    bound: float
    c2: float
    n_paths: int

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean - 1.0) <= 3.0 * self.mean_se

    @property
    def bound_ok(self) -> bool:
        return self.second_moment - 3.0 * self.second_moment_se <= self.bound


def stochastic_exponential_check(model: RegimeModel, u: ArrayLike, x0: int, T: float,
                                 n_paths: int, seed: int, threads: int = 1) -> ExponentialReport:
    """Moments of ``E(Theta)_T`` with ``Theta = int theta dW + int <D_0 X_- - 1, dM>``.

    The chain part integrates against ``dM`` as written, so each jump
    ``i -> j`` contributes ``1 + d_ji`` and the drift between jumps is ``b_ii``.
    The second moment is compared with ``exp(C_2 T)``, where ``C_2`` bounds
    ``theta_x^2 + sum_{k != x} b_kx^2 / a_kx`` over states.
    """
    validate_model(model, require_positive_rates=model.n_states > 1)
    u = np.asarray(u, dtype=float)
    coeffs = build_controlled_generator(model, u)
    B, D = coeffs.B, coeffs.D
    theta = esscher_theta(model, u)
    n = model.n_states
    A = model.generator
    seminorms = np.array([
        np.sum([B[k, j] ** 2 / A[k, j] for k in range(n) if k != j]) for j in range(n)
    ])
    c2 = float(np.max(theta ** 2) + np.max(seminorms))
    log_factor = np.where(np.eye(n, dtype=bool), 0.0, np.log1p(np.where(np.eye(n, dtype=bool), 0.0, D)))

    def block(rng: np.random.Generator, m: int):
        batch_seed = int(rng.integers(2**63 - 1))
        cb = simulate_chain_batch(A, x0, T, m, batch_seed)
        occ = cb.occupation
        # Brownian part is independent of the chain given occupation times
        w_state = rng.standard_normal((m, n)) * np.sqrt(occ)
        log_e = w_state @ theta - 0.5 * occ @ theta ** 2
        log_e += occ @ np.diag(B)
        log_e += np.einsum("pij,ji->p", cb.transitions, log_factor)
        return np.exp(log_e)

    e = np.concatenate(map_blocks(block, seed, n_paths, threads))
    e2 = e ** 2
    sq = np.sqrt(e.size)
    return ExponentialReport(float(e.mean()), float(e.std(ddof=1) / sq), float(e2.mean()),
                             float(e2.std(ddof=1) / sq), float(np.exp(c2 * T)), c2, e.size)
