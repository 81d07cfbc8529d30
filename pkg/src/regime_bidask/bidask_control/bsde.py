"""Backward least-squares Monte Carlo for the inf/sup value BSDEs.

Paths are simulated under ``P``.  At each step the next-time value is
projected on a per-regime basis in standardised ``log z``; ``phi1`` is the
regression of the value increment times ``dW / dt`` and ``phi2`` the regression
of the value increment times the compensated jump count ``dJ_bar_m / (a_mj dt)``
(both against their no-jump control variates).  The pathwise update

    Y_n = exp(-int_n^{n+1} r) Y_{n+1} + dt * H(phi1, phi2)

is iterated back to time zero, where the estimate is the sample mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..asset_dynamics import simulate_p_measure
from ..model_core import ControlBox, RegimeModel, driver_coefficients, validate_model
from .driver import optimize_affine
from .hjb import DISCOUNT_MODES


class BsdeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Basis:
    """Monomials ``1, xi, .., xi^degree`` in standardised ``log z`` plus the scaled call payoff."""

    degree: int = 3
    include_payoff: bool = True

    @property
    def size(self) -> int:
        return self.degree + 1 + int(self.include_payoff)

    def derivative(self, y: NDArray[np.float64], K: float, loc: float, scale: float) -> NDArray[np.float64]:
        """Derivative of :meth:`design` with respect to ``y``."""
        if scale <= 0.0:
            return np.zeros((y.size, 1))
        xi = (y - loc) / scale
        cols = [np.zeros_like(xi)] + [p * xi ** (p - 1) / scale for p in range(1, self.degree + 1)]
        if self.include_payoff:
            cols.append(np.where(y > np.log(K), np.exp(y), 0.0) / K)
        return np.stack(cols, axis=1)

    def design(self, y: NDArray[np.float64], K: float, loc: float, scale: float) -> NDArray[np.float64]:
        if scale <= 0.0:
            return np.ones((y.size, 1))
        xi = (y - loc) / scale
        cols = [xi ** p for p in range(self.degree + 1)]
        if self.include_payoff:
            cols.append(np.maximum(np.exp(y) - K, 0.0) / K)
        return np.stack(cols, axis=1)


@dataclass
class _Fit:
    coef: NDArray[np.float64]
    loc: float
    scale: float


def _fit(basis: Basis, y: NDArray[np.float64], target: NDArray[np.float64], K: float,
         what: str, min_spread: float = 1e-10) -> _Fit:
    if y.size == 0:
        return _Fit(np.zeros(1), 0.0, 0.0)
    scale = float(y.std())
    loc = float(y.mean())
    if scale < min_spread:
        scale = 0.0
    X = basis.design(y, K, loc, scale)
    coef, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        raise BsdeError(f"rank-deficient regression for {what}: rank {rank} < {X.shape[1]} "
                        f"with {y.size} paths")
    return _Fit(coef, loc, scale)


def _eval(basis: Basis, fit: _Fit, y: NDArray[np.float64], K: float) -> NDArray[np.float64]:
    X = basis.design(y, K, fit.loc, fit.scale)
    return X @ fit.coef


@dataclass(frozen=True)
class BsdeSolution:
    """Time-zero estimate, per-path values and the fitted regression coefficients."""

    times: NDArray[np.float64]
    value: float
    se: float
    samples: NDArray[np.float64]
    terminal: NDArray[np.float64]
    value_coefs: list[list[NDArray[np.float64]]] = field(repr=False)
    phi1_coefs: list[list[NDArray[np.float64]]] = field(repr=False)
    phi2_coefs: list[list[NDArray[np.float64]]] = field(repr=False)
    direction: str = "inf"
    n_paths: int = 0

    def agrees_with(self, other: float, n_se: float = 3.0, rel: float = 0.02) -> bool:
        return abs(self.value - other) <= n_se * self.se + rel * abs(other)


def bsde_lsmc(model: RegimeModel, box: ControlBox, K: float, T: float, n_paths: int,
              n_steps: int, seed: int, direction: str = "inf", basis: Basis | None = None,
              x0: int = 0, s0: float = 100.0, discount: str = "path",
              threads: int = 1, phi1_method: str = "regression",
              phi2_method: str = "regression", linear_cv: bool = True) -> BsdeSolution:
    """Solve the optimised BSDE backwards along ``P``-paths and report ``V(0, s0, x0)``."""
    validate_model(model)
    if direction not in ("inf", "sup"):
        raise ValueError(f"direction must be 'inf' or 'sup', got {direction!r}")
    if discount not in DISCOUNT_MODES:
        raise ValueError(f"discount must be one of {DISCOUNT_MODES}, got {discount!r}")
    basis = Basis() if basis is None else basis
    n = model.n_states
    A = model.generator
    A0 = model.off_diagonal()
    paths = simulate_p_measure(model, x0, s0, T, n_steps, seed, n_paths, threads=threads,
                               record_steps=True)
    dt = T / n_steps
    states = paths.states.astype(np.int64)
    log_alpha = np.log(model.alpha)
    y = paths.log_sbar + log_alpha[states]
    z_T = np.exp(y[:, -1])
    Y = np.maximum(z_T - K, 0.0)
    if discount == "frozen":
        Y = Y * np.exp(-model.rate[states[:, -1]] * T)
    terminal = Y.copy()
    value_coefs: list[list[NDArray[np.float64]]] = []
    phi1_coefs: list[list[NDArray[np.float64]]] = []
    phi2_coefs: list[list[NDArray[np.float64]]] = []
    rows = np.arange(n_paths)
    for k in range(n_steps - 1, -1, -1):
        nxt = states[:, k + 1]
        cur = states[:, k]
        fits = {}
        for j in range(n):
            sel = nxt == j
            if np.any(sel):
                fits[j] = _fit(basis, y[sel, k + 1], Y[sel], K, f"value at step {k + 1}, regime {j + 1}")
        c_next = np.empty(n_paths)
        c_bar = np.empty(n_paths)
        c_now = np.empty(n_paths)
        y_bar = paths.log_sbar[:, k + 1] + log_alpha[cur]
        for j in range(n):
            sel = nxt == j
            if np.any(sel):
                c_next[sel] = _eval(basis, fits[j], y[sel, k + 1], K)
            sel = cur == j
            if np.any(sel):
                if j not in fits:
                    raise BsdeError(f"no paths in regime {j + 1} at step {k + 1}; increase n_paths")
                c_bar[sel] = _eval(basis, fits[j], y_bar[sel], K)
                c_now[sel] = _eval(basis, fits[j], y[sel, k], K)
        dW = paths.dW[:, k]
        # hedge the part of the value that is linear in z: its increments are
        # known in conditional mean and cancel exactly in the control coefficient
        beta = np.zeros(n_paths)
        if linear_cv:
            for j in range(n):
                sel = cur == j
                if np.any(sel):
                    fj = fits[j]
                    beta[sel] = (basis.derivative(y[sel, k], K, fj.loc, fj.scale) @ fj.coef) / np.exp(y[sel, k])
        z_now = np.exp(y[:, k])
        z_next = np.exp(y[:, k + 1])
        z_bar = np.exp(y_bar)
        t1 = ((c_bar - beta * z_bar) - (c_now - beta * z_now)) * dW / dt
        djbar = paths.jumps_steps[:, k, :] - paths.occ_steps[:, k, :] @ A0.T
        a_cur = A[:, cur].T  # (paths, N): a_{m, cur}
        with np.errstate(divide="ignore", invalid="ignore"):
            jump_val = (c_next - beta * z_next) - (c_bar - beta * z_bar)
            t2 = np.where(a_cur > 0, jump_val[:, None] * djbar / (a_cur * dt), 0.0)
        t2[rows, cur] = 0.0
        phi1 = np.zeros(n_paths)
        phi2 = np.zeros((n_paths, n))
        step_p1, step_p2 = [], []
        for j in range(n):
            sel = cur == j
            if not np.any(sel):
                step_p1.append(np.zeros(0))
                step_p2.append(np.zeros((0, n)))
                continue
            f1 = _fit(basis, y[sel, k], t1[sel], K, f"phi1 at step {k}, regime {j + 1}")
            f2 = _fit(basis, y[sel, k], t2[sel], K, f"phi2 at step {k}, regime {j + 1}")
            X = basis.design(y[sel, k], K, f1.loc, f1.scale)
            if phi1_method == "derivative":
                fj = fits[j]
                phi1[sel] = model.sigma[j] * (basis.derivative(y[sel, k], K, fj.loc, fj.scale) @ fj.coef)
            else:
                phi1[sel] = X @ f1.coef + beta[sel] * model.sigma[j] * z_now[sel]
            if phi2_method == "projection":
                for m_ in range(n):
                    if m_ != j and m_ in fits:
                        phi2[sel, m_] = (_eval(basis, fits[m_], y[sel, k] + log_alpha[m_] - log_alpha[j], K)
                                         - c_now[sel])
            else:
                phi2[sel] = X @ f2.coef + (beta[sel] * z_now[sel])[:, None] * (model.alpha / model.alpha[j] - 1.0)
            phi2[sel, j] = 0.0
            step_p1.append(f1.coef)
            step_p2.append(f2.coef)
        f0, g = driver_coefficients(model, cur, phi1, phi2)
        _, H = optimize_affine(f0, g, box, direction)
        disc = np.exp(-paths.occ_steps[:, k, :] @ model.rate) if discount == "path" else 1.0
        Y = disc * Y + dt * H
        value_coefs.append([fits[j].coef if j in fits else np.zeros(0) for j in range(n)])
        phi1_coefs.append(step_p1)
        phi2_coefs.append(step_p2)
    value_coefs.reverse()
    phi1_coefs.reverse()
    phi2_coefs.reverse()
    return BsdeSolution(times=paths.times, value=float(Y.mean()),
                        se=float(Y.std(ddof=1) / np.sqrt(n_paths)), samples=Y, terminal=terminal,
                        value_coefs=value_coefs, phi1_coefs=phi1_coefs, phi2_coefs=phi2_coefs,
                        direction=direction, n_paths=n_paths)
