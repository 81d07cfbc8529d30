"""Static model data and the generator algebra shared by every solver.

Conventions
-----------
States are indexed ``0..N-1`` internally; error messages use 1-based indices.
The generator is stored column-per-source: ``A[j, i]`` is the rate of a jump
from state ``i`` to state ``j``, so every column sums to zero and ``A @ e_i``
is the drift of the indicator vector while the chain sits in ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

RateMap = Callable[[NDArray[np.float64]], NDArray[np.float64]]

COLUMN_SUM_TOL = 1e-10
TIE_TOL = 1e-12


class ModelError(ValueError):
    """A model, control set or control value violates a standing assumption."""


@dataclass(frozen=True)
class RegimeModel:
    """Regime-switching asset model.

    Parameters
    ----------
    generator : (N, N) array
        Rate matrix ``A`` with ``A[j, i]`` the intensity of ``i -> j``.
    mu, sigma : (N,) arrays
        Per-regime drift and volatility of the continuous price ``S_bar``.
    alpha : (N,) array
        Per-regime scaling, ``S = S_bar * alpha[X]``.
    rate : (N,) array
        Per-regime risk-free rate.
    """

    generator: NDArray[np.float64]
    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]
    alpha: NDArray[np.float64]
    rate: NDArray[np.float64]

    def __post_init__(self) -> None:
        for name in ("generator", "mu", "sigma", "alpha", "rate"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return int(self.mu.shape[0])

    @classmethod
    def from_lists(
        cls,
        generator: ArrayLike,
        mu: ArrayLike,
        sigma: ArrayLike,
        alpha: ArrayLike | None = None,
        rate: ArrayLike | float = 0.0,
    ) -> "RegimeModel":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        n = mu.shape[0]
        if alpha is None:
            alpha = np.ones(n)
        rate = np.broadcast_to(np.asarray(rate, dtype=float), (n,))
        return cls(np.atleast_2d(np.asarray(generator, dtype=float)), mu,
                   np.atleast_1d(sigma), np.atleast_1d(alpha), rate)

    def with_alpha(self, alpha: ArrayLike) -> "RegimeModel":
        return RegimeModel(self.generator, self.mu, self.sigma, alpha, self.rate)

    def off_diagonal(self) -> NDArray[np.float64]:
        """``A_0``: the generator with its diagonal zeroed."""
        return self.generator - np.diag(np.diag(self.generator))

    def alpha_drift(self) -> NDArray[np.float64]:
        """``c_i = sum_j alpha_j a_ji / alpha_i``, the compensator of the alpha jumps."""
        return (self.alpha @ self.generator) / self.alpha


@dataclass(frozen=True)
class ControlBox:
    """Coordinate box ``[lo, hi]`` inside the positive orthant."""

    lo: NDArray[np.float64]
    hi: NDArray[np.float64]

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64)).copy()
        if lo.shape != hi.shape:
            raise ModelError(f"control box bounds differ in shape: {lo.shape} vs {hi.shape}")
        for i, (a, b) in enumerate(zip(lo, hi), start=1):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ModelError(f"control box bound {i} not finite")
            if a <= 0:
                raise ModelError(f"control box lo[{i}] not positive")
            if b < a:
                raise ModelError(f"control box hi[{i}] below lo[{i}]")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def uniform(cls, n: int, lo: float, hi: float) -> "ControlBox":
        return cls(np.full(n, lo), np.full(n, hi))

    @classmethod
    def singleton(cls, u: ArrayLike) -> "ControlBox":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return cls(u, u)

    @property
    def dim(self) -> int:
        return int(self.lo.shape[0])

    @property
    def is_singleton(self) -> bool:
        return bool(np.all(self.lo == self.hi))

    def contains(self, u: ArrayLike, tol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))


@dataclass(frozen=True)
class CoeffMatrices:
    """Generator under control and the Girsanov ratio matrices.

    ``D[j, i] = B[j, i] / A[j, i]``; with ``B(u) = A diag(u)`` every row of ``D``
    equals ``u``.
    """

    B: NDArray[np.float64]
    D: NDArray[np.float64]
    D0: NDArray[np.float64]
    A0: NDArray[np.float64]
    u: NDArray[np.float64] = field(repr=False)


def validate_model(model: RegimeModel, require_positive_rates: bool = False) -> RegimeModel:
    """Return ``model`` unchanged if all standing assumptions hold.

    Raises
    ------
    ModelError
        Naming the first violated invariant, with 1-based indices.
    """
    A = model.generator
    n = model.mu.shape[0]
    if A.shape != (n, n):
        raise ModelError(f"generator has shape {A.shape}, expected ({n}, {n})")
    for name in ("sigma", "alpha", "rate"):
        if getattr(model, name).shape != (n,):
            raise ModelError(f"{name} has length {getattr(model, name).shape[0]}, expected {n}")
    for name in ("generator", "mu", "sigma", "alpha", "rate"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise ModelError(f"{name} has non-finite entries")
    col_sums = A.sum(axis=0)
    for i, s in enumerate(col_sums, start=1):
        if abs(s) > COLUMN_SUM_TOL:
            raise ModelError(f"generator column {i} sums to {s:.12g}")
    for i in range(n):
        for j in range(n):
            if i != j and A[j, i] < 0:
                raise ModelError(f"generator entry ({j + 1},{i + 1}) negative: {A[j, i]:.12g}")
            if i != j and require_positive_rates and A[j, i] <= 0:
                raise ModelError(f"generator entry ({j + 1},{i + 1}) must be positive")
    for i, s in enumerate(model.sigma, start=1):
        if s <= 0:
            raise ModelError(f"sigma[{i}] not positive")
    for i, a in enumerate(model.alpha, start=1):
        if a <= 0:
            raise ModelError(f"alpha[{i}] not positive")
    return model


def validate_generator(B: NDArray[np.float64], name: str = "generator") -> None:
    for i, s in enumerate(B.sum(axis=0), start=1):
        if abs(s) > COLUMN_SUM_TOL * max(1.0, np.abs(B).max()):
            raise ModelError(f"{name} column {i} sums to {s:.12g}")
    off = B - np.diag(np.diag(B))
    if np.any(off < 0):
        j, i = np.argwhere(off < 0)[0]
        raise ModelError(f"{name} entry ({j + 1},{i + 1}) negative")


def controlled_generator(
    model: RegimeModel, u: ArrayLike, rate_map: RateMap | None = None
) -> NDArray[np.float64]:
    """``B(u)``; the default family scales column ``i`` of ``A`` by ``u_i``."""
    u = np.asarray(u, dtype=float)
    if rate_map is None:
        return model.generator * u[None, :]
    B = np.asarray(rate_map(u), dtype=float)
    validate_generator(B, "controlled generator")
    return B


def build_controlled_generator(
    model: RegimeModel,
    u: ArrayLike,
    box: ControlBox | None = None,
    rate_map: RateMap | None = None,
) -> CoeffMatrices:
    """Assemble ``B(u)``, ``D(u)``, ``D_0(u)`` and ``A_0``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.n_states,):
        raise ModelError(f"control has length {u.shape[0]}, expected {model.n_states}")
    if box is not None and not box.contains(u):
        raise ModelError(f"control {u.tolist()} outside box [{box.lo.tolist()}, {box.hi.tolist()}]")
    if np.any(u < 0):
        raise ModelError("control must lie in the positive orthant")
    A = model.generator
    B = controlled_generator(model, u, rate_map)
    D = np.empty_like(A)
    for j in range(A.shape[0]):
        for i in range(A.shape[1]):
            if A[j, i] != 0.0:
                D[j, i] = B[j, i] / A[j, i]
            elif B[j, i] == 0.0:
                # no transition under either measure; ratio is immaterial
                D[j, i] = u[i] if rate_map is None else 1.0
            else:
                raise ModelError(
                    f"B({j + 1},{i + 1}) > 0 where A({j + 1},{i + 1}) = 0: measures not equivalent"
                )
    D0 = D - np.diag(np.diag(D))
    return CoeffMatrices(B=B, D=D, D0=D0, A0=model.off_diagonal(), u=u)


def esscher_theta(
    model: RegimeModel, u: ArrayLike, rate_map: RateMap | None = None
) -> NDArray[np.float64]:
    """Per-regime Esscher parameter that makes the discounted price a martingale.

    ``theta_i = (r_i - mu_i - sum_j alpha_j b_ji(u) / alpha_i) / sigma_i``.  The
    Brownian motion is tilted by ``theta`` itself, so the risk-neutral drift of
    ``S_bar`` is ``mu + theta * sigma``.
    """
    B = controlled_generator(model, np.asarray(u, dtype=float), rate_map)
    compensator = (model.alpha @ B) / model.alpha
    return (model.rate - model.mu - compensator) / model.sigma


def psi_matrix(B: NDArray[np.float64], x: int) -> NDArray[np.float64]:
    """Predictable quadratic-variation density of the chain martingale at state ``x``.

    ``diag(B e_x) - B diag(e_x) - diag(e_x) B^T``; symmetric and PSD for any
    generator, with the all-ones vector in its null space.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    e = np.zeros(n)
    e[x] = 1.0
    return np.diag(B @ e) - B * e[None, :] - e[:, None] * B.T


def seminorm_sq(psi: NDArray[np.float64], y: ArrayLike) -> float:
    y = np.asarray(y, dtype=float)
    return float(y @ psi @ y)


def seminorm_closed_form(model: RegimeModel, u: ArrayLike, x: int,
                         rate_map: RateMap | None = None) -> float:
    """``sum_{k != x} b_kx(u)^2 / a_kx``, the squared seminorm of ``D_0(u) e_x - 1``."""
    A = model.generator
    B = controlled_generator(model, np.asarray(u, dtype=float), rate_map)
    mask = np.arange(A.shape[0]) != x
    return float(np.sum(B[mask, x] ** 2 / A[mask, x]))


def jump_integrand(values: NDArray[np.float64], x: int | NDArray[np.int_]) -> NDArray[np.float64]:
    """Representative of a chain-martingale integrand with zero at the current state.

    Integrands against ``dM`` are only defined up to multiples of the ones
    vector; the representative vanishing at ``x`` is the integrand against the
    compensated counting process ``J_bar``.  ``values`` has the state axis last.
    """
    values = np.asarray(values, dtype=float)
    if np.ndim(x) == 0:
        return values - values[..., int(x)][..., None]
    cur = np.take_along_axis(values, np.asarray(x)[..., None], axis=-1)
    return values - cur


def driver_F(
    t: float,
    x: int,
    u: ArrayLike,
    phi1: float,
    phi2: ArrayLike,
    model: RegimeModel,
    psi_diag: ArrayLike | None = None,
    theta_ref: ArrayLike | None = None,
    rate_map: RateMap | None = None,
) -> float:
    """BSDE driver ``phi1 * theta_x + sum_m phi2_m [D_0(u) e_x - 1]_m Psi_mm``.

    ``theta`` is recomputed from ``u`` unless ``theta_ref`` (a reference
    control) freezes it.  ``psi_diag`` defaults to the diagonal of
    ``psi_matrix(A, x)``.  Callers solving BSDEs pass the ``J_bar``
    representative of ``phi2`` (see :func:`jump_integrand`); with that choice the
    jump part equals ``<phi2, (B(u) - A) e_x>``.
    """
    u = np.asarray(u, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    coeffs = build_controlled_generator(model, u, rate_map=rate_map)
    theta = esscher_theta(model, u if theta_ref is None else theta_ref, rate_map)
    if psi_diag is None:
        psi_diag = np.diag(psi_matrix(model.generator, x))
    beta = coeffs.D0[:, x] - 1.0
    return float(phi1 * theta[x] + np.sum(phi2 * beta * np.asarray(psi_diag)))


def driver_coefficients(
    model: RegimeModel,
    x: NDArray[np.int_] | int,
    phi1: ArrayLike,
    phi2: ArrayLike,
    theta_ref: ArrayLike | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Affine decomposition ``F(u) = f0 + g @ u`` for ``B(u) = A diag(u)``.

    Vectorised over leading axes of ``phi1`` (shape ``S``) and ``phi2``
    (shape ``S + (N,)``); ``x`` broadcasts against ``S``.  Only the coordinate
    of the current state carries a nonzero coefficient.
    """
    A = model.generator
    n = model.n_states
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    x = np.broadcast_to(np.asarray(x), phi1.shape)
    a_col = A[:, x]  # (N,) + S
    a_col = np.moveaxis(a_col, 0, -1)  # S + (N,)
    onehot = np.eye(n, dtype=bool)[x]
    a_jj = np.sum(np.where(onehot, a_col, 0.0), axis=-1)
    phi2_cur = np.sum(np.where(onehot, phi2, 0.0), axis=-1)
    off_sum = np.sum(np.where(onehot, 0.0, a_col * phi2), axis=-1)
    base = (model.rate - model.mu) / model.sigma
    c_over_sigma = model.alpha_drift() / model.sigma
    if theta_ref is None:
        f0 = phi1 * base[x] - off_sum + a_jj * phi2_cur
        gx = -phi1 * c_over_sigma[x] + off_sum
    else:
        theta = esscher_theta(model, theta_ref)
        f0 = phi1 * theta[x] - off_sum + a_jj * phi2_cur
        gx = off_sum
    g = np.where(onehot, gx[..., None], 0.0)
    return f0, g
