"""Pointwise optimisation of the BSDE driver over the control box."""

from __future__ import annotations

import itertools

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..model_core import (TIE_TOL, ControlBox, RateMap, RegimeModel, driver_coefficients,
                          driver_F, psi_matrix)

DIRECTIONS = ("inf", "sup")


def _check_direction(direction: str) -> None:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be 'inf' or 'sup', got {direction!r}")


def vertex_choice(coef: NDArray[np.float64], lo: NDArray[np.float64] | float,
                  hi: NDArray[np.float64] | float, direction: str) -> NDArray[np.float64]:
    """Per-coordinate optimiser of ``coef * u`` on ``[lo, hi]``; ties take ``lo``."""
    _check_direction(direction)
    if direction == "inf":
        return np.where(coef < -TIE_TOL, hi, lo)
    return np.where(coef > TIE_TOL, hi, lo)


def optimize_affine(f0: NDArray[np.float64], g: NDArray[np.float64], box: ControlBox,
                    direction: str) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Optimise ``f0 + g @ u`` over the box; ``g`` has the state axis last."""
    u = vertex_choice(g, box.lo, box.hi, direction)
    return u, f0 + np.sum(g * u, axis=-1)


def optimize_driver(t: float, x: int, phi1: float, phi2: ArrayLike, model: RegimeModel,
                    box: ControlBox, direction: str, rate_map: RateMap | None = None,
                    grid_points: int = 21) -> tuple[NDArray[np.float64], float]:
    """``argmin``/``argmax`` of ``F(t, x, u, phi1, phi2)`` over the box.

    For ``B(u) = A diag(u)`` the driver is affine and separable in ``u`` and the
    optimum sits on a vertex.  A user-supplied ``rate_map`` falls back to a
    tensor grid search with ``grid_points`` per coordinate.
    """
    _check_direction(direction)
    phi2 = np.asarray(phi2, dtype=float)
    if rate_map is None:
        f0, g = driver_coefficients(model, x, phi1, phi2)
        u, val = optimize_affine(f0, g, box, direction)
        return u, float(val)
    psi = np.diag(psi_matrix(model.generator, x))
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in zip(box.lo, box.hi)]
    best_u, best = None, None
    for cand in itertools.product(*axes):
        val = driver_F(t, x, cand, phi1, phi2, model, psi, rate_map=rate_map)
        better = best is None or (val < best if direction == "inf" else val > best)
        if better:
            best_u, best = np.asarray(cand), val
    return best_u, float(best)
