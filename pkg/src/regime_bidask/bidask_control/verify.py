"""Min/max principle check of a control field against an HJB solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..model_core import ControlBox, RegimeModel, driver_coefficients
from .driver import optimize_affine
from .hjb import HjbSolution


@dataclass(frozen=True)
class OptimalityReport:
    """Per-node comparison of ``F(candidate)`` with the optimised driver.

    ``violations`` and ``active`` (coefficient large enough for a vertex flip to
    move ``F`` by more than ``tol``) cover interior nodes ``[k, j, i]`` with
    ``k < n_t`` and ``0 < i < n_x - 1``.
    """

    gap: NDArray[np.float64]
    violations: NDArray[np.bool_]
    active: NDArray[np.bool_]
    tol: float

    @property
    def n_nodes(self) -> int:
        return int(self.violations.size)

    @property
    def n_violations(self) -> int:
        return int(self.violations.sum())

    @property
    def fraction_ok(self) -> float:
        return 1.0 - self.n_violations / self.n_nodes

    def __str__(self) -> str:
        return (f"nodes={self.n_nodes} violations={self.n_violations} "
                f"fraction_ok={self.fraction_ok:.6f} max_gap={float(self.gap.max()):.3e}")


def verify_optimality(candidate: NDArray[np.float64], hjb: HjbSolution, model: RegimeModel,
                      box: ControlBox | None = None, tol: float = 1e-8) -> OptimalityReport:
    """Compare ``F(t, x, candidate, phi1, phi2)`` with ``H`` on interior nodes.

    ``candidate[k, j, i]`` is the control of regime ``j`` (only the current
    regime's coordinate enters the driver).  The gap is ``F - H`` for ``inf``
    and ``H - F`` for ``sup``, so it is nonnegative for admissible candidates.
    """
    box = hjb.box if box is None else box
    candidate = np.asarray(candidate, dtype=float)
    if candidate.shape != hjb.values.shape:
        raise ValueError(f"control field has shape {candidate.shape}, expected {hjb.values.shape}")
    sl = (slice(0, -1), slice(None), slice(1, -1))
    phi1 = hjb.phi1[sl]
    phi2 = hjb.phi2[sl]
    cand = candidate[sl]
    n = model.n_states
    regime = np.broadcast_to(np.arange(n)[None, :, None], phi1.shape)
    f0, g = driver_coefficients(model, regime, phi1, phi2)
    _, H = optimize_affine(f0, g, box, hjb.direction)
    g_cur = np.take_along_axis(g, regime[..., None], axis=-1)[..., 0]
    F = f0 + g_cur * cand
    gap = F - H if hjb.direction == "inf" else H - F
    width = (box.hi - box.lo)[regime]
    return OptimalityReport(gap=gap, violations=np.abs(gap) > tol, active=np.abs(g_cur) * width > tol,
                            tol=tol)


def flip_controls(controls: NDArray[np.float64], box: ControlBox, mask: NDArray[np.bool_]) -> NDArray[np.float64]:
    """Move masked nodes to the opposite vertex of their coordinate."""
    lo = box.lo[None, :, None] * np.ones_like(controls)
    hi = box.hi[None, :, None] * np.ones_like(controls)
    other = np.where(np.isclose(controls, lo), hi, lo)
    out = controls.copy()
    out[mask] = other[mask]
    return out
