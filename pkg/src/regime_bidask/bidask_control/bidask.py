"""Bid and ask prices as the inf and sup value functions."""

from __future__ import annotations

from dataclasses import dataclass

from ..homotopy_pricer.grid import GridSpec
from ..model_core import ControlBox, RegimeModel
from .bsde import bsde_lsmc
from .hjb import hjb_solve


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class BidAsk:
    bid: float
    ask: float
    bid_se: float = 0.0
    ask_se: float = 0.0
    method: str = "hjb"

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def spread(self) -> float:
        return self.ask - self.bid

    def summary(self) -> str:
        return f"bid={self.bid:.6f}, ask={self.ask:.6f}, mid={self.mid:.6f}, spread={self.spread:.6f}"


def bid_ask(model: RegimeModel, box: ControlBox, K: float, T: float, grid: GridSpec | None = None,
            method: str = "hjb", s0: float = 100.0, x0: int = 0, tol: float = 1e-8,
            n_paths: int = 100_000, n_steps: int = 50, seed: int = 0, **kw) -> BidAsk:
    """``bid = V_inf(0, s0, x0)``, ``ask = V_sup(0, s0, x0)``.

    A bid above the ask by more than ``tol`` (plus three standard errors for
    the Monte Carlo method) raises :class:`ConsistencyError`.
    """
    if method == "hjb":
        if grid is None:
            grid = GridSpec.around(s0, T, float(model.sigma.max()))
        lo = hjb_solve(model, box, K, T, grid, "inf", **kw).value(s0, x0)
        hi = hjb_solve(model, box, K, T, grid, "sup", **kw).value(s0, x0)
        out = BidAsk(lo, hi, method=method)
        slack = tol
    elif method == "bsde":
        lo_s = bsde_lsmc(model, box, K, T, n_paths, n_steps, seed, "inf", x0=x0, s0=s0, **kw)
        hi_s = bsde_lsmc(model, box, K, T, n_paths, n_steps, seed, "sup", x0=x0, s0=s0, **kw)
        out = BidAsk(lo_s.value, hi_s.value, lo_s.se, hi_s.se, method)
        slack = tol + 3.0 * (lo_s.se + hi_s.se)
    else:
        raise ValueError(f"method must be 'hjb' or 'bsde', got {method!r}")
    if out.bid > out.ask + slack:
        raise ConsistencyError(f"bid {out.bid:.6f} exceeds ask {out.ask:.6f}")
    return out
