"""European call pricing: homotopy series and a finite-difference cross-check."""

from .bs import bs_base_term, bs_call
from .fd import PecletWarning, check_peclet, coupled_operator, fd_price, regime_operator
from .grid import GridSpec, PriceGrid
from .series import (HomotopySeries, TruncationReport, coupling_source, gamma_weight,
                     homotopy_step, pde_residual, price_series, solve_transformed)

__all__ = [
    "GridSpec", "HomotopySeries", "PecletWarning", "PriceGrid", "TruncationReport", "bs_base_term",
    "bs_call", "check_peclet", "coupled_operator", "coupling_source", "fd_price", "gamma_weight",
    "homotopy_step", "pde_residual", "price_series", "regime_operator", "solve_transformed",
]
