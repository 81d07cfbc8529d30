"""Bid and ask values as inf/sup control problems over the chain generator."""

from .bidask import BidAsk, ConsistencyError, bid_ask
from .bsde import Basis, BsdeError, BsdeSolution, bsde_lsmc
from .driver import optimize_affine, optimize_driver, vertex_choice
from .hjb import HjbError, HjbSolution, StepSizeWarning, hjb_solve
from .jfunc import call_payoff, j_functional_mc
from .verify import OptimalityReport, flip_controls, verify_optimality

__all__ = [
    "Basis", "BidAsk", "BsdeError", "BsdeSolution", "ConsistencyError", "HjbError", "HjbSolution",
    "OptimalityReport", "StepSizeWarning", "bid_ask", "bsde_lsmc", "call_payoff", "flip_controls",
    "hjb_solve", "j_functional_mc", "optimize_affine", "optimize_driver", "verify_optimality",
    "vertex_choice",
]
