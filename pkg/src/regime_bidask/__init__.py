"""Regime-switching asset model with controlled chain generators and bid/ask valuation."""

from .model_core import (ControlBox, CoeffMatrices, ModelError, RegimeModel,
                         build_controlled_generator, driver_F, esscher_theta, psi_matrix,
                         seminorm_sq, validate_model)

__all__ = [
    "ControlBox", "CoeffMatrices", "ModelError", "RegimeModel", "build_controlled_generator",
    "driver_F", "esscher_theta", "psi_matrix", "seminorm_sq", "validate_model",
]
