"""YAML experiment configuration.

Schema (all ``numerics`` keys optional)::

    model:
      generator: [[-1, 2], [1, -2]]   # column i holds the exit rates of state i
      mu: [0.05, 0.03]
      sigma: [0.2, 0.3]
      alpha: [1.0, 1.0]
      rate: [0.02, 0.02]
    control:
      lo: [0.5, 0.5]
      hi: [2.0, 2.0]
    product:
      K: 100
      T: 1
      s0: 100
      x0: 1                           # 1-based initial regime
    numerics:
      n_x: 401
      n_t: 200
      n_paths: 100000
      n_steps: 50
      seed: 0
      tol: 1.0e-3
      M_max: 5
      coupling: null                  # literal | consistent | null (auto)
      discount: path                  # path | frozen | none
      basis_degree: 3
      u: null                         # constant control for single-measure pricing
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .bidask_control.hjb import COUPLINGS, DISCOUNT_MODES
from .model_core import ControlBox, ModelError, RegimeModel, validate_model


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelBlock:
    generator: list[list[float]]
    mu: list[float]
    sigma: list[float]
    alpha: list[float]
    rate: list[float]

    def build(self) -> RegimeModel:
        return RegimeModel.from_lists(self.generator, self.mu, self.sigma, self.alpha, self.rate)


@dataclass(frozen=True)
class ControlBlock:
    lo: list[float]
    hi: list[float]

    def build(self) -> ControlBox:
        return ControlBox(np.array(self.lo), np.array(self.hi))


@dataclass(frozen=True)
class ProductBlock:
    K: float
    T: float
    s0: float = 100.0
    x0: int = 1


@dataclass(frozen=True)
class NumericsBlock:
    n_x: int = 401
    n_t: int = 200
    n_paths: int = 100_000
    n_steps: int = 50
    seed: int = 0
    tol: float = 1e-3
    M_max: int = 5
    coupling: str | None = None
    discount: str = "path"
    basis_degree: int = 3
    u: list[float] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock
    control: ControlBlock
    product: ProductBlock
    numerics: NumericsBlock = field(default_factory=NumericsBlock)

    @property
    def n_states(self) -> int:
        return len(self.model.mu)

    def regime_model(self) -> RegimeModel:
        return self.model.build()

    def box(self) -> ControlBox:
        return self.control.build()

    def control_value(self) -> np.ndarray:
        u = self.numerics.u
        return np.ones(self.n_states) if u is None else np.asarray(u, dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump())

    def with_seed(self, seed: int) -> "ExperimentConfig":
        num = NumericsBlock(**{**asdict(self.numerics), "seed": int(seed)})
        return ExperimentConfig(self.model, self.control, self.product, num)


def _block(cls, data: Any, name: str, required: tuple[str, ...] = ()):
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' block must be a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(extra))}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"missing key(s) in '{name}': {', '.join(missing)}")
    return cls(**data)


def _floats(values: Any, name: str) -> list[float]:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be numeric: {exc}") from None
    if arr.ndim != 1:
        raise ConfigError(f"{name} must be a list")
    return [float(v) for v in arr]


def from_dict(data: Any) -> ExperimentConfig:
    """Parse and validate; every failure raises :class:`ConfigError`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with model/control/product blocks")
    extra = set(data) - {"model", "control", "product", "numerics"}
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    for key in ("model", "control", "product"):
        if key not in data:
            raise ConfigError(f"missing '{key}' block")
    m = dict(data["model"] or {})
    if "mu" in m:
        n = len(np.atleast_1d(m["mu"]))
        m.setdefault("alpha", [1.0] * n)
    model = _block(ModelBlock, m, "model", ("generator", "mu", "sigma", "alpha", "rate"))
    try:
        gen = np.asarray(model.generator, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("model.generator must be a numeric square matrix") from None
    if gen.ndim != 2:
        raise ConfigError("model.generator must be a square matrix")
    model = ModelBlock(gen.tolist(), _floats(model.mu, "model.mu"), _floats(model.sigma, "model.sigma"),
                       _floats(model.alpha, "model.alpha"), _floats(model.rate, "model.rate"))
    control = _block(ControlBlock, data["control"], "control", ("lo", "hi"))
    control = ControlBlock(_floats(control.lo, "control.lo"), _floats(control.hi, "control.hi"))
    product = _block(ProductBlock, data["product"], "product", ("K", "T"))
    product = ProductBlock(float(product.K), float(product.T), float(product.s0), int(product.x0))
    numerics = _block(NumericsBlock, data.get("numerics") or {}, "numerics")
    if numerics.u is not None:
        numerics = NumericsBlock(**{**asdict(numerics), "u": _floats(numerics.u, "numerics.u")})
    cfg = ExperimentConfig(model, control, product, numerics)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        model = validate_model(cfg.regime_model())
        box = cfg.box()
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    n = model.n_states
    if box.dim != n:
        raise ConfigError(f"control box has dimension {box.dim}, model has {n} states")
    p, q = cfg.product, cfg.numerics
    if not p.T > 0:
        raise ConfigError("product.T must be positive")
    if p.K < 0 or not p.s0 > 0:
        raise ConfigError("product.K must be nonnegative and product.s0 positive")
    if not 1 <= p.x0 <= n:
        raise ConfigError(f"product.x0 must lie in 1..{n}")
    for name in ("n_x", "n_t", "n_paths", "n_steps", "M_max", "basis_degree"):
        if int(getattr(q, name)) < 1:
            raise ConfigError(f"numerics.{name} must be a positive integer")
    if q.n_x < 5:
        raise ConfigError("numerics.n_x must be at least 5")
    if q.n_paths < 2:
        raise ConfigError("numerics.n_paths must be at least 2")
    if q.seed < 0:
        raise ConfigError("numerics.seed must be nonnegative")
    if not q.tol > 0:
        raise ConfigError("numerics.tol must be positive")
    if q.coupling is not None and q.coupling not in COUPLINGS:
        raise ConfigError(f"numerics.coupling must be one of {COUPLINGS} or null")
    if q.discount not in DISCOUNT_MODES:
        raise ConfigError(f"numerics.discount must be one of {DISCOUNT_MODES}")
    if q.u is not None:
        u = np.asarray(q.u)
        if u.shape != (n,) or np.any(u <= 0):
            raise ConfigError(f"numerics.u must hold {n} positive entries")


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    return from_dict(data)


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads(text)
