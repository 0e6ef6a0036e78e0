"""Validated run configuration for the command-line workflows.

Every block rejects unknown keys.  A config file is JSON with one optional
block per command, e.g. ``{"seed": 3, "backtest": {"window": 60}}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .kernels import FAMILIES, KernelSpec


class ConfigError(ValueError):
    """The run configuration is invalid."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelBlock(_Block):
    family: str = "gaussian"
    bandwidth: Optional[Union[float, list[float]]] = None
    regularization: Optional[float] = Field(default=None, ge=0)

    @field_validator("family")
    @classmethod
    def _known_family(cls, v):
        if v not in FAMILIES:
            raise ValueError(f"unknown kernel family {v!r}; expected one of {FAMILIES}")
        return v

    def build(self) -> KernelSpec:
        bw = tuple(self.bandwidth) if isinstance(self.bandwidth, list) else self.bandwidth
        return KernelSpec(self.family, bw, self.regularization)


class OptionBlock(_Block):
    """Basket call; ``strike`` defaults to the basket value at the spot."""

    weights: Optional[list[float]] = None
    strike: Optional[float] = Field(default=None, gt=0)
    maturity: float = Field(default=1.0, gt=0)
    volatility: float = Field(default=0.2, gt=0)
    rate: float = 0.0


class ScenarioBlock(_Block):
    spot: list[float] = Field(default_factory=lambda: [100.0, 100.0, 100.0], min_length=1)
    n_train: int = Field(default=500, ge=1)
    n_test: int = Field(default=500, ge=0)
    horizon_days: int = Field(default=10, ge=1)
    annual_vol: float = Field(default=0.2, gt=0)
    correlation: float = Field(default=0.3, ge=-1, le=1)
    random_horizon: bool = True
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None


class PriceExtrapolateBlock(_Block):
    kernel: KernelBlock = Field(default_factory=KernelBlock)
    option: OptionBlock = Field(default_factory=OptionBlock)
    scenarios: ScenarioBlock = Field(default_factory=ScenarioBlock)
    scale: Optional[float] = Field(default=None, gt=0)


class ReverseStressBlock(_Block):
    kernel: KernelBlock = Field(default_factory=KernelBlock)
    option: OptionBlock = Field(default_factory=OptionBlock)
    scenarios: ScenarioBlock = Field(
        default_factory=lambda: ScenarioBlock(spot=[100.0], n_train=500, random_horizon=False)
    )
    strategy: Literal["none", "ot_mmd", "sp_smooth"] = "sp_smooth"
    sp_budget: int = Field(default=1000, ge=0)
    sp_fidelity: float = Field(default=1e4, ge=0)
    n_samples: int = Field(default=500, ge=0)
    latent: Literal["uniform_cube", "standard_gaussian", "identity_passthrough"] = "uniform_cube"
    scale: Optional[float] = Field(default=None, gt=0)
    bins: int = Field(default=40, ge=1)


class GarchBlock(_Block):
    p: int = Field(default=1, ge=1)
    q: int = Field(default=1, ge=0)
    pre: Literal["returns", "differences", "none"] = "returns"
    params: Optional[list[dict]] = None


class SyntheticSeriesBlock(_Block):
    n_assets: int = Field(default=2, ge=1)
    length: int = Field(default=500, ge=3)
    start: str = "2020-01-01"
    spot: float = Field(default=100.0, gt=0)


class GenerateBlock(_Block):
    kernel: KernelBlock = Field(default_factory=KernelBlock)
    input_csv: Optional[str] = None
    synthetic: SyntheticSeriesBlock = Field(default_factory=SyntheticSeriesBlock)
    garch: GarchBlock = Field(default_factory=GarchBlock)
    map: Literal["garch", "returns", "random_walk"] = "garch"
    latent: Literal["uniform_cube", "standard_gaussian", "identity_passthrough"] = "uniform_cube"
    n_paths: int = Field(default=10, ge=0)
    horizon: Optional[int] = Field(default=50, ge=1)
    anchor: Literal["end", "start"] = "end"
    layout: Literal["per_path", "long"] = "per_path"


class ConditioningBlock(_Block):
    kind: Literal["moving_average", "capm", "user"] = "moving_average"
    windows: list[int] = Field(default_factory=lambda: [5, 20], min_length=1)
    risk_free: float = 0.0
    indicator_csv: Optional[str] = None
    lag: Literal[0, 1] = 1
    n_samples: int = Field(default=500, ge=2)


class BacktestBlock(_Block):
    kernel: KernelBlock = Field(default_factory=KernelBlock)
    input_csv: Optional[str] = None
    synthetic: SyntheticSeriesBlock = Field(
        default_factory=lambda: SyntheticSeriesBlock(n_assets=3, length=250)
    )
    window: int = Field(default=40, ge=2)
    strategies: list[Literal["index_equal_weight", "long_short", "long_short_conditioned"]] = Field(
        default_factory=lambda: ["index_equal_weight", "long_short", "long_short_conditioned"],
        min_length=1,
    )
    risk_appetite: float = Field(default=1.0, ge=0)
    cost_coeff: float = Field(default=1e-4, ge=0)
    box: Optional[float] = Field(default=1.0, gt=0)
    sum_zero: bool = True
    conditioning: ConditioningBlock = Field(default_factory=ConditioningBlock)


class RunConfig(_Block):
    seed: int = 0
    out: Optional[str] = None
    price_extrapolate: PriceExtrapolateBlock = Field(default_factory=PriceExtrapolateBlock)
    reverse_stress: ReverseStressBlock = Field(default_factory=ReverseStressBlock)
    generate: GenerateBlock = Field(default_factory=GenerateBlock)
    backtest: BacktestBlock = Field(default_factory=BacktestBlock)

    @model_validator(mode="after")
    def _window_vs_length(self):
        b = self.backtest
        if b.input_csv is None and b.window + 1 >= b.synthetic.length:
            raise ValueError(
                f"backtest window {b.window} needs more than {b.window + 1} observations; "
                f"synthetic length is {b.synthetic.length}"
            )
        return self

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return RunConfig.from_json(text)
