"""Reverse stress testing: invert a PnL map with a permuted kernel decoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .encoding import Encoder, LatentSpec, fit_encoder, generate
from .kernels import KernelSpec, as_points

ScenarioPricer = Callable[[np.ndarray], np.ndarray]


class PricerError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"pricer failed on scenario {index}: {cause}")
        self.index = index


@dataclass(frozen=True)
class ReverseStressModel:
    decoder: Encoder
    pricer: ScenarioPricer | None
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("bps normalization scale must be positive")

    @property
    def pnl_dim(self) -> int:
        return self.decoder.input_dim

    @property
    def scenario_dim(self) -> int:
        return self.decoder.output_dim


def fit_reverse(
    spec: KernelSpec,
    X,
    P,
    strategy: str = "sp_smooth",
    *,
    pricer: ScenarioPricer | None = None,
    scale: float = 1.0,
    sp_budget: int = 1000,
    sp_restarts: int | None = None,
    sp_fidelity: float = 1e4,
    seed: int = 0,
) -> ReverseStressModel:
    """Fit the decoder ``p -> x`` from matched scenarios ``X`` and PnLs ``P``."""
    X = as_points(X, "X")
    P = as_points(P, "P")
    decoder = fit_encoder(
        spec, P, X, strategy, sp_budget=sp_budget, sp_restarts=sp_restarts,
        sp_fidelity=sp_fidelity, seed=seed,
    )
    return ReverseStressModel(decoder, pricer, scale)


def invert(model: ReverseStressModel, p) -> np.ndarray:
    """Scenario estimate(s) for PnL target(s) ``p``."""
    p_arr = np.asarray(p, dtype=float)
    single = p_arr.ndim <= 1 and (p_arr.ndim == 0 or p_arr.size == model.pnl_dim)
    Q = p_arr.reshape(1, -1) if single else as_points(p_arr, "p")
    if Q.shape[1] != model.pnl_dim:
        raise ValueError(f"PnL has dimension {Q.shape[1]}, expected {model.pnl_dim}")
    out = model.decoder(Q)
    return out[0] if single else out


@dataclass
class BenchmarkSummary:
    errors_bps: np.ndarray  # signed, in sample order
    targets: np.ndarray
    scenarios: np.ndarray
    repriced: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return self.errors_bps.size

    @property
    def median_abs(self) -> float:
        return float(np.median(np.abs(self.errors_bps))) if self.n else float("nan")

    @property
    def p95_abs(self) -> float:
        return float(np.percentile(np.abs(self.errors_bps), 95)) if self.n else float("nan")

    @property
    def median(self) -> float:
        return float(np.median(self.errors_bps)) if self.n else float("nan")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "median_bps": self.median,
            "median_abs_bps": self.median_abs,
            "p95_abs_bps": self.p95_abs,
            "mean_bps": float(np.mean(self.errors_bps)) if self.n else float("nan"),
        }


def _price_all(pricer: ScenarioPricer, scenarios: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(pricer(scenarios), dtype=float)
        if out.shape[0] == scenarios.shape[0]:
            return out.reshape(scenarios.shape[0], -1)
    except Exception:
        pass
    # retry one scenario at a time to locate the failure
    rows = []
    for i, x in enumerate(scenarios):
        try:
            rows.append(np.atleast_1d(np.asarray(pricer(x[None, :]), dtype=float)).ravel())
        except Exception as exc:
            raise PricerError(i, exc) from exc
    return np.vstack(rows)


def rst_benchmark(
    model: ReverseStressModel,
    generator: Encoder,
    n: int,
    seed: int = 0,
    *,
    latent: LatentSpec | None = None,
    bins: int = 40,
) -> BenchmarkSummary:
    """Round-trip error ``(P(invert(p)) - p) / scale * 1e4`` on generated PnLs."""
    if model.pricer is None:
        raise ValueError("benchmark needs the model's pricer")
    if latent is None:
        latent = LatentSpec("uniform_cube", generator.input_dim, seed)
    d = model.pnl_dim
    if n == 0:
        z = np.zeros(0)
        return BenchmarkSummary(z, np.zeros((0, d)), np.zeros((0, model.scenario_dim)),
                                np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=int))
    targets = generate(generator, latent, n)
    scenarios = invert(model, targets)
    repriced = _price_all(model.pricer, scenarios)
    err = (repriced - targets) / model.scale * 1e4
    err = err[:, 0] if d == 1 else np.linalg.norm(err, axis=1)
    counts, edges = np.histogram(err, bins=bins)
    return BenchmarkSummary(err, targets, scenarios, repriced, edges, counts)
