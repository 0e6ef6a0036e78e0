"""Black-Scholes basket pricer, greeks, Delta-Gamma benchmark and kernel
stress-test extrapolation.

The basket is priced by applying the scalar Black-Scholes call formula to
``S = <w, x>``.  Times are year fractions measured from the pricing date.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from .kernels import KernelSpec, as_points, fit_interpolant

TRADING_DAYS = 252

Pricer = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BasketOption:
    weights: np.ndarray
    strike: float
    maturity: float
    volatility: float
    rate: float = 0.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite vector")
        object.__setattr__(self, "weights", w)
        if self.maturity <= 0:
            raise ValueError("maturity must be positive")
        if self.volatility <= 0:
            raise ValueError("volatility must be positive")

    @property
    def dim(self) -> int:
        return self.weights.size

    @classmethod
    def at_the_money(cls, spot, maturity=1.0, volatility=0.2, rate=0.0, weights=None):
        """Equal-weight basket struck at its current value ``<w, spot>``."""
        spot = np.atleast_1d(np.asarray(spot, dtype=float))
        w = np.full(spot.size, 1.0 / spot.size) if weights is None else np.asarray(weights, float)
        return cls(w, float(w @ spot), maturity, volatility, rate)

    def basket(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} asset values, got {x.shape[-1]}")
        return x @ self.weights

    def pricer(self) -> Pricer:
        """``(t, x) -> price`` callback, vectorized over rows of ``x``."""
        return lambda t, x: bs_price(self, t, x)


def payoff(option: BasketOption, x) -> np.ndarray | float:
    out = np.maximum(option.basket(x) - option.strike, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _d1d2(S, K, tau, sigma, r):
    sqrt_tau = np.sqrt(tau)
    d1 = (np.log(S / K) + (r + 0.5 * sigma**2) * tau) / (sigma * sqrt_tau)
    return d1, d1 - sigma * sqrt_tau


def _scalar_call(S, K, tau, sigma, r):
    S = np.asarray(S, dtype=float)
    tau = np.asarray(tau, dtype=float)
    live = tau > 0
    disc_k = K * np.exp(-r * np.where(live, tau, 0.0))
    intrinsic = np.maximum(S - disc_k, 0.0)
    tau_safe = np.where(live, tau, 1.0)
    with np.errstate(divide="ignore"):
        d1, d2 = _d1d2(np.maximum(S, 1e-300), K, tau_safe, sigma, r)
    value = S * norm.cdf(d1) - disc_k * norm.cdf(d2)
    value = np.where(S > 0, value, 0.0)
    return np.where(live, np.maximum(value, intrinsic), np.maximum(S - K, 0.0))


def bs_price(option: BasketOption, t, x):
    """Call value at time ``t``; for ``t >= maturity`` the payoff."""
    S = option.basket(x)
    tau = option.maturity - np.asarray(t, dtype=float)
    out = _scalar_call(S, option.strike, tau, option.volatility, option.rate)
    return float(out) if np.ndim(out) == 0 else out


def _scalar_derivatives(S, K, tau, sigma, r):
    """Price and its first/second partials in (tau, S) for the scalar call."""
    d1, d2 = _d1d2(S, K, tau, sigma, r)
    n1, n2 = norm.pdf(d1), norm.pdf(d2)
    sqrt_tau = np.sqrt(tau)
    disc = np.exp(-r * tau)
    # d1 = a / sqrt(tau) + b sqrt(tau); d2 shares a with b - sigma
    a = np.log(S / K) / sigma
    b1 = (r + 0.5 * sigma**2) / sigma
    b2 = b1 - sigma
    d1_tau = -0.5 * a * tau**-1.5 + 0.5 * b1 / sqrt_tau
    d2_tau = -0.5 * a * tau**-1.5 + 0.5 * b2 / sqrt_tau
    price = S * norm.cdf(d1) - K * disc * norm.cdf(d2)
    dS = norm.cdf(d1)
    dSS = n1 / (S * sigma * sqrt_tau)
    dtau = S * n1 * sigma / (2.0 * sqrt_tau) + r * K * disc * norm.cdf(d2)
    dStau = n1 * d1_tau
    dtautau = 0.5 * S * sigma * n1 * (-d1 * d1_tau / sqrt_tau - 0.5 * tau**-1.5) + r * K * disc * (
        -r * norm.cdf(d2) + n2 * d2_tau
    )
    return price, dS, dSS, dtau, dStau, dtautau


def _check_live(option: BasketOption, t):
    if np.any(option.maturity - np.asarray(t, dtype=float) <= 0):
        raise ValueError("greeks need t < maturity")


@dataclass(frozen=True)
class Greeks:
    delta: np.ndarray  # (..., D)
    theta: np.ndarray | float  # d price / d t
    gamma: np.ndarray  # (..., D, D)


def bs_greeks(option: BasketOption, t, x) -> Greeks:
    """Chain-rule greeks through the basket value ``S = <w, x>``."""
    _check_live(option, t)
    S = option.basket(x)
    tau = option.maturity - np.asarray(t, dtype=float)
    _, dS, dSS, dtau, _, _ = _scalar_derivatives(S, option.strike, tau, option.volatility, option.rate)
    w = option.weights
    delta = np.asarray(dS)[..., None] * w
    gamma = np.asarray(dSS)[..., None, None] * np.outer(w, w)
    theta = -dtau
    return Greeks(delta, float(theta) if np.ndim(theta) == 0 else theta, gamma)


def bs_hessian(option: BasketOption, t, x):
    """Price, gradient and Hessian in the joint variable ``(t, x_1..x_D)``."""
    _check_live(option, t)
    S = float(option.basket(x))
    tau = option.maturity - float(t)
    price, dS, dSS, dtau, dStau, dtautau = _scalar_derivatives(
        S, option.strike, tau, option.volatility, option.rate
    )
    w = option.weights
    grad = np.r_[-dtau, dS * w]
    H = np.empty((option.dim + 1, option.dim + 1))
    H[0, 0] = dtautau
    H[0, 1:] = H[1:, 0] = -dStau * w
    H[1:, 1:] = dSS * np.outer(w, w)
    return float(price), grad, H


def taylor_dg(option: BasketOption, base_t, base_x, query_t, query_z):
    """Second-order Taylor (Delta-Gamma-Theta) estimate around ``(base_t, base_x)``.

    ``query_t``/``query_z`` may be arrays of scenarios (rows of ``query_z``).
    """
    price, grad, H = bs_hessian(option, base_t, base_x)
    z = np.asarray(query_z, dtype=float)
    tq = np.broadcast_to(np.asarray(query_t, dtype=float), z.shape[:-1])
    step = np.concatenate([(tq - base_t)[..., None], z - np.asarray(base_x, dtype=float)], axis=-1)
    out = price + step @ grad + 0.5 * np.einsum("...i,ij,...j->...", step, H, step)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StressScenarioSet:
    """Scenario asset values with their (year-fraction) evaluation times."""

    scenarios: np.ndarray  # N x D
    horizon_days: int
    pricing_date: str = "2022-06-01"
    times: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.scenarios, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError("scenarios must be an N x D matrix")
        if X.size and (not np.all(np.isfinite(X)) or np.any(X <= 0)):
            raise ValueError("scenario asset values must be positive and finite")
        object.__setattr__(self, "scenarios", X)
        if self.times is None:
            times = np.full(X.shape[0], self.horizon_days / TRADING_DAYS)
        else:
            times = np.asarray(self.times, dtype=float).ravel()
            if times.size != X.shape[0]:
                raise ValueError("one time per scenario required")
        object.__setattr__(self, "times", times)

    @property
    def size(self) -> int:
        return self.scenarios.shape[0]

    @property
    def dim(self) -> int:
        return self.scenarios.shape[1]


def simulate_gbm_scenarios(
    spot,
    n: int,
    horizon_days: int = 10,
    annual_vol: float | np.ndarray = 0.2,
    correlation: float = 0.3,
    drift: float = 0.0,
    seed: int = 0,
    random_horizon: bool = True,
) -> StressScenarioSet:
    """Correlated GBM scenarios after ``h`` days, ``h ~ U(0, horizon_days]``.

    With ``random_horizon=False`` every scenario sits at the horizon.
    """
    spot = np.atleast_1d(np.asarray(spot, dtype=float))
    d = spot.size
    rng = np.random.default_rng(seed)
    vol = np.broadcast_to(np.asarray(annual_vol, dtype=float), (d,))
    corr = np.full((d, d), correlation) + (1.0 - correlation) * np.eye(d)
    L = np.linalg.cholesky(corr)
    if random_horizon:
        days = rng.uniform(0.0, horizon_days, size=n)
    else:
        days = np.full(n, float(horizon_days))
    tau = days / TRADING_DAYS
    g = rng.standard_normal((n, d)) @ L.T
    log_ret = (drift - 0.5 * vol**2) * tau[:, None] + vol * np.sqrt(tau)[:, None] * g
    return StressScenarioSet(spot * np.exp(log_ret), horizon_days, times=tau)


@dataclass
class StressResult:
    prices: np.ndarray
    deltas: np.ndarray
    theta: np.ndarray
    reference: np.ndarray | None = None
    errors_bps: np.ndarray | None = None
    uses_time: bool = True
    extras: dict = field(default_factory=dict)


def _stress_inputs(scen: StressScenarioSet, with_time: bool) -> np.ndarray:
    if with_time:
        return np.column_stack([scen.times, scen.scenarios])
    return scen.scenarios


def stress_extrapolate(
    spec: KernelSpec,
    train: StressScenarioSet,
    pricer: Pricer,
    test: StressScenarioSet,
    *,
    reference: Pricer | None = None,
    scale: float | None = None,
) -> StressResult:
    """Learn ``P(t, x)`` on the training scenarios and extrapolate to ``test``.

    Time enters the kernel inputs whenever the training times vary; the
    time component of the kernel gradient is then the theta estimate,
    otherwise theta is NaN.  With ``reference`` (and ``scale``, e.g. the
    strike) the errors against it are returned in basis points.
    """
    if train.dim != test.dim:
        raise ValueError(f"train has {train.dim} assets but test has {test.dim}")
    with_time = bool(np.ptp(train.times) > 0)
    y = np.asarray(pricer(train.times, train.scenarios), dtype=float)
    if y.shape != (train.size,):
        raise ValueError("pricer must return one value per scenario")
    model = fit_interpolant(spec, _stress_inputs(train, with_time), y)
    if test.size == 0:
        empty = np.zeros(0)
        return StressResult(empty, np.zeros((0, test.dim)), empty, uses_time=with_time)
    Z = _stress_inputs(test, with_time)
    prices = model.predict(Z)[:, 0]
    grad = model.gradient(Z)[:, :, 0]
    if with_time:
        theta, deltas = grad[:, 0], grad[:, 1:]
    else:
        theta, deltas = np.full(test.size, np.nan), grad
    result = StressResult(prices, deltas, theta, uses_time=with_time)
    if reference is not None:
        ref = np.asarray(reference(test.times, test.scenarios), dtype=float)
        result.reference = ref
        result.errors_bps = (prices - ref) / (scale or 1.0) * 1e4
    return result


def large_move_mask(scenarios, spot, annual_vol, n_sigma: float = 2.0) -> np.ndarray:
    """Scenarios where some asset's log move exceeds ``n_sigma`` daily vols."""
    X = as_points(scenarios, "scenarios")
    spot = np.atleast_1d(np.asarray(spot, dtype=float))
    daily = np.broadcast_to(np.asarray(annual_vol, dtype=float), spot.shape) / np.sqrt(TRADING_DAYS)
    return np.any(np.abs(np.log(X / spot)) > n_sigma * daily, axis=1)
