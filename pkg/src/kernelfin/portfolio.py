"""Mean-variance long/short portfolios with L1 transaction costs and a
sliding-window backtester.

Weights are fractions of current wealth.  Over one step a weight vector
``w`` turns wealth ``V`` into ``V (1 + <w, r>)`` where ``r`` are the simple
asset returns; the unallocated fraction ``1 - sum(w)`` sits in cash at zero
rate.  This is the holdings ratio ``<h, X^{k+1}> / <h, X^k>`` with the cash
account included in ``h``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .encoding import ExtrapolationWarning, LatentSpec, fit_conditional_sampler
from .kernels import KernelSpec
from .timeseries import TimeSeriesMatrix, returns_forward

STRATEGIES = ("index_equal_weight", "long_short", "long_short_conditioned")


class SolverError(RuntimeError):
    """The QP solver did not converge."""


def _psd_floor(Q: np.ndarray) -> np.ndarray:
    Q = 0.5 * (Q + Q.T)
    vals, vecs = np.linalg.eigh(Q)
    if vals.min() >= 0:
        return Q
    Q = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class PortfolioProblem:
    """``min 1/2 w'Qw - risk_appetite * w'mu + cost_coeff * |w - prev_weights|_1``.

    ``box`` bounds every ``|w_i|`` when set; ``sum_zero`` imposes
    ``sum w = 0``.
    """

    Q: np.ndarray
    expected_returns: np.ndarray
    risk_appetite: float = 1.0
    cost_coeff: float = 0.0
    prev_weights: np.ndarray | None = None
    sum_zero: bool = False
    box: float | None = None

    def __post_init__(self):
        mu = np.asarray(self.expected_returns, dtype=float).reshape(-1)
        d = mu.size
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (d, d):
            raise ValueError(f"Q has shape {Q.shape}, expected ({d}, {d})")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(mu))):
            raise ValueError("Q and expected returns must be finite")
        w0 = np.zeros(d) if self.prev_weights is None else np.asarray(self.prev_weights, float)
        if w0.shape != (d,):
            raise ValueError(f"prev_weights has shape {w0.shape}, expected ({d},)")
        if self.risk_appetite < 0 or self.cost_coeff < 0:
            raise ValueError("risk appetite and cost coefficient must be non-negative")
        if self.box is not None and not self.box > 0:
            raise ValueError("box bound must be positive")
        object.__setattr__(self, "Q", _psd_floor(Q))
        object.__setattr__(self, "expected_returns", mu)
        object.__setattr__(self, "prev_weights", w0)

    @property
    def dim(self) -> int:
        return self.expected_returns.size

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(
            0.5 * w @ self.Q @ w
            - self.risk_appetite * w @ self.expected_returns
            + self.cost_coeff * np.abs(w - self.prev_weights).sum()
        )

    def is_feasible(self, w, tol: float = 1e-8) -> bool:
        w = np.asarray(w, dtype=float)
        if self.sum_zero and abs(w.sum()) > tol:
            return False
        if self.box is not None and np.any(np.abs(w) > self.box + tol):
            return False
        return True

    def with_prev(self, prev_weights) -> "PortfolioProblem":
        return PortfolioProblem(self.Q, self.expected_returns, self.risk_appetite,
                                self.cost_coeff, prev_weights, self.sum_zero, self.box)


def project_feasible(w, sum_zero: bool, box: float | None) -> np.ndarray:
    """Euclidean projection onto ``{sum w = 0} ∩ {|w_i| <= box}``."""
    w = np.asarray(w, dtype=float)
    if not sum_zero:
        return w if box is None else np.clip(w, -box, box)
    if box is None:
        return w - w.mean()
    # sum(clip(w - t)) is monotone in t: bisect for the root
    lo, hi = w.min() - box, w.max() + box
    for _ in range(200):
        t = 0.5 * (lo + hi)
        if np.clip(w - t, -box, box).sum() > 0:
            lo = t
        else:
            hi = t
    out = np.clip(w - 0.5 * (lo + hi), -box, box)
    # spread the last rounding residue over the interior coordinates
    free = np.abs(out) < box
    if free.any():
        out[free] -= out.sum() / free.sum()
    return out


def markowitz_solve(problem: PortfolioProblem, *, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Solve the L1-cost mean-variance QP.

    The cost term is smoothed by splitting ``w = w0 + u_plus - u_minus``
    with ``u_plus, u_minus >= 0``; SLSQP solves the resulting QP.  The
    answer is projected back onto the constraint set and never scores
    worse than the zero portfolio or ``w0`` when those are feasible.
    """
    d = problem.dim
    Q, mu, w0 = problem.Q, problem.expected_returns, problem.prev_weights
    eps, beta = problem.risk_appetite, problem.cost_coeff

    def split(u):
        return w0 + u[:d] - u[d:]

    def fun(u):
        w = split(u)
        return 0.5 * w @ Q @ w - eps * w @ mu + beta * u.sum()

    def jac(u):
        g = Q @ split(u) - eps * mu
        return np.r_[g, -g] + beta

    cons = []
    if problem.sum_zero:
        cons.append({"type": "eq", "fun": lambda u: split(u).sum(),
                     "jac": lambda u: np.r_[np.ones(d), -np.ones(d)]})
    if problem.box is not None:
        b = problem.box
        J = np.hstack([np.eye(d), -np.eye(d)])
        cons.append({"type": "ineq", "fun": lambda u: b - split(u), "jac": lambda u: -J})
        cons.append({"type": "ineq", "fun": lambda u: b + split(u), "jac": lambda u: J})
    if problem.box is None and not problem.sum_zero and np.linalg.eigvalsh(Q).min() <= 0:
        if eps and np.any(mu):
            raise SolverError("unconstrained problem with singular Q may be unbounded; set a box")
    u0 = np.zeros(2 * d)
    res = minimize(fun, u0, jac=jac, method="SLSQP", bounds=[(0.0, None)] * (2 * d),
                   constraints=cons, options={"maxiter": 500, "ftol": tol})
    w = project_feasible(split(res.x), problem.sum_zero, problem.box)
    candidates = [w, np.zeros(d)]
    if problem.is_feasible(w0):
        candidates.append(w0.copy())
    candidates = [c for c in candidates if problem.is_feasible(c)]
    if not candidates:
        raise SolverError(f"no feasible solution found: {res.message}")
    values = [problem.objective(c) for c in candidates]
    best = int(np.argmin(values))
    if best == 0 and not res.success:
        raise SolverError(f"QP solver failed: {res.message}")
    return candidates[best], values[best]


def estimate_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance (symmetrized, PSD-floored)."""
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = S.mean(axis=0)
    C = S - mean
    Q = C.T @ C / (S.shape[0] - 1)
    return mean, _psd_floor(Q)


# ---------------------------------------------------------------- indicators


def moving_average_indicators(returns: np.ndarray, windows=(5, 20)) -> np.ndarray:
    """Trailing means of each asset's returns plus differences of
    consecutive windows.

    ``returns`` is ``T_r x D`` with row ``j`` the return from price ``j``
    to ``j + 1``.  Row ``k`` of the output (``k = 0..T_r``) uses returns
    strictly before price index ``k``; rows without enough history are NaN.
    """
    R = np.asarray(returns, dtype=float)
    windows = sorted(int(w) for w in windows)
    if not windows or windows[0] < 1:
        raise ValueError("moving-average windows must be positive")
    n, _ = R.shape
    csum = np.vstack([np.zeros((1, R.shape[1])), np.cumsum(R, axis=0)])
    blocks = []
    for w in windows:
        ma = np.full((n + 1, R.shape[1]), np.nan)
        if w <= n:
            ma[w:] = (csum[w:] - csum[:-w]) / w
        blocks.append(ma)
    diffs = [blocks[i] - blocks[i + 1] for i in range(len(blocks) - 1)]
    return np.hstack(blocks + diffs)


def capm_indicator(returns: np.ndarray, weights, risk_free: float = 0.0) -> np.ndarray:
    """``b_j = r_f + beta (R_p^j - r_f)`` for every row ``j`` of ``returns``.

    ``R_p = returns @ weights`` is the portfolio return (equal weights when
    ``weights`` is all zero) and ``beta`` regresses each asset on it.
    """
    R = np.asarray(returns, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not np.any(np.abs(w) > 1e-12):
        w = np.full(R.shape[1], 1.0 / R.shape[1])
    Rp = R @ w
    dev = Rp - Rp.mean()
    var = dev @ dev
    beta = (R - R.mean(axis=0)).T @ dev / var if var > 0 else np.zeros(R.shape[1])
    return risk_free + np.outer(Rp - risk_free, beta)


def conditioned_return_samples(
    spec: KernelSpec,
    indicators,
    returns,
    indicator_now,
    n: int,
    latent: LatentSpec | None = None,
) -> np.ndarray:
    """``n`` draws of the return vector given ``indicator = indicator_now``,
    learned from the joint window sample ``(indicators, returns)``."""
    E = np.asarray(indicators, dtype=float)
    R = np.asarray(returns, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if n == 0:
        return np.zeros((0, R.shape[1]))
    if latent is None:
        latent = LatentSpec("uniform_cube", E.shape[1] + R.shape[1], 0)
    sampler = fit_conditional_sampler(spec, E, R, latent)
    return sampler.sample(np.asarray(indicator_now, dtype=float).ravel(), n)


# ------------------------------------------------------------------ backtest


@dataclass(frozen=True)
class ConditioningSpec:
    """How the conditioned strategy builds its indicator.

    ``kind`` is ``moving_average`` (trailing return means and their
    differences), ``capm`` or ``user`` (``columns``: one row per price
    time, value known at that time).  ``lag=1`` pairs each return with the
    indicator known when the position was opened; ``lag=0`` uses the
    indicator at the end of the return period (look-ahead).
    """

    kind: str = "moving_average"
    windows: tuple[int, ...] = (5, 20)
    risk_free: float = 0.0
    columns: np.ndarray | None = None
    lag: int = 1
    n_samples: int = 500
    seed: int = 0
    spec: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if self.kind not in ("moving_average", "capm", "user"):
            raise ValueError(f"unknown conditioning kind {self.kind!r}")
        if self.lag not in (0, 1):
            raise ValueError("lag must be 0 (same time) or 1 (lagged)")
        if self.kind == "user" and self.columns is None:
            raise ValueError("user conditioning needs indicator columns")
        if self.n_samples < 2:
            raise ValueError("need at least two conditional samples")


@dataclass(frozen=True)
class BacktestConfig:
    window: int
    strategy: str = "long_short"
    conditioning: ConditioningSpec | None = None

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be at least 2")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "long_short_conditioned" and self.conditioning is None:
            object.__setattr__(self, "conditioning", ConditioningSpec())


@dataclass
class BacktestResult:
    strategy: str
    timestamps: np.ndarray  # price times t^W .. t^{T-1}
    performance: np.ndarray  # wealth, starting at 1
    weights: np.ndarray  # decision k held over return k; (T-1-W) x D
    turnover: np.ndarray  # |w^k - w^{k-1}|_1 per decision
    degenerate: np.ndarray  # steps carried flat
    lag: int | None = None
    extrapolated: int = 0

    @property
    def total_turnover(self) -> float:
        return float(self.turnover.sum())

    def summary(self) -> dict:
        perf = self.performance
        steps = perf[1:] / perf[:-1] - 1.0 if perf.size > 1 else np.zeros(0)
        peak = np.maximum.accumulate(perf)
        return {
            "strategy": self.strategy,
            "terminal_value": float(perf[-1]),
            "max_drawdown": float(np.max(1.0 - perf / peak)),
            "volatility": float(np.std(steps, ddof=1)) if steps.size > 1 else 0.0,
            "total_turnover": self.total_turnover,
            "degenerate_steps": int(self.degenerate.sum()),
            "conditioning_lag": self.lag,
        }


def _indicator_series(cond: ConditioningSpec, R: np.ndarray, n_prices: int) -> np.ndarray | None:
    if cond.kind == "moving_average":
        return moving_average_indicators(R, cond.windows)
    if cond.kind == "user":
        U = np.asarray(cond.columns, dtype=float)
        U = U[:, None] if U.ndim == 1 else U
        if U.shape[0] != n_prices:
            raise ValueError(f"indicator has {U.shape[0]} rows for {n_prices} price times")
        return U
    return None


def performance_from_weights(weights, returns) -> np.ndarray:
    """Wealth path ``prod (1 + <w^k, r^k>)`` starting at 1."""
    W = np.asarray(weights, dtype=float)
    R = np.asarray(returns, dtype=float)
    return np.r_[1.0, np.cumprod(1.0 + np.einsum("kd,kd->k", W, R))]


def backtest(X: TimeSeriesMatrix, config: BacktestConfig,
             template: PortfolioProblem | None = None) -> BacktestResult:
    """Slide a window of ``W`` returns over ``X`` and rebalance every step.

    At price index ``k = W .. T-2`` the strategy sees returns ``k-W .. k-1``,
    picks weights held over return ``k`` and starts from the previous
    weights (zero at the first step).  Steps whose starting wealth is not
    positive are flagged and carried flat.
    """
    if not isinstance(X, TimeSeriesMatrix):
        X = TimeSeriesMatrix(X)
    T, D = X.length, X.dim
    W = config.window
    if not T > W + 1:
        raise ValueError(f"need more than window + 1 = {W + 1} observations, got {T}")
    R = returns_forward(X).values.T  # (T-1) x D
    if template is None:
        template = PortfolioProblem(np.eye(D), np.zeros(D), 1.0, 0.0, None, True, 1.0)
    if template.dim != D:
        raise ValueError(f"problem template has {template.dim} assets, data has {D}")
    cond = config.conditioning if config.strategy == "long_short_conditioned" else None
    eta_all = _indicator_series(cond, R, T) if cond is not None else None

    steps = T - 1 - W
    weights = np.zeros((steps, D))
    degenerate = np.zeros(steps, dtype=bool)
    perf = np.ones(steps + 1)
    prev = np.zeros(D)
    extrapolated = 0
    for s, k in enumerate(range(W, T - 1)):
        window = R[k - W:k]
        if config.strategy == "index_equal_weight":
            w = np.full(D, 1.0 / D)
        else:
            if cond is None:
                mu, Q = estimate_moments(window)
            else:
                mu, Q, hit = _conditioned_moments(cond, eta_all, R, k, W, prev)
                extrapolated += hit
            w, _ = markowitz_solve(PortfolioProblem(
                Q, mu, template.risk_appetite, template.cost_coeff, prev,
                template.sum_zero, template.box,
            ))
        weights[s] = w
        if perf[s] <= 0:
            degenerate[s] = True
            perf[s + 1] = perf[s]
        else:
            perf[s + 1] = perf[s] * (1.0 + w @ R[k])
        prev = w
    turnover = np.abs(np.diff(np.vstack([np.zeros(D), weights]), axis=0)).sum(axis=1)
    return BacktestResult(
        config.strategy, X.timestamps[W:], perf, weights, turnover, degenerate,
        cond.lag if cond is not None else None, extrapolated,
    )


def _conditioned_moments(cond, eta_all, R, k, W, prev):
    """Moments of window returns conditioned on the current indicator."""
    rows = np.arange(k - W, k)  # returns in the window
    if cond.kind == "capm":
        eta_rows = capm_indicator(R[k - W:k + 1], prev, cond.risk_free)
        # row j of eta_rows belongs to return k - W + j
        if cond.lag == 1:
            E, Y, now = eta_rows[:W - 1], R[rows[1:]], eta_rows[W - 1]
        else:
            # look-ahead: pair each return with its own indicator
            E, Y, now = eta_rows[:W], R[rows], eta_rows[W]
    else:
        # indicator row i is known at price time i; return j runs j -> j + 1
        shift = 1 - cond.lag
        E, Y = eta_all[rows + shift], R[rows]
        now = eta_all[k + shift]
    keep = np.all(np.isfinite(E), axis=1)
    E, Y = E[keep], Y[keep]
    if E.shape[0] < 4 or not np.all(np.isfinite(now)):
        mu, Q = estimate_moments(R[rows])
        return mu, Q, 0
    latent = LatentSpec("uniform_cube", E.shape[1] + Y.shape[1], cond.seed + k)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ExtrapolationWarning)
        draws = conditioned_return_samples(cond.spec, E, Y, now, cond.n_samples, latent)
    hit = int(any(issubclass(c.category, ExtrapolationWarning) for c in caught))
    mu, Q = estimate_moments(draws)
    return mu, Q, hit
