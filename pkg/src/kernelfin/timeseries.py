"""Invertible noise maps for time series and the generative path simulator.

A noise map ``F`` sends a series ``X`` (assets x time) to latent noise and
back.  Three maps are provided: random walk increments, simple returns
and GARCH(p, q) standardization (optionally composed with one of the
first two).  ``generate_paths`` resamples whole cross-sectional noise
vectors with an OT generator and maps them back to prices.
"""

from __future__ import annotations

import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _backend
from .encoding import LatentSpec, fit_generator, generate
from .kernels import KernelSpec


class ShortSeriesWarning(UserWarning):
    """Series is short relative to the number of GARCH parameters."""


def _as_timestamps(ts, n: int) -> np.ndarray:
    if ts is None:
        return np.arange(n)
    ts = np.asarray(ts)
    if ts.dtype.kind in "UO":
        ts = ts.astype("datetime64[D]")
    if ts.shape != (n,):
        raise ValueError(f"expected {n} timestamps, got shape {ts.shape}")
    return ts


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """Values of ``D`` assets at ``T`` ordered timestamps (``D x T``)."""

    values: np.ndarray
    timestamps: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if V.ndim == 1:
            V = V[None, :]
        if V.ndim != 2 or V.shape[1] < 1:
            raise ValueError("values must be a D x T matrix with T >= 1")
        if not np.all(np.isfinite(V)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", V)
        ts = _as_timestamps(self.timestamps, V.shape[1])
        if ts.size > 1 and not np.all(ts[1:] > ts[:-1]):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        names = self.names
        if names is None:
            names = tuple(f"asset_{d}" for d in range(V.shape[0]))
        names = tuple(str(n) for n in names)
        if len(names) != V.shape[0]:
            raise ValueError(f"{len(names)} names for {V.shape[0]} assets")
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def with_values(self, values, timestamps=None) -> "TimeSeriesMatrix":
        return TimeSeriesMatrix(values, timestamps, self.names)


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, TimeSeriesMatrix) else TimeSeriesMatrix(X).values


def _need_two(V: np.ndarray):
    if V.shape[1] < 2:
        raise ValueError("need at least two observations")


def random_walk_forward(X) -> TimeSeriesMatrix:
    """Increments ``eps^k = X^{k+1} - X^k``."""
    V = _values(X)
    _need_two(V)
    ts = X.timestamps[1:] if isinstance(X, TimeSeriesMatrix) else None
    names = X.names if isinstance(X, TimeSeriesMatrix) else None
    return TimeSeriesMatrix(np.diff(V, axis=1), ts, names)


def random_walk_inverse(eps, x0) -> TimeSeriesMatrix:
    """Path ``X^0, X^0 + eps^1, ...`` of length ``T_eps + 1``."""
    E = np.atleast_2d(np.asarray(eps.values if isinstance(eps, TimeSeriesMatrix) else eps, float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != E.shape[0]:
        raise ValueError(f"x0 has {x0.size} entries for {E.shape[0]} assets")
    V = np.concatenate([x0[:, None], x0[:, None] + np.cumsum(E, axis=1)], axis=1)
    return TimeSeriesMatrix(V)


def returns_forward(X) -> TimeSeriesMatrix:
    """Simple returns ``X^{k+1} / X^k - 1``."""
    V = _values(X)
    _need_two(V)
    if np.any(V <= 0):
        raise ValueError("returns need strictly positive prices")
    ts = X.timestamps[1:] if isinstance(X, TimeSeriesMatrix) else None
    names = X.names if isinstance(X, TimeSeriesMatrix) else None
    return TimeSeriesMatrix(V[:, 1:] / V[:, :-1] - 1.0, ts, names)


def returns_inverse(eps, x0) -> TimeSeriesMatrix:
    """Path ``X^0, X^0 (1 + eps^1), ...`` of length ``T_eps + 1``."""
    E = np.atleast_2d(np.asarray(eps.values if isinstance(eps, TimeSeriesMatrix) else eps, float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != E.shape[0]:
        raise ValueError(f"x0 has {x0.size} entries for {E.shape[0]} assets")
    if np.any(x0 <= 0):
        raise ValueError("returns need a strictly positive starting price")
    growth = np.cumprod(1.0 + E, axis=1)
    return TimeSeriesMatrix(np.concatenate([x0[:, None], x0[:, None] * growth], axis=1))


# --------------------------------------------------------------------- GARCH


@dataclass(frozen=True)
class GarchParams:
    """``X^k = mu + sigma^k Z^k`` with
    ``(sigma^k)^2 = alpha0 + sum_i alpha_i (X^{k-i} - mu)^2 + sum_j beta_j (sigma^{k-j})^2``.

    ``alpha[0]`` multiplies the most recent lag.
    """

    mu: float
    alpha0: float
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    allow_nonstationary: bool = False

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(self.alpha))
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "alpha0", float(self.alpha0))
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if any(a < 0 for a in alpha) or any(b < 0 for b in beta):
            raise ValueError("alpha and beta coefficients must be non-negative")
        if not self.allow_nonstationary and self.persistence >= 1:
            raise ValueError(
                f"non-stationary parameters (sum alpha + sum beta = {self.persistence:.6g} >= 1); "
                "pass allow_nonstationary=True to override"
            )

    @property
    def p(self) -> int:
        return len(self.alpha)

    @property
    def q(self) -> int:
        return len(self.beta)

    @property
    def persistence(self) -> float:
        return float(sum(self.alpha) + sum(self.beta))

    @property
    def unconditional_variance(self) -> float:
        if self.persistence >= 1:
            raise ValueError("unconditional variance is undefined for non-stationary parameters")
        return self.alpha0 / (1.0 - self.persistence)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "alpha0": self.alpha0, "alpha": list(self.alpha), "beta": list(self.beta)}


@dataclass(frozen=True)
class GarchState:
    """Pre-sample lags, oldest first: ``p`` squared residuals and ``q`` variances."""

    resid2: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "resid2", np.asarray(self.resid2, dtype=float).reshape(-1))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float).reshape(-1))

    @classmethod
    def unconditional(cls, params: GarchParams) -> "GarchState":
        """Every lag at the unconditional variance, so the first variance is it too."""
        u = params.unconditional_variance
        return cls(np.full(params.p, u), np.full(params.q, u))

    def check(self, params: GarchParams):
        if self.resid2.size != params.p or self.sigma2.size != params.q:
            raise ValueError(
                f"warmup state has {self.resid2.size} residual and {self.sigma2.size} variance lags; "
                f"GARCH({params.p},{params.q}) needs {params.p} and {params.q}"
            )


def _series(x) -> np.ndarray:
    if isinstance(x, TimeSeriesMatrix):
        if x.dim != 1:
            raise ValueError("GARCH maps act on one asset at a time")
        return x.values[0]
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 1:
        raise ValueError("expected a single series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series must be finite")
    return x


def _state_or_default(params, state):
    state = GarchState.unconditional(params) if state is None else state
    state.check(params)
    return state


def garch_sigma(params: GarchParams, x, state: GarchState | None = None) -> np.ndarray:
    """Conditional volatility path ``sigma^k`` (same length as ``x``)."""
    x = _series(x)
    state = _state_or_default(params, state)
    s2 = _backend.garch_filter(
        np.ascontiguousarray(x - params.mu), params.alpha0,
        np.asarray(params.alpha), np.asarray(params.beta), state.resid2, state.sigma2,
    )
    return np.sqrt(np.asarray(s2))


def garch_forward(params: GarchParams, x, state: GarchState | None = None) -> np.ndarray:
    """Standardized residuals ``Z^k = (X^k - mu) / sigma^k``."""
    x = _series(x)
    return (x - params.mu) / garch_sigma(params, x, state)


def garch_inverse(params: GarchParams, z, state: GarchState) -> np.ndarray:
    """Rebuild ``X^k = mu + sigma^k Z^k`` from noise and the warmup lags."""
    if state is None:
        raise ValueError("garch_inverse needs a warmup state with the lagged values")
    state.check(params)
    z = _series(z)
    x, _ = _backend.garch_unfilter(
        np.ascontiguousarray(z), params.mu, params.alpha0,
        np.asarray(params.alpha), np.asarray(params.beta), state.resid2, state.sigma2,
    )
    return np.asarray(x)


def garch_terminal_state(params: GarchParams, x, state: GarchState | None = None) -> GarchState:
    """Lags after running the recursion over ``x``, for continuing the path."""
    x = _series(x)
    state = _state_or_default(params, state)
    s2 = garch_sigma(params, x, state) ** 2
    e2 = np.concatenate([state.resid2, (x - params.mu) ** 2])
    s2 = np.concatenate([state.sigma2, s2])
    return GarchState(e2[e2.size - params.p:], s2[s2.size - params.q:])


def garch_simulate(params: GarchParams, n: int, seed: int = 0, burn: int = 500) -> np.ndarray:
    """Gaussian GARCH sample of length ``n`` after ``burn`` discarded steps."""
    z = np.random.default_rng(seed).standard_normal(n + burn)
    return garch_inverse(params, z, GarchState.unconditional(params))[burn:]


@dataclass(frozen=True)
class GarchFit:
    params: GarchParams
    converged: bool
    nll: float
    message: str
    n_starts: int = 0


_STARTS = [(a, b) for a in (0.05, 0.1) for b in (0.7, 0.85, 0.9)]


def _gaussian_nll(theta, y, p, q):
    mu, a0 = theta[0], theta[1]
    alpha, beta = theta[2:2 + p], theta[2 + p:]
    pers = alpha.sum() + beta.sum()
    if a0 <= 0 or pers >= 1:
        return 1e10
    u = a0 / (1.0 - pers)
    s2 = np.asarray(_backend.garch_filter(y - mu, a0, alpha, beta, np.full(p, u), np.full(q, u)))
    if not np.all(s2 > 0):
        return 1e10
    return 0.5 * float(np.sum(np.log(s2) + (y - mu) ** 2 / s2) + y.size * np.log(2 * np.pi))


def garch_fit(x, p: int = 1, q: int = 1, *, max_iter: int = 200) -> GarchFit:
    """Gaussian quasi-maximum-likelihood GARCH(p, q) fit.

    The data are scaled to unit variance, SLSQP is run from a fixed grid of
    starting points with ``sum alpha + sum beta <= 1 - 1e-6`` and the best
    likelihood wins.  Non-convergence of every start is reported in the
    returned flag together with the best iterate.
    """
    if p < 1 or q < 0:
        raise ValueError("need p >= 1 and q >= 0")
    x = np.ascontiguousarray(_series(x), dtype=float)
    n_par = p + q + 2
    if x.size < 50 * n_par:
        warnings.warn(
            f"{x.size} observations for {n_par} parameters; estimates may be unreliable",
            ShortSeriesWarning,
            stacklevel=2,
        )
    scale = float(np.std(x))
    if not scale > 0:
        raise ValueError("cannot fit GARCH to a constant series")
    y = np.ascontiguousarray(x / scale)
    m = float(np.mean(y))
    bounds = [(-10.0, 10.0), (1e-8, 10.0)] + [(0.0, 1.0)] * (p + q)
    cons = [{"type": "ineq", "fun": lambda th: 1.0 - 1e-6 - th[2:].sum(),
             "jac": lambda th: np.r_[0.0, 0.0, -np.ones(p + q)]}]
    best = None
    for a1, b1 in _STARTS:
        b_tot = b1 if q else 0.0
        theta0 = np.r_[m, 1.0 - a1 - b_tot, np.full(p, a1 / p), np.full(q, b1 / q) if q else []]
        with warnings.catch_warnings():
            # SLSQP clips finite-difference steps at the bounds and says so
            warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
            res = minimize(
                _gaussian_nll, theta0, args=(y, p, q), method="SLSQP", bounds=bounds,
                constraints=cons, options={"maxiter": max_iter, "ftol": 1e-10},
            )
        if best is None or res.fun < best.fun:
            best = res
    th = best.x
    params = GarchParams(
        th[0] * scale, th[1] * scale**2, tuple(th[2:2 + p]), tuple(th[2 + p:]),
        allow_nonstationary=True,
    )
    if params.persistence < 1:
        params = replace(params, allow_nonstationary=False)
    nll = float(best.fun) + x.size * np.log(scale)
    return GarchFit(params, bool(best.success), nll, str(best.message), len(_STARTS))


# ---------------------------------------------------------------- noise maps


class NoiseMap(ABC):
    """Invertible map between a price matrix and per-step noise vectors.

    ``inverse`` returns the path of length ``H + lead`` where ``lead`` is 1
    for increment maps (the anchor value is prepended) and 0 otherwise.
    """

    lead: int = 1

    def fit(self, X: TimeSeriesMatrix) -> "NoiseMap":
        return self

    @abstractmethod
    def forward(self, X: TimeSeriesMatrix) -> TimeSeriesMatrix: ...

    @abstractmethod
    def state(self, X: TimeSeriesMatrix, anchor: str = "end"): ...

    @abstractmethod
    def inverse(self, eps: np.ndarray, state) -> np.ndarray: ...


def _anchor_index(anchor: str) -> int:
    if anchor not in ("start", "end"):
        raise ValueError(f"anchor must be 'start' or 'end', got {anchor!r}")
    return 0 if anchor == "start" else -1


class RandomWalkMap(NoiseMap):
    def forward(self, X):
        return random_walk_forward(X)

    def state(self, X, anchor="end"):
        return _values(X)[:, _anchor_index(anchor)].copy()

    def inverse(self, eps, state):
        return random_walk_inverse(eps, state).values


class ReturnsMap(NoiseMap):
    def forward(self, X):
        return returns_forward(X)

    def state(self, X, anchor="end"):
        return _values(X)[:, _anchor_index(anchor)].copy()

    def inverse(self, eps, state):
        return returns_inverse(eps, state).values


_PRE = {
    "returns": (returns_forward, returns_inverse),
    "differences": (random_walk_forward, random_walk_inverse),
}


@dataclass
class GarchMap(NoiseMap):
    """Per-asset GARCH standardization, after an optional returns or
    differences step (``pre='none'`` applies GARCH to the levels)."""

    p: int = 1
    q: int = 1
    pre: str = "returns"
    params: list[GarchParams] | None = None
    fits: list[GarchFit] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.pre not in ("returns", "differences", "none"):
            raise ValueError(f"unknown pre-transform {self.pre!r}")
        self.lead = 0 if self.pre == "none" else 1

    def _pre(self, X) -> np.ndarray:
        if self.pre == "none":
            return _values(X)
        return _PRE[self.pre][0](X).values

    def fit(self, X):
        R = self._pre(X)
        self.fits = [garch_fit(r, self.p, self.q) for r in R]
        self.params = [f.params for f in self.fits]
        return self

    def _checked_params(self, dim: int) -> list[GarchParams]:
        if self.params is None:
            raise ValueError("GarchMap has no parameters; call fit or pass params")
        if len(self.params) != dim:
            raise ValueError(f"{len(self.params)} GARCH parameter sets for {dim} assets")
        return self.params

    def forward(self, X):
        R = self._pre(X)
        params = self._checked_params(R.shape[0])
        Z = np.vstack([garch_forward(pr, r) for pr, r in zip(params, R)])
        if isinstance(X, TimeSeriesMatrix):
            return TimeSeriesMatrix(Z, X.timestamps[X.length - Z.shape[1]:], X.names)
        return TimeSeriesMatrix(Z)

    def state(self, X, anchor="end"):
        idx = _anchor_index(anchor)
        V = _values(X)
        R = self._pre(X)
        params = self._checked_params(V.shape[0])
        if idx == 0:
            lags = [GarchState.unconditional(pr) for pr in params]
        else:
            lags = [garch_terminal_state(pr, r) for pr, r in zip(params, R)]
        return V[:, idx].copy(), lags

    def inverse(self, eps, state):
        x0, lags = state
        E = np.atleast_2d(np.asarray(eps, dtype=float))
        params = self._checked_params(E.shape[0])
        R = np.vstack([garch_inverse(pr, z, s) for pr, z, s in zip(params, E, lags)])
        if self.pre == "none":
            return R
        return _PRE[self.pre][1](R, x0).values


# ----------------------------------------------------------------- generator


def _continue_timestamps(ts: np.ndarray, n: int) -> np.ndarray:
    if np.issubdtype(ts.dtype, np.datetime64):
        day = ts[-1].astype("datetime64[D]")
        return np.busday_offset(day, np.arange(1, n + 1), roll="forward")
    step = ts[-1] - ts[-2] if ts.size > 1 else 1
    return ts[-1] + step * np.arange(1, n + 1)


def generate_paths(
    noise_map: NoiseMap,
    X_hist: TimeSeriesMatrix,
    spec: KernelSpec,
    latent: LatentSpec,
    n_paths: int,
    horizon: int,
    *,
    anchor: str = "end",
) -> list[TimeSeriesMatrix]:
    """Simulate paths by resampling cross-sectional noise vectors.

    The noise ``eps = F(X_hist)`` is learned by an OT generator on its
    ``D``-dimensional time slices; each path draws ``horizon`` new vectors
    (path ``i`` uses a seed spawned from ``latent.seed``) and maps them back
    from the anchor state.  With ``anchor='end'`` paths continue from the
    last observation; with ``anchor='start'`` they resimulate the history
    window, so an ``identity_passthrough`` latent reproduces ``X_hist``.
    """
    if not isinstance(X_hist, TimeSeriesMatrix):
        X_hist = TimeSeriesMatrix(X_hist)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if n_paths < 0:
        raise ValueError("n_paths must be non-negative")
    idx = _anchor_index(anchor)
    eps = noise_map.forward(X_hist).values
    generator = fit_generator(spec, eps.T, latent)
    state = noise_map.state(X_hist, anchor)
    lead = noise_map.lead
    if idx == 0:
        need = horizon + lead
        if need > X_hist.length:
            ts = np.concatenate([X_hist.timestamps,
                                 _continue_timestamps(X_hist.timestamps, need - X_hist.length)])
        else:
            ts = X_hist.timestamps[:need]
    else:
        ts = np.concatenate([X_hist.timestamps[-1:], _continue_timestamps(X_hist.timestamps, horizon)])
    children = np.random.SeedSequence(latent.seed).spawn(n_paths)
    paths = []
    for child in children:
        lat = replace(latent, seed=int(child.generate_state(1)[0]))
        draws = generate(generator, lat, horizon)  # horizon x D
        values = noise_map.inverse(draws.T, state)
        if idx == -1 and lead == 0:
            values = np.concatenate([X_hist.values[:, -1:], values], axis=1)
        paths.append(TimeSeriesMatrix(values, ts[: values.shape[1]], X_hist.names))
    return paths
