"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line, listed again in the terminal
summary under "acceptance criteria".
"""

import itertools
import time

import numpy as np

from kernelfin.encoding import LatentSpec, conditional_sampler, fit_generator
from kernelfin.kernels import KernelSpec, fit_interpolant
from kernelfin.portfolio import (
    BacktestConfig,
    ConditioningSpec,
    PortfolioProblem,
    backtest,
    markowitz_solve,
    performance_from_weights,
)
from kernelfin.pricing import BasketOption, bs_price, large_move_mask, simulate_gbm_scenarios, stress_extrapolate, taylor_dg
from kernelfin.reverse_stress import fit_reverse, rst_benchmark
from kernelfin.timeseries import (
    GarchParams,
    GarchState,
    TimeSeriesMatrix,
    garch_fit,
    garch_forward,
    garch_inverse,
    garch_simulate,
    random_walk_forward,
    random_walk_inverse,
    returns_forward,
    returns_inverse,
)
from kernelfin.transport import lap_solve, pairing_form, sp_solve


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _smooth_targets(rng, X, m=2):
    W = rng.normal(size=(X.shape[1], m))
    b = rng.uniform(0, 2 * np.pi, size=m)
    return np.sin(X @ W + b) + 0.5 * np.cos(0.7 * X @ W[:, ::-1])


def test_c01_training_reproducibility(acceptance):
    rng = np.random.default_rng(101)
    worst = 0.0
    with Timer() as t:
        for _ in range(20):
            n, d = int(rng.integers(20, 201)), int(rng.integers(1, 6))
            X = rng.uniform(-1, 1, size=(n, d))
            V = _smooth_targets(rng, X)
            model = fit_interpolant(KernelSpec(regularization=1e-12), X, V)
            worst = max(worst, float(np.max(np.abs(model.predict(X) - V)) / np.max(np.abs(V))))
    ok = worst <= 1e-6 and t.seconds < 10
    assert acceptance(1, "training-set reproducibility", ok,
                      f"max rel err {worst:.2e} (<= 1e-6), {t.seconds:.1f}s (< 10s)")


def test_c02_gradient_operator(acceptance):
    rng = np.random.default_rng(202)
    worst = 0.0
    with Timer() as t:
        for i in range(100):
            d = 1 + i % 4
            X = rng.uniform(-1, 1, size=(60, d))
            model = fit_interpolant(KernelSpec(("gaussian", "inverse_multiquadric", "matern_3_2")[i % 3]),
                                    X, _smooth_targets(rng, X, 1))
            z = rng.uniform(-0.8, 0.8, size=(1, d))
            g = model.gradient(z)[0, :, 0]
            h = 1e-5
            fd = np.array([(model.predict(z + h * e)[0, 0] - model.predict(z - h * e)[0, 0]) / (2 * h)
                           for e in np.eye(d)])
            worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
    ok = worst <= 1e-4 and t.seconds < 10
    assert acceptance(2, "gradient vs central differences", ok,
                      f"max rel err {worst:.2e} (<= 1e-4), {t.seconds:.1f}s (< 10s)")


def test_c03_basis_point_extrapolation(acceptance):
    spot = np.full(3, 100.0)
    option = BasketOption.at_the_money(spot)
    with Timer() as t:
        train = simulate_gbm_scenarios(spot, 500, 10, 0.2, 0.3, seed=0)
        test = simulate_gbm_scenarios(spot, 500, 10, 0.2, 0.3, seed=1)
        res = stress_extrapolate(KernelSpec(), train, option.pricer(), test,
                                 reference=option.pricer(), scale=option.strike)
        taylor = taylor_dg(option, 0.0, spot, test.times, test.scenarios)
        t_err = (taylor - res.reference) / option.strike * 1e4
        tail = large_move_mask(test.scenarios, spot, 0.2)
    k_med = float(np.median(np.abs(res.errors_bps)))
    k_tail = float(np.median(np.abs(res.errors_bps[tail])))
    t_tail = float(np.median(np.abs(t_err[tail])))
    ok = k_med <= 5 and tail.any() and k_tail <= t_tail and t.seconds < 60
    assert acceptance(3, "basis-point extrapolation", ok,
                      f"median {k_med:.4f} bps (<= 5); large moves ({tail.sum()}) kernel {k_tail:.4f} "
                      f"vs Taylor {t_tail:.4f} bps; {t.seconds:.1f}s (< 60s)")


def test_c04_exact_assignment(acceptance):
    rng = np.random.default_rng(404)
    mismatches = 0
    with Timer() as t:
        for n in range(2, 9):
            perms = np.array(list(itertools.permutations(range(n))))
            for _ in range(50):
                C = rng.random((n, n))
                best = C[np.arange(n), perms].sum(axis=1).min()
                _, value = lap_solve(C)
                mismatches += abs(value - best) > 1e-9
    ok = mismatches == 0 and t.seconds < 30
    assert acceptance(4, "LAP vs brute force", ok,
                      f"{mismatches} mismatches in 350 instances, {t.seconds:.1f}s (< 30s)")


def test_c05_sp_oracle(acceptance):
    rng = np.random.default_rng(505)
    misses = 0
    spec = KernelSpec()
    with Timer() as t:
        for i in range(20):
            n = 3 + i % 4
            P = rng.normal(size=(n, 1))
            X = rng.normal(size=(n, 2))
            M = pairing_form(spec, P)
            Xc = X - X.mean(axis=0)
            S = Xc @ Xc.T
            perms = np.array(list(itertools.permutations(range(n))))
            vals = np.array([np.sum(M * S[np.ix_(p, p)]) for p in perms])
            _, value = sp_solve(spec, P, X)
            misses += value > vals.min() + 1e-9 * (1 + abs(vals.min()))
    ok = misses == 0 and t.seconds < 60
    assert acceptance(5, "SP vs exhaustive search", ok,
                      f"{misses} misses in 20 instances (N = 3..6), {t.seconds:.1f}s (< 60s)")


def test_c06_reverse_stress_round_trip(acceptance):
    option = BasketOption.at_the_money([100.0])
    t1 = 10 / 252

    def pricer(x):
        return bs_price(option, t1, x)

    with Timer() as t:
        X = simulate_gbm_scenarios([100.0], 500, 10, 0.2, seed=3, random_horizon=False).scenarios
        P = pricer(X)[:, None]
        spec = KernelSpec()
        model = fit_reverse(spec, X, P, "sp_smooth", pricer=pricer, scale=option.strike)
        gen = fit_generator(spec, P, LatentSpec("uniform_cube", 1, 4))
        uniform = rst_benchmark(model, gen, 500, latent=LatentSpec("uniform_cube", 1, 5))
        ident = LatentSpec("identity_passthrough", 1, 0, source=P)
        replay = rst_benchmark(model, fit_generator(spec, P, ident), 500, latent=ident)
    ok = uniform.median_abs <= 10 and replay.median_abs <= 1 and t.seconds < 60
    assert acceptance(6, "reverse-stress round trip", ok,
                      f"generated median {uniform.median_abs:.4f} bps (<= 10), training "
                      f"{replay.median_abs:.4f} bps (<= 1), {t.seconds:.1f}s (< 60s)")


def test_c07_noise_map_invertibility(acceptance):
    rng = np.random.default_rng(707)
    worst = {"random_walk": 0.0, "returns": 0.0, "garch": 0.0}

    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))

    with Timer() as t:
        for i in range(100):
            T = int(rng.integers(50, 500))
            V = 100 * np.cumprod(1 + 0.02 * rng.standard_normal((2, T)), axis=1)
            X = TimeSeriesMatrix(V)
            worst["random_walk"] = max(worst["random_walk"],
                                       rel(random_walk_inverse(random_walk_forward(X), V[:, 0]).values, V))
            worst["returns"] = max(worst["returns"], rel(returns_inverse(returns_forward(X), V[:, 0]).values, V))
            a = rng.uniform(0.01, 0.2)
            params = GarchParams(rng.normal(0, 0.1), rng.uniform(0.01, 1), (a,), (rng.uniform(0, 0.97 - a),))
            x = garch_simulate(params, T, seed=i)
            state = GarchState.unconditional(params)
            worst["garch"] = max(worst["garch"], rel(garch_inverse(params, garch_forward(params, x, state), state), x))
    ok = max(worst.values()) <= 1e-10 and t.seconds < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert acceptance(7, "noise-map invertibility", ok, f"{detail} (<= 1e-10), {t.seconds:.1f}s (< 10s)")


def test_c08_garch_recovery(acceptance):
    truth = GarchParams(0.0, 0.05, (0.1,), (0.85,))
    est = []
    with Timer() as t:
        for seed in range(20):
            p = garch_fit(garch_simulate(truth, 4000, seed=seed)).params
            est.append([p.alpha0, p.alpha[0], p.beta[0]])
    err = np.median(np.abs(np.array(est) - [0.05, 0.1, 0.85]), axis=0)
    tol = np.maximum(0.25 * np.array([0.05, 0.1, 0.85]), 0.02)
    ok = bool(np.all(err <= tol)) and t.seconds < 120
    assert acceptance(8, "GARCH(1,1) recovery", ok,
                      "median |err| alpha0 {:.4f}, alpha1 {:.4f}, beta1 {:.4f} (<= {:.4f}, {:.4f}, {:.4f}), "
                      "{:.1f}s (< 120s)".format(*err, *tol, t.seconds))


def test_c09_conditional_gaussian(acceptance):
    means, stds = [], []
    with Timer() as t:
        for seed in range(10):
            rng = np.random.default_rng(900 + seed)
            x = rng.standard_normal(2000)
            y = 0.8 * x + 0.6 * rng.standard_normal(2000)
            draws = conditional_sampler(KernelSpec(), x[:, None], y[:, None],
                                        LatentSpec("uniform_cube", 2, seed), [1.0], 2000)
            means.append(draws.mean())
            stds.append(draws.std())
    m, s = float(np.median(means)), float(np.median(stds))
    ok = abs(m - 0.8) <= 0.1 and abs(s - 0.6) <= 0.1 and t.seconds < 60
    assert acceptance(9, "conditional gaussian oracle", ok,
                      f"median mean {m:.3f} (0.8 +- 0.1), median std {s:.3f} (0.6 +- 0.1), "
                      f"{t.seconds:.1f}s (< 60s)")


def _grid_minimum(problem, step=0.01):
    g = np.arange(-1.0, 1.0 + step / 2, step)
    w1, w2 = np.meshgrid(g, g, indexing="ij")
    W = np.stack([w1.ravel(), w2.ravel(), -(w1 + w2).ravel()], axis=1)
    W = W[np.abs(W[:, 2]) <= 1.0 + 1e-12]
    vals = (0.5 * np.einsum("ki,ij,kj->k", W, problem.Q, W) - problem.risk_appetite * W @ problem.expected_returns
            + problem.cost_coeff * np.abs(W - problem.prev_weights).sum(axis=1))
    return vals.min()


def test_c10_markowitz_oracle(acceptance):
    rng = np.random.default_rng(1010)
    worst = -np.inf
    with Timer() as t:
        for _ in range(20):
            A = rng.normal(size=(3, 3))
            prev = np.clip(0.3 * rng.normal(size=3), -1, 1)
            prev -= prev.mean()
            problem = PortfolioProblem(0.5 * A @ A.T, 0.5 * rng.normal(size=3), 1.0,
                                       rng.uniform(0.01, 0.3), prev, True, 1.0)
            _, value = markowitz_solve(problem)
            worst = max(worst, value - _grid_minimum(problem))
        V = 100 * np.cumprod(1 + 0.01 * rng.standard_normal((3, 150)), axis=1)
        X = TimeSeriesMatrix(V)
        turnover = []
        for beta in (0.0, 1e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 0.05):
            template = PortfolioProblem(np.eye(3), np.zeros(3), 1.0, beta, None, True, 1.0)
            turnover.append(backtest(X, BacktestConfig(40, "long_short"), template).total_turnover)
    monotone = all(b <= a + 1e-9 for a, b in zip(turnover, turnover[1:]))
    ok = worst <= 1e-3 and monotone and t.seconds < 60
    assert acceptance(10, "Markowitz oracle", ok,
                      f"worst gap to grid {worst:.2e} (<= 1e-3), turnover monotone: {monotone}, "
                      f"{t.seconds:.1f}s (< 60s)")


def _signal_market(seed, T=200, D=3):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((T, D))  # known at price time k
    R = 0.01 * u[:-1] + 0.01 * rng.standard_normal((T - 1, D))
    V = 100 * np.vstack([np.ones(D), np.cumprod(1 + R, axis=0)]).T
    return TimeSeriesMatrix(V), u


def test_c11_backtest_bookkeeping(acceptance):
    template = PortfolioProblem(np.eye(3), np.zeros(3), 1.0, 1e-4, None, True, 1.0)
    wins, gap = 0, 0.0
    with Timer() as t:
        for seed in range(50):
            X, u = _signal_market(seed)
            plain = backtest(X, BacktestConfig(40, "long_short"), template)
            cond = ConditioningSpec("user", columns=u, lag=1, n_samples=200, seed=seed)
            conditioned = backtest(X, BacktestConfig(40, "long_short_conditioned", cond), template)
            R = (X.values[:, 1:] / X.values[:, :-1] - 1).T[40:]
            for res in (plain, conditioned):
                gap = max(gap, float(np.max(np.abs(performance_from_weights(res.weights, R) / res.performance - 1))))
            wins += conditioned.performance[-1] >= plain.performance[-1]
    ok = gap <= 1e-10 and wins >= 35 and t.seconds < 120
    assert acceptance(11, "backtest bookkeeping", ok,
                      f"telescoping gap {gap:.1e} (<= 1e-10), conditioned >= plain in {wins}/50 "
                      f"(>= 35), {t.seconds:.1f}s (< 120s)")
