"""``kernelfin`` command line: price-extrapolate, reverse-stress, generate, backtest.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
The output directory is ``--out``, else ``$KERNELFIN_OUT``, else the
config's ``out``, else ``./kernelfin_out``.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .encoding import LatentSpec, fit_generator
from .io import DataError, read_matrix, read_timeseries, write_csv, write_json, write_timeseries
from .pricing import (
    BasketOption,
    StressScenarioSet,
    bs_price,
    large_move_mask,
    simulate_gbm_scenarios,
    stress_extrapolate,
    taylor_dg,
)
from .portfolio import BacktestConfig, ConditioningSpec, PortfolioProblem, SolverError, backtest
from .reverse_stress import PricerError, fit_reverse, rst_benchmark
from .timeseries import (
    GarchMap,
    GarchParams,
    GarchState,
    RandomWalkMap,
    ReturnsMap,
    TimeSeriesMatrix,
    garch_inverse,
    generate_paths,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("price-extrapolate", "reverse-stress", "generate", "backtest")


class NumericalError(RuntimeError):
    """A computation produced non-finite or unusable results."""


def _option(block, n_assets: int, spot) -> BasketOption:
    w = np.full(n_assets, 1.0 / n_assets) if block.weights is None else np.asarray(block.weights)
    if w.size != n_assets:
        raise ConfigError(f"option has {w.size} weights for {n_assets} assets")
    strike = float(w @ np.asarray(spot)) if block.strike is None else block.strike
    return BasketOption(w, strike, block.maturity, block.volatility, block.rate)


def _read_scenarios(path, n_assets: int, horizon_days: int) -> StressScenarioSet:
    header, data = read_matrix(path)
    if header and header[0].lower() == "time":
        times, X = data[:, 0], data[:, 1:]
    else:
        times, X = None, data
    if X.shape[1] != n_assets:
        raise DataError(f"{path}: {X.shape[1]} asset columns, expected {n_assets}")
    if X.size and np.any(X <= 0):
        raise DataError(f"{path}: asset values must be positive")
    return StressScenarioSet(X.reshape(-1, n_assets), horizon_days, times=times)


def _check_finite(name: str, *arrays):
    for a in arrays:
        if np.asarray(a).size and not np.all(np.isfinite(a)):
            raise NumericalError(f"{name} produced non-finite values")


# ---------------------------------------------------------------- commands


def cmd_price_extrapolate(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.price_extrapolate
    sb = b.scenarios
    spot = np.asarray(sb.spot, dtype=float)
    option = _option(b.option, spot.size, spot)
    if sb.train_csv:
        train = _read_scenarios(sb.train_csv, spot.size, sb.horizon_days)
    else:
        train = simulate_gbm_scenarios(spot, sb.n_train, sb.horizon_days, sb.annual_vol,
                                       sb.correlation, seed=cfg.seed, random_horizon=sb.random_horizon)
    if sb.test_csv:
        test = _read_scenarios(sb.test_csv, spot.size, sb.horizon_days)
    else:
        test = simulate_gbm_scenarios(spot, sb.n_test, sb.horizon_days, sb.annual_vol,
                                      sb.correlation, seed=cfg.seed + 1, random_horizon=sb.random_horizon)
    scale = b.scale or option.strike
    pricer = option.pricer()
    res = stress_extrapolate(b.kernel.build(), train, pricer, test, reference=pricer, scale=scale)
    taylor = taylor_dg(option, 0.0, spot, test.times, test.scenarios) if test.size else np.zeros(0)
    ref = res.reference if res.reference is not None else np.zeros(0)
    taylor = np.atleast_1d(taylor)
    _check_finite("kernel extrapolation", res.prices, res.deltas)
    k_err = (res.prices - ref) / scale * 1e4
    t_err = (taylor - ref) / scale * 1e4
    tail = large_move_mask(test.scenarios, spot, sb.annual_vol) if test.size else np.zeros(0, bool)
    D = spot.size
    header = (["index", "time"] + [f"x_{d + 1}" for d in range(D)]
              + ["analytic", "kernel", "taylor", "kernel_error_bps", "taylor_error_bps", "large_move", "theta"]
              + [f"delta_{d + 1}" for d in range(D)])
    rows = ([i, test.times[i], *test.scenarios[i], ref[i], res.prices[i], taylor[i],
             k_err[i], t_err[i], bool(tail[i]), res.theta[i], *res.deltas[i]] for i in range(test.size))
    med = lambda a: float(np.median(np.abs(a))) if np.size(a) else None  # noqa: E731
    summary = {
        "n_train": train.size, "n_test": test.size, "scale": scale, "strike": option.strike,
        "uses_time_input": res.uses_time,
        "kernel_median_abs_bps": med(k_err), "taylor_median_abs_bps": med(t_err),
        "large_move_count": int(tail.sum()),
        "large_move_kernel_median_abs_bps": med(k_err[tail]),
        "large_move_taylor_median_abs_bps": med(t_err[tail]),
    }
    return [write_csv(out / "predictions.csv", header, rows), write_json(out / "summary.json", summary)]


def cmd_reverse_stress(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.reverse_stress
    sb = b.scenarios
    spot = np.asarray(sb.spot, dtype=float)
    option = _option(b.option, spot.size, spot)
    t1 = sb.horizon_days / 252
    if sb.train_csv:
        X = _read_scenarios(sb.train_csv, spot.size, sb.horizon_days).scenarios
    else:
        X = simulate_gbm_scenarios(spot, sb.n_train, sb.horizon_days, sb.annual_vol, sb.correlation,
                                   seed=cfg.seed, random_horizon=False).scenarios
    pricer = lambda x: bs_price(option, t1, x)  # noqa: E731
    P = np.atleast_1d(pricer(X)).reshape(-1, 1)
    scale = b.scale or option.strike
    spec = b.kernel.build()
    model = fit_reverse(spec, X, P, b.strategy, pricer=pricer, scale=scale,
                        sp_budget=b.sp_budget, sp_fidelity=b.sp_fidelity, seed=cfg.seed)
    if b.latent == "identity_passthrough":
        latent = LatentSpec("identity_passthrough", 1, cfg.seed + 2, source=P)
    else:
        latent = LatentSpec(b.latent, 1, cfg.seed + 2)
    generator = fit_generator(spec, P, latent)
    bench = rst_benchmark(model, generator, b.n_samples, seed=cfg.seed + 3,
                          latent=latent if b.latent == "identity_passthrough" else
                          LatentSpec(b.latent, 1, cfg.seed + 3), bins=b.bins)
    _check_finite("scenario inversion", bench.scenarios)
    D = spot.size
    header = ["index", "target_pnl"] + [f"x_{d + 1}" for d in range(D)] + ["repriced_pnl", "error_bps"]
    rows = ([i, bench.targets[i, 0], *bench.scenarios[i], bench.repriced[i, 0], bench.errors_bps[i]]
            for i in range(bench.n))
    hist = ([bench.bin_edges[i], bench.bin_edges[i + 1], bench.counts[i]] for i in range(bench.counts.size))
    summary = dict(bench.to_dict(), strategy=b.strategy, scale=scale, n_train=int(X.shape[0]),
                   permutation_moved=int(np.sum(model.decoder.permutation != np.arange(X.shape[0]))))
    return [
        write_csv(out / "scenarios.csv", header, rows),
        write_csv(out / "histogram.csv", ["bin_left", "bin_right", "count"], hist),
        write_json(out / "summary.json", summary),
    ]


def synthetic_garch_prices(n_assets: int, length: int, start: str, spot: float, seed: int) -> TimeSeriesMatrix:
    """Correlated GARCH(1,1) daily returns compounded into prices."""
    rng = np.random.default_rng(seed)
    corr = np.full((n_assets, n_assets), 0.5) + 0.5 * np.eye(n_assets)
    Z = rng.standard_normal((length - 1 + 250, n_assets)) @ np.linalg.cholesky(corr).T
    params = GarchParams(0.0003, 2e-6, [0.1], [0.85])
    R = np.vstack([garch_inverse(params, z, GarchState.unconditional(params))[250:] for z in Z.T])
    prices = spot * np.concatenate([np.ones((n_assets, 1)), np.cumprod(1.0 + R, axis=1)], axis=1)
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(length), roll="forward")
    return TimeSeriesMatrix(prices, dates, tuple(f"asset_{d + 1}" for d in range(n_assets)))


def _load_series(block, seed: int) -> TimeSeriesMatrix:
    if block.input_csv:
        return read_timeseries(block.input_csv)
    s = block.synthetic
    return synthetic_garch_prices(s.n_assets, s.length, s.start, s.spot, seed)


def cmd_generate(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.generate
    X = _load_series(b, cfg.seed)
    meta: dict = {"map": b.map, "anchor": b.anchor, "latent": b.latent}
    if b.map == "garch":
        if b.garch.params is not None:
            if len(b.garch.params) != X.dim:
                raise ConfigError(f"{len(b.garch.params)} GARCH parameter sets for {X.dim} assets")
            try:
                params = [GarchParams(**p) for p in b.garch.params]
            except TypeError as exc:
                raise ConfigError(f"bad GARCH parameters: {exc}") from exc
            nmap = GarchMap(b.garch.p, b.garch.q, b.garch.pre, params)
        else:
            nmap = GarchMap(b.garch.p, b.garch.q, b.garch.pre).fit(X)
            meta["converged"] = [f.converged for f in nmap.fits]
        meta["garch"] = [p.to_dict() for p in nmap.params]
    elif b.map == "returns":
        nmap = ReturnsMap()
    else:
        nmap = RandomWalkMap()
    eps = nmap.forward(X)
    horizon = b.horizon or eps.length
    if b.latent == "identity_passthrough":
        latent = LatentSpec("identity_passthrough", X.dim, cfg.seed, source=eps.values.T)
    else:
        latent = LatentSpec(b.latent, X.dim, cfg.seed)
    paths = generate_paths(nmap, X, b.kernel.build(), latent, b.n_paths, horizon, anchor=b.anchor)
    for p in paths:
        _check_finite("path generation", p.values)
    files = []
    if b.layout == "per_path":
        files += [write_timeseries(out / f"path_{i:03d}.csv", p) for i, p in enumerate(paths)]
    else:
        rows = ([i, t, name, v] for i, p in enumerate(paths)
                for j, t in enumerate(p.timestamps) for name, v in zip(p.names, p.values[:, j]))
        files.append(write_csv(out / "paths.csv", ["path_id", "date", "asset", "value"], rows))
    meta.update(n_paths=len(paths), horizon=horizon)
    files.append(write_json(out / "generate.json", meta))
    return files


def _conditioning(block, X: TimeSeriesMatrix, spec, seed: int) -> ConditioningSpec:
    cols = None
    if block.kind == "user":
        if not block.indicator_csv:
            raise ConfigError("user conditioning needs conditioning.indicator_csv")
        ind = read_timeseries(block.indicator_csv)
        if ind.length != X.length:
            raise DataError(f"{block.indicator_csv}: {ind.length} rows, price data has {X.length}")
        cols = ind.values.T
    return ConditioningSpec(block.kind, tuple(block.windows), block.risk_free, cols,
                            block.lag, block.n_samples, seed, spec)


def cmd_backtest(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.backtest
    X = _load_series(b, cfg.seed)
    if b.window + 1 >= X.length:
        raise ConfigError(f"window {b.window} needs more than {b.window + 1} observations, got {X.length}")
    template = PortfolioProblem(np.eye(X.dim), np.zeros(X.dim), b.risk_appetite, b.cost_coeff,
                                None, b.sum_zero, b.box)
    cond = _conditioning(b.conditioning, X, b.kernel.build(), cfg.seed)
    results = []
    for strat in b.strategies:
        conf = BacktestConfig(b.window, strat, cond if strat == "long_short_conditioned" else None)
        results.append(backtest(X, conf, template))
    files = []
    perf_rows = []
    for r in results:
        _check_finite(f"backtest {r.strategy}", r.performance, r.weights)
        turn = np.r_[r.turnover, 0.0]
        perf_rows += [[t, r.strategy, v, u] for t, v, u in zip(r.timestamps, r.performance, turn)]
        files.append(write_csv(out / f"weights_{r.strategy}.csv", ["date", *X.names],
                               ([t, *w] for t, w in zip(r.timestamps[:-1], r.weights))))
    files.insert(0, write_csv(out / "performance.csv", ["date", "strategy", "performance", "turnover"], perf_rows))
    mode = "lagged" if cond.lag == 1 else "same_time (look-ahead)"
    summary = {"window": b.window, "conditioning": b.conditioning.kind, "conditioning_mode": mode,
               "strategies": {r.strategy: r.summary() for r in results}}
    print(f"conditioning mode: {mode}")
    files.append(write_json(out / "summary.json", summary))
    return files


_HANDLERS = {
    "price-extrapolate": cmd_price_extrapolate,
    "reverse-stress": cmd_reverse_stress,
    "generate": cmd_generate,
    "backtest": cmd_backtest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelfin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory")
    return parser


def resolve_out(arg: str | None, cfg: RunConfig) -> Path:
    return Path(arg or os.environ.get("KERNELFIN_OUT") or cfg.out or "kernelfin_out")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        out = resolve_out(args.out, cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            files = _HANDLERS[args.command](cfg, out)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, NumericalError, PricerError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
