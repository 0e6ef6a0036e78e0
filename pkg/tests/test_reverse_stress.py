import numpy as np
import pytest

from kernelfin.encoding import LatentSpec, fit_generator
from kernelfin.kernels import KernelSpec
from kernelfin.pricing import BasketOption, simulate_gbm_scenarios
from kernelfin.reverse_stress import PricerError, fit_reverse, invert, rst_benchmark


def linear_pricer(X):
    return 2.0 * np.asarray(X)


def test_linear_map_inverts_to_half(rng):
    X = rng.uniform(-1, 1, size=(60, 1))
    P = linear_pricer(X)
    model = fit_reverse(KernelSpec(), X, P, "sp_smooth", pricer=linear_pricer)
    p = np.linspace(P.min(), P.max(), 25)[:, None]
    np.testing.assert_allclose(invert(model, p), p / 2, atol=1e-3)
    assert invert(model, 0.4).shape == (1,)


@pytest.mark.parametrize("strategy", ["none", "ot_mmd", "sp_smooth"])
def test_training_pairs_are_reproduced(rng, strategy):
    # jittered grid keeps the near-interpolating solve well conditioned
    X = (np.linspace(-1, 1, 20) + rng.uniform(-0.02, 0.02, 20))[rng.permutation(20), None]
    P = linear_pricer(X)
    model = fit_reverse(KernelSpec(regularization=1e-12), X, P, strategy)
    sigma = model.decoder.permutation
    np.testing.assert_allclose(invert(model, P), X[sigma], atol=1e-6)


def test_identity_pairing_kept_on_monotone_pricer():
    opt = BasketOption.at_the_money([100.0])
    train = simulate_gbm_scenarios([100.0], 200, seed=3, random_horizon=False)
    X = train.scenarios
    price = lambda S: opt.pricer()(0.0, S)  # noqa: E731
    model = fit_reverse(KernelSpec(), X, price(X)[:, None], pricer=price, scale=opt.strike)
    np.testing.assert_array_equal(model.decoder.permutation, np.arange(200))


def test_benchmark_statistics_consistent(rng):
    X = rng.uniform(-1, 1, size=(50, 1))
    P = linear_pricer(X)
    model = fit_reverse(KernelSpec(), X, P, pricer=linear_pricer, scale=2.0)
    gen = fit_generator(KernelSpec(), P, LatentSpec("uniform_cube", 1, 0))
    s = rst_benchmark(model, gen, 200, latent=LatentSpec("uniform_cube", 1, 7), bins=10)
    err = (linear_pricer(s.scenarios) - s.targets)[:, 0] / 2.0 * 1e4
    np.testing.assert_allclose(s.errors_bps, err)
    assert s.median_abs == pytest.approx(np.median(np.abs(err)))
    assert s.p95_abs == pytest.approx(np.percentile(np.abs(err), 95))
    assert s.counts.sum() == 200 and s.bin_edges.size == 11
    d = s.to_dict()
    assert d["n"] == 200 and d["median_abs_bps"] == s.median_abs
    again = rst_benchmark(model, gen, 200, latent=LatentSpec("uniform_cube", 1, 7), bins=10)
    np.testing.assert_array_equal(s.errors_bps, again.errors_bps)


def test_empty_benchmark(rng):
    X = rng.uniform(-1, 1, size=(20, 1))
    model = fit_reverse(KernelSpec(), X, linear_pricer(X), pricer=linear_pricer)
    gen = fit_generator(KernelSpec(), linear_pricer(X), LatentSpec("uniform_cube", 1, 0))
    s = rst_benchmark(model, gen, 0)
    assert s.n == 0 and np.isnan(s.median_abs)
    assert s.to_dict()["n"] == 0


def test_pricer_failure_reports_index(rng):
    X = rng.uniform(-1, 1, size=(20, 1))
    P = linear_pricer(X)

    def flaky(S):
        S = np.asarray(S)
        if S.shape[0] > 1:
            raise RuntimeError("batch unsupported")
        if S[0, 0] > 0.5:
            raise RuntimeError("boom")
        return 2.0 * S

    model = fit_reverse(KernelSpec(), X, P, pricer=flaky)
    gen = fit_generator(KernelSpec(), P, LatentSpec("uniform_cube", 1, 0))
    with pytest.raises(PricerError) as info:
        rst_benchmark(model, gen, 50)
    targets = info.value.index
    assert isinstance(targets, int) and targets >= 0


def test_benchmark_needs_pricer(rng):
    X = rng.uniform(-1, 1, size=(10, 1))
    model = fit_reverse(KernelSpec(), X, linear_pricer(X))
    gen = fit_generator(KernelSpec(), linear_pricer(X), LatentSpec("uniform_cube", 1, 0))
    with pytest.raises(ValueError):
        rst_benchmark(model, gen, 5)


def test_invert_dimension_check(rng):
    X = rng.uniform(-1, 1, size=(10, 1))
    model = fit_reverse(KernelSpec(), X, linear_pricer(X))
    with pytest.raises(ValueError):
        invert(model, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        fit_reverse(KernelSpec(), X, linear_pricer(X), scale=0.0)


def test_fit_is_deterministic(rng):
    X = rng.uniform(-1, 1, size=(30, 2))
    P = (X ** 2).sum(axis=1, keepdims=True)
    a = fit_reverse(KernelSpec(), X, P, seed=4)
    b = fit_reverse(KernelSpec(), X, P, seed=4)
    np.testing.assert_array_equal(a.decoder.permutation, b.decoder.permutation)


def test_sp_beats_none_on_non_injective_map(rng):
    from kernelfin.transport import sp_objective

    X = rng.uniform(-1, 1, size=(40, 1))
    P = X ** 2
    spec = KernelSpec()
    sp = fit_reverse(spec, X, P, "sp_smooth")
    none = fit_reverse(spec, X, P, "none")
    assert sp_objective(spec, P, X[sp.decoder.permutation]) <= sp_objective(spec, P, X[none.decoder.permutation])
