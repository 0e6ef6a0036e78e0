import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelfin.kernels import KernelSpec, discrepancy, gradient
from kernelfin.transport import (
    gradient_operator,
    invert_permutation,
    is_permutation,
    lap_solve,
    mmd_cost,
    pairing_form,
    sp_objective,
    sp_solve,
)


def brute_force_lap(C):
    n = C.shape[0]
    best = min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
    ties = [p for p in itertools.permutations(range(n))
            if abs(sum(C[i, p[i]] for i in range(n)) - best) <= 1e-9]
    return min(ties), best


def test_mmd_cost_entries(rng):
    X = rng.normal(size=(2, 3))
    P = rng.normal(size=(2, 3))
    C = mmd_cost(KernelSpec(bandwidth=1.0), X, P)
    for n in range(2):
        for m in range(2):
            assert C[n, m] == pytest.approx(discrepancy(KernelSpec(bandwidth=1.0), X[m], P[n]))


def test_mmd_cost_zero_diagonal_and_transpose(rng):
    X = rng.normal(size=(6, 2))
    P = rng.normal(size=(6, 2))
    spec = KernelSpec(bandwidth=0.8)
    np.testing.assert_allclose(np.diag(mmd_cost(spec, X, X)), 0.0, atol=1e-15)
    np.testing.assert_allclose(mmd_cost(spec, X, P), mmd_cost(spec, P, X).T, atol=1e-15)


def test_mmd_cost_shape_errors():
    spec = KernelSpec(bandwidth=1.0)
    with pytest.raises(ValueError):
        mmd_cost(spec, np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        mmd_cost(spec, np.zeros((3, 2)), np.zeros((3, 1)))


def test_lap_small_by_inspection(backend):
    sigma, total = lap_solve(1.0 - np.eye(4))
    np.testing.assert_array_equal(sigma, np.arange(4))
    assert total == 0.0
    sigma, total = lap_solve([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_array_equal(sigma, [1, 0])
    assert total == 2.0


@pytest.mark.parametrize("n", range(2, 8))
def test_lap_matches_brute_force(n, backend, rng):
    for trial in range(10):
        # integer costs create many ties and exercise the tie-break
        C = rng.integers(0, 4, (n, n)).astype(float) if trial % 2 else rng.random((n, n))
        sigma, total = lap_solve(C)
        best_sigma, best = brute_force_lap(C)
        assert total == pytest.approx(best, abs=1e-9)
        assert tuple(sigma) == best_sigma


def test_lap_all_equal_costs_give_identity(backend):
    sigma, total = lap_solve(np.full((5, 5), 3.0))
    np.testing.assert_array_equal(sigma, np.arange(5))
    assert total == 15.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-50, 50), n=st.integers(1, 12))
def test_lap_shift_invariance(seed, shift, n):
    C = np.random.default_rng(seed).random((n, n))
    s0, t0 = lap_solve(C)
    s1, t1 = lap_solve(C + shift)
    np.testing.assert_array_equal(s0, s1)
    assert t1 == pytest.approx(t0 + n * shift, abs=1e-8 * (1 + abs(shift)) * n)


def test_lap_large_random_is_permutation(backend, rng):
    C = rng.random((120, 120))
    sigma, total = lap_solve(C)
    assert is_permutation(sigma)
    # duality-free sanity: no 2-swap improves an optimal assignment
    d = C[np.arange(120), sigma]
    swap = C[:, sigma] + C[:, sigma].T - d[:, None] - d[None, :]
    assert swap.min() >= -1e-12


def test_lap_errors():
    with pytest.raises(ValueError):
        lap_solve(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        lap_solve([[0.0, np.inf], [1.0, 0.0]])
    sigma, total = lap_solve(np.zeros((0, 0)))
    assert sigma.size == 0 and total == 0.0


def test_permutation_helpers(rng):
    sigma = rng.permutation(9)
    inv = invert_permutation(sigma)
    np.testing.assert_array_equal(sigma[inv], np.arange(9))
    np.testing.assert_array_equal(inv[sigma], np.arange(9))
    assert is_permutation(sigma)
    assert not is_permutation([0, 0, 1])


def test_sp_objective_trivial_cases(rng):
    P = rng.normal(size=(6, 2))
    spec = KernelSpec()
    assert sp_objective(spec, P, np.zeros((6, 3))) == 0.0
    assert sp_objective(spec, P, np.tile([1.0, -2.0], (6, 1))) == pytest.approx(0.0, abs=1e-6)


def test_sp_objective_matches_kernel_gradient(rng):
    P = rng.normal(size=(4, 2))
    Xs = rng.normal(size=(4, 3))
    spec = KernelSpec(regularization=1e-10)
    J = gradient(spec, P, Xs, P)  # (4, 2, 3)
    # the fit residual vanishes for an exact interpolant of 4 points
    assert sp_objective(spec, P, Xs) == pytest.approx(np.sum(J**2), rel=1e-6)
    assert sp_objective(spec, P, Xs, fidelity=0.0) == pytest.approx(np.sum(J**2), rel=1e-10)


def test_gradient_operator_on_linear_map(rng):
    p = np.sort(rng.normal(size=200))[:, None]
    A = gradient_operator(KernelSpec(), p)
    x = 0.5 * p[:, 0]
    g = A @ (x - x.mean())
    np.testing.assert_allclose(np.median(g), 0.5, rtol=1e-3)


def test_sp_solve_budget_zero_is_identity(rng):
    P = rng.normal(size=(5, 1))
    X = rng.normal(size=(5, 2))
    sigma, value = sp_solve(KernelSpec(), P, X, budget=0)
    np.testing.assert_array_equal(sigma, np.arange(5))
    assert value == pytest.approx(sp_objective(KernelSpec(), P, X))


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_sp_solve_matches_exhaustive(n, rng):
    spec = KernelSpec()
    for _ in range(4):
        P = rng.normal(size=(n, 1 + n % 2))
        X = rng.normal(size=(n, 2))
        M = pairing_form(spec, P)
        Xc = X - X.mean(axis=0)
        S = Xc @ Xc.T
        best = min(np.sum(M * S[np.ix_(p, p)]) for p in map(list, itertools.permutations(range(n))))
        sigma, value = sp_solve(spec, P, X)
        assert is_permutation(sigma)
        assert value == pytest.approx(best, rel=1e-9, abs=1e-12)
        assert value == pytest.approx(sp_objective(spec, P, X[sigma]), rel=1e-9)


def test_sp_solve_never_worse_than_identity(rng):
    spec = KernelSpec()
    for seed in range(5):
        P = rng.normal(size=(30, 2))
        X = rng.normal(size=(30, 1))
        _, value = sp_solve(spec, P, X, budget=50, seed=seed)
        assert value <= sp_objective(spec, P, X) + 1e-12


def test_sp_solve_deterministic_and_size_check(rng):
    P = rng.normal(size=(12, 1))
    X = rng.normal(size=(12, 2))
    a = sp_solve(KernelSpec(), P, X, seed=4)
    b = sp_solve(KernelSpec(), P, X, seed=4)
    np.testing.assert_array_equal(a[0], b[0])
    with pytest.raises(ValueError):
        sp_solve(KernelSpec(), P, X[:5])
    with pytest.raises(ValueError):
        pairing_form(KernelSpec(), P, fidelity=-1.0)
