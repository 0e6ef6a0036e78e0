"""Optimal permutations between matched samples.

Permutations are 0-based integer arrays: ``sigma[n]`` is the column (output
sample) paired with row (input sample) ``n``, so ``X[sigma]`` is ``X^sigma``.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import _backend
from .kernels import KernelSpec, as_points, fit_interpolant, gram, gram_gradient


SMALL_PROBLEM = 64


def is_permutation(sigma) -> bool:
    sigma = np.asarray(sigma)
    return sigma.ndim == 1 and np.array_equal(np.sort(sigma), np.arange(sigma.size))


def invert_permutation(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.intp)
    inv = np.empty_like(sigma)
    inv[sigma] = np.arange(sigma.size)
    return inv


def mmd_cost(spec: KernelSpec, X, P) -> np.ndarray:
    """``cost[n, m] = d_k(X[m], P[n])`` for two equally sized clouds.

    An unset bandwidth is resolved on the union of both clouds.
    """
    X = as_points(X, "X")
    P = as_points(P, "P")
    if X.shape[0] != P.shape[0]:
        raise ValueError(f"clouds differ in size: {X.shape[0]} vs {P.shape[0]}")
    if X.shape[1] != P.shape[1]:
        raise ValueError(
            f"kernel discrepancy needs matching dimensions, got {X.shape[1]} and {P.shape[1]}"
        )
    spec = spec.resolve(np.vstack([X, P]))
    # self-similarities are 1 for every supported family
    return 2.0 - 2.0 * gram(spec, P, X)


def _equality_graph(cost, u, v, tol):
    reduced = cost - u[:, None] - v[None, :]
    return [np.flatnonzero(row <= tol) for row in reduced]


def _lexicographic_matching(adj, col_of_row):
    """Lexicographically smallest perfect matching inside the equality graph."""
    n = len(adj)
    match = col_of_row.copy()
    row_of_col = invert_permutation(match)
    fixed_cols = np.zeros(n, dtype=bool)
    for i in range(n):
        for j in adj[i]:
            if j >= match[i]:
                break
            if fixed_cols[j]:
                continue
            # re-route the row holding j to the column freed by i
            target = match[i]
            start = row_of_col[j]
            prev = {start: None}
            queue = deque([start])
            end_row = None
            while queue and end_row is None:
                r = queue.popleft()
                for c in adj[r]:
                    if fixed_cols[c] or c == j:
                        continue
                    if c == target:
                        end_row = r
                        prev_col_target = c
                        break
                    nxt = row_of_col[c]
                    if nxt == i or nxt in prev:
                        continue
                    prev[nxt] = (r, c)
                    queue.append(nxt)
            if end_row is None:
                continue
            # augment: walk back from end_row, shifting each row to its new column
            r, c = end_row, prev_col_target
            while r is not None:
                old = match[r]
                match[r] = c
                row_of_col[c] = r
                step = prev[r]
                if step is None:
                    break
                r, c = step[0], old
            match[i] = j
            row_of_col[j] = i
            break
        fixed_cols[match[i]] = True
    return match


def lap_solve(cost, *, tol: float | None = None) -> tuple[np.ndarray, float]:
    """Exact linear assignment ``min_sigma sum_n cost[n, sigma[n]]``.

    Among optimal assignments (equal within ``tol`` in reduced cost) the
    lexicographically smallest ``sigma`` is returned.
    """
    cost = np.ascontiguousarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost has non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp), 0.0
    col_of_row, u, v = _backend.lap_dense(cost)
    if tol is None:
        tol = 1e-9 * (1.0 + float(np.max(np.abs(cost))))
    adj = _equality_graph(cost, u, v, tol)
    if any(len(a) > 1 for a in adj):
        col_of_row = _lexicographic_matching(adj, np.asarray(col_of_row, dtype=np.intp))
    sigma = np.asarray(col_of_row, dtype=np.intp)
    return sigma, float(cost[np.arange(n), sigma].sum())


def gradient_operator(spec: KernelSpec, P, *, standardize: bool = True):
    """Matrix ``A`` of shape ``(N * D_p, N)`` with ``A @ (V - mean V)`` the
    stacked gradients of the interpolant of ``V`` at the training points."""
    return _operators(spec, P, standardize)[0]


def _operators(spec, P, standardize):
    P = as_points(P, "P")
    n = P.shape[0]
    # fit on the identity to get the solved operator (G + lam I)^{-1}
    model = fit_interpolant(spec, P, np.eye(n), standardize=standardize, merge_duplicates=False)
    dK = gram_gradient(model.spec, model.centers, model.centers)  # (N, D, N)
    dK = dK / model.standardizer.scale[None, :, None]
    # coefficients of the centered identity already absorb the centering
    A = (dK @ model.coefficients).reshape(n * P.shape[1], n)
    # residual operator: V - fitted(V) at the training points
    R = np.eye(n) - model.predict(P).T
    return A, R


def pairing_form(spec: KernelSpec, P, *, standardize: bool = True, fidelity: float = 1e4):
    """Symmetric ``M`` with objective ``sum_ij M_ij <Xc_i, Xc_j>`` for a pairing.

    ``M = A^T A + fidelity * R^T R`` where ``A`` maps values to interpolant
    gradients and ``R`` to the fit residuals at the training points.  The
    residual term matters once the ridge makes the fit inexact: without it,
    pairings whose outputs are rough enough to be smoothed away look flat.
    """
    if fidelity < 0:
        raise ValueError("fidelity must be non-negative")
    A, R = _operators(spec, P, standardize)
    M = A.T @ A
    if fidelity:
        M += fidelity * (R.T @ R)
    return 0.5 * (M + M.T)


def sp_objective(
    spec: KernelSpec, P, X_sigma, *, standardize: bool = True, fidelity: float = 1e4
) -> float:
    """Squared decoder Jacobians at the training PnLs plus the weighted
    squared fit residuals."""
    P = as_points(P, "P")
    Xs = as_points(X_sigma, "X_sigma")
    if Xs.shape[0] != P.shape[0]:
        raise ValueError(f"{Xs.shape[0]} outputs for {P.shape[0]} inputs")
    M = pairing_form(spec, P, standardize=standardize, fidelity=fidelity)
    Xc = Xs - Xs.mean(axis=0)
    return float(np.sum(M * (Xc @ Xc.T)))


def _swap_deltas(M: np.ndarray, B: np.ndarray, MB: np.ndarray) -> np.ndarray:
    """Objective change for swapping every pair of positions (a, b).

    Objective is ``sum_ij M_ij B_ij`` with ``B = S[sigma][:, sigma]`` and
    ``MB = M @ B``.
    """
    d = np.diag(MB)
    Md = np.diag(M)
    Bd = np.diag(B)
    core = MB + MB.T - d[:, None] - d[None, :]
    # remove the k in {a, b} terms counted by the matrix products
    corr = (Md[:, None] - M) * (B - Bd[:, None]) + (M - Md[None, :]) * (Bd[None, :] - B)
    delta = 2.0 * (core - corr) + (Md[:, None] - Md[None, :]) * (Bd[None, :] - Bd[:, None])
    np.fill_diagonal(delta, 0.0)
    return delta


def _local_search(M, S, sigma, budget):
    B = S[np.ix_(sigma, sigma)]
    MB = M @ B
    value = float(np.sum(M * B))
    for _ in range(budget):
        delta = _swap_deltas(M, B, MB)
        a, b = np.unravel_index(np.argmin(delta), delta.shape)
        if delta[a, b] >= -1e-12 * (1.0 + abs(value)):
            break
        ab = [a, b]
        old_rows = B[ab, :].copy()
        old_cols = B[:, ab].copy()
        sigma[ab] = sigma[[b, a]]
        B[ab, :] = B[[b, a], :]
        B[:, ab] = B[:, [b, a]]
        # B changed only in rows/cols a, b: update M @ B in O(N^2)
        d_rows = B[ab, :] - old_rows
        d_cols = B[:, ab] - old_cols
        d_cols[ab, :] = 0.0
        MB += M[:, ab] @ d_rows
        MB[:, ab] += M @ d_cols
        value += float(delta[a, b])
    return sigma, float(np.sum(M * B))


def sp_solve(
    spec: KernelSpec,
    P,
    X,
    budget: int = 1000,
    seed: int = 0,
    *,
    restarts: int | None = None,
    standardize: bool = True,
    fidelity: float = 1e4,
) -> tuple[np.ndarray, float]:
    """Steepest-descent 2-swap search for the smoothest pairing of ``X`` to ``P``.

    ``budget`` caps accepted swaps per restart.  The first restart starts
    from the identity, so the result never scores worse than it.  By default
    random restarts are only used for small problems (``N <= 64``), where
    they are cheap and guard against poor local minima.
    """
    P = as_points(P, "P")
    X = as_points(X, "X")
    n = P.shape[0]
    if X.shape[0] != n:
        raise ValueError(f"P has {n} rows but X has {X.shape[0]}")
    M = pairing_form(spec, P, standardize=standardize, fidelity=fidelity)
    Xc = X - X.mean(axis=0)
    S = Xc @ Xc.T
    identity = np.arange(n)
    if budget <= 0 or n < 2:
        return identity, float(np.sum(M * S))
    if restarts is None:
        restarts = 32 if n <= SMALL_PROBLEM else 1
    rng = np.random.default_rng(seed)
    best_sigma, best = _local_search(M, S, identity.copy(), budget)
    for _ in range(max(restarts, 1) - 1):
        start = rng.permutation(n)
        sigma, value = _local_search(M, S, start, budget)
        if value < best - 1e-12 * (1.0 + abs(best)):
            best_sigma, best = sigma, value
    # report the objective recomputed from scratch at the winner
    return best_sigma, float(np.sum(M * S[np.ix_(best_sigma, best_sigma)]))
