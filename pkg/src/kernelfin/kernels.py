"""Kernels, Gram matrices and the kernel projection (extrapolation) operator.

The projection of a function known on training points ``X`` is

    P(z) = k(z, X) (k(X, X) + lam I)^{-1} P(X)

and its gradient replaces ``k(z, X)`` by ``grad_z k(z, X)``.  All three
kernel families are radial in the bandwidth-scaled distance
``r = ||(x - y) / h||`` and have self-value 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

FAMILIES = ("gaussian", "inverse_multiquadric", "matern_3_2")

_SQRT3 = np.sqrt(3.0)
_MEDIAN_SUBSAMPLE = 1000


class RankDeficientWarning(UserWarning):
    """The Gram system was solved through a truncated pseudo-inverse."""


class DuplicatePointsWarning(UserWarning):
    """Coincident training points were merged before fitting."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, length scale and Tikhonov ridge.

    ``bandwidth=None`` resolves to the median pairwise distance of the
    (standardized) training set; ``regularization=None`` resolves to
    ``1e-8 * trace(G) / N``.
    """

    family: str = "gaussian"
    bandwidth: float | tuple[float, ...] | None = None
    regularization: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.bandwidth is not None:
            bw = np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
            if bw.ndim != 1 or not np.all(np.isfinite(bw)) or np.any(bw <= 0):
                raise ValueError("bandwidth must be positive and finite")
            if bw.size > 1:
                object.__setattr__(self, "bandwidth", tuple(float(b) for b in bw))
            else:
                object.__setattr__(self, "bandwidth", float(bw[0]))
        if self.regularization is not None:
            lam = float(self.regularization)
            if not np.isfinite(lam) or lam < 0:
                raise ValueError("regularization must be non-negative")
            object.__setattr__(self, "regularization", lam)

    def scale(self, dim: int) -> np.ndarray:
        if self.bandwidth is None:
            raise ValueError("bandwidth is unresolved; call resolve() or pass a bandwidth")
        bw = np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
        if bw.size == 1:
            return np.full(dim, bw[0])
        if bw.size != dim:
            raise ValueError(f"bandwidth has {bw.size} entries for {dim}-dimensional points")
        return bw

    def resolve(self, X) -> "KernelSpec":
        """Fill an unset bandwidth with the median heuristic on ``X``."""
        if self.bandwidth is not None:
            return self
        return replace(self, bandwidth=median_bandwidth(X))

    def ridge(self, G: np.ndarray) -> float:
        if self.regularization is not None:
            return self.regularization
        n = G.shape[0]
        return 1e-8 * float(np.trace(G)) / max(n, 1)

    def to_dict(self) -> dict:
        bw = self.bandwidth
        return {
            "family": self.family,
            "bandwidth": list(bw) if isinstance(bw, tuple) else bw,
            "regularization": self.regularization,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        bw = data.get("bandwidth")
        if isinstance(bw, list):
            bw = tuple(bw)
        return cls(data.get("family", "gaussian"), bw, data.get("regularization"))


def as_points(X, name: str = "points") -> np.ndarray:
    """Coerce to a finite ``N x D`` float matrix (1-D input is one coordinate)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def median_bandwidth(X) -> float:
    X = as_points(X)
    if X.shape[0] > _MEDIAN_SUBSAMPLE:
        idx = np.linspace(0, X.shape[0] - 1, _MEDIAN_SUBSAMPLE).astype(int)
        X = X[idx]
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0


def _profile(family: str, r2: np.ndarray) -> np.ndarray:
    if family == "gaussian":
        return np.exp(-0.5 * r2)
    if family == "inverse_multiquadric":
        return 1.0 / np.sqrt(1.0 + r2)
    r = np.sqrt(r2)
    return (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)


def _profile_slope(family: str, r2: np.ndarray) -> np.ndarray:
    """phi'(r) / r, so that grad_z k(x, z) = slope * (z - x) / h**2."""
    if family == "gaussian":
        return -np.exp(-0.5 * r2)
    if family == "inverse_multiquadric":
        return -((1.0 + r2) ** -1.5)
    return -3.0 * np.exp(-_SQRT3 * np.sqrt(r2))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("kernel arguments must be finite")
    h = spec.scale(x.size)
    r2 = float(np.sum(((x - y) / h) ** 2))
    return float(_profile(spec.family, np.asarray(r2)))


def _scaled_sqdist(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    h = spec.scale(X.shape[1])
    return cdist(X / h, Y / h, "sqeuclidean")


def gram(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """``G[i, j] = k(X[i], Y[j])``; ``Y=None`` gives the square Gram of ``X``."""
    X = as_points(X, "X")
    Y = X if Y is None else as_points(Y, "Y")
    G = _profile(spec.family, _scaled_sqdist(spec, X, Y))
    if Y is X:
        G = 0.5 * (G + G.T)
    return G


def gram_gradient(spec: KernelSpec, X, Z) -> np.ndarray:
    """``out[q, d, i] = d/dz_d k(X[i], z)`` at ``z = Z[q]``."""
    X = as_points(X, "X")
    Z = as_points(Z, "Z")
    h = spec.scale(X.shape[1])
    slope = _profile_slope(spec.family, _scaled_sqdist(spec, Z, X))  # (Nz, Nx)
    diff = (Z[:, None, :] - X[None, :, :]) / h**2  # (Nz, Nx, D)
    return np.einsum("qi,qid->qdi", slope, diff)


def discrepancy(spec: KernelSpec, x, y) -> float:
    """Kernel discrepancy ``k(x,x) + k(y,y) - 2 k(x,y)``."""
    return kernel_eval(spec, x, x) + kernel_eval(spec, y, y) - 2.0 * kernel_eval(spec, x, y)


def regularized_solve(G, B, regularization: float = 0.0, *, return_rank: bool = False):
    """Solve ``(G + lam I) C = B``.

    With ``lam > 0`` a Cholesky factorization is used.  When the system is
    singular (or ``lam == 0`` and badly conditioned) the minimum-norm
    least-squares solution is taken from an SVD truncated at
    ``1e-10 * s_max`` and a :class:`RankDeficientWarning` reports the rank.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("G must be square")
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.shape[0] != G.shape[0]:
        raise ValueError(f"B has {B.shape[0]} rows for a {G.shape[0]}x{G.shape[0]} system")
    n = G.shape[0]
    A = G + regularization * np.eye(n)
    C = None
    rank = n
    if regularization > 0:
        try:
            C = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, lower=True), B)
        except np.linalg.LinAlgError:
            C = None
    if C is None:
        U, s, Vt = np.linalg.svd(A)
        cutoff = 1e-10 * s[0] if s.size else 0.0
        keep = s > cutoff
        rank = int(keep.sum())
        if rank < n:
            warnings.warn(
                f"Gram system is rank deficient (effective rank {rank} of {n}); "
                "using truncated pseudo-inverse",
                RankDeficientWarning,
                stacklevel=2,
            )
        C = Vt[keep].T @ ((U[:, keep].T @ B) / s[keep][:, None])
    if vector:
        C = C[:, 0]
    return (C, rank) if return_rank else C


@dataclass(frozen=True)
class Standardizer:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, enabled: bool = True) -> "Standardizer":
        d = X.shape[1]
        if not enabled:
            return cls(np.zeros(d), np.ones(d))
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.shift) / self.scale


def _merge_duplicates(X: np.ndarray, V: np.ndarray, tol: float = 1e-12):
    pairs = cKDTree(X).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return X, V
    parent = np.arange(X.shape[0])

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = root(a), root(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([root(i) for i in range(X.shape[0])])
    keep, inverse = np.unique(roots, return_inverse=True)
    counts = np.bincount(inverse)
    merged_v = np.zeros((keep.size, V.shape[1]))
    np.add.at(merged_v, inverse, V)
    merged_v /= counts[:, None]
    warnings.warn(
        f"merged {X.shape[0] - keep.size} duplicate training points",
        DuplicatePointsWarning,
        stacklevel=3,
    )
    return X[keep], merged_v


@dataclass(frozen=True)
class KernelInterpolant:
    """A fitted projection operator; immutable and safe to share.

    Inputs are optionally standardized column-wise and the training values
    are centered, which keeps the operator linear in the values and exact
    on constants.
    """

    spec: KernelSpec
    centers: np.ndarray  # standardized training inputs
    standardizer: Standardizer
    value_mean: np.ndarray
    coefficients: np.ndarray
    rank: int = field(default=-1)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _query(self, Z) -> np.ndarray:
        Z = as_points(Z, "query")
        if Z.shape[1] != self.dim:
            raise ValueError(f"query has dimension {Z.shape[1]}, expected {self.dim}")
        return self.standardizer(Z)

    def predict(self, Z) -> np.ndarray:
        Zs = self._query(Z)
        K = gram(self.spec, Zs, self.centers)
        return K @ self.coefficients + self.value_mean

    __call__ = predict

    def gradient(self, Z) -> np.ndarray:
        """Jacobian of :meth:`predict`, shape ``(N_z, D, M)``."""
        Zs = self._query(Z)
        dK = gram_gradient(self.spec, self.centers, Zs)  # (Nz, D, N)
        out = dK @ self.coefficients  # (Nz, D, M)
        return out / self.standardizer.scale[None, :, None]


def fit_interpolant(
    spec: KernelSpec,
    X,
    values,
    *,
    standardize: bool = True,
    merge_duplicates: bool = True,
) -> KernelInterpolant:
    X = as_points(X, "X")
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if V.shape[0] != X.shape[0]:
        raise ValueError(f"{V.shape[0]} values for {X.shape[0]} training points")
    if not np.all(np.isfinite(V)):
        raise ValueError("training values contain non-finite entries")
    if merge_duplicates:
        X, V = _merge_duplicates(X, V)
    std = Standardizer.fit(X, standardize)
    Xs = std(X)
    spec = spec.resolve(Xs)
    G = gram(spec, Xs)
    mean = V.mean(axis=0)
    coef, rank = regularized_solve(G, V - mean, spec.ridge(G), return_rank=True)
    return KernelInterpolant(spec, Xs, std, mean, coef, rank)


def _squeeze(out: np.ndarray, values) -> np.ndarray:
    return out[..., 0] if np.ndim(values) == 1 else out


def project(spec: KernelSpec, X, values, z, *, standardize: bool = True) -> np.ndarray:
    """Extrapolate ``values`` known on ``X`` to the query points ``z``."""
    model = fit_interpolant(spec, X, values, standardize=standardize)
    return _squeeze(model.predict(z), values)


def gradient(spec: KernelSpec, X, values, z, *, standardize: bool = True) -> np.ndarray:
    """Gradient of :func:`project` in ``z``; shape ``(N_z, D, M)``."""
    model = fit_interpolant(spec, X, values, standardize=standardize)
    return _squeeze(model.gradient(z), values)


def project_two_set(spec: KernelSpec, X, Y, values, z) -> np.ndarray:
    """Two-set form ``k(z, Y) k(X, Y)^{-1} P(X)`` with ``|X| = |Y|``.

    Values are centered as in :func:`project` and inputs are not
    standardized, so ``X = Y`` reduces to :func:`project` with
    ``standardize=False``.
    """
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError("two-set projection needs X and Y of equal shape")
    spec = spec.resolve(X)
    V = np.asarray(values, dtype=float)
    mean = V.mean(axis=0)
    K = gram(spec, X, Y)
    lam = spec.ridge(K)
    # least-squares inverse of a possibly non-symmetric cross Gram
    A = K + lam * np.eye(K.shape[0])
    coef = np.linalg.lstsq(A, V - mean, rcond=None)[0]
    return gram(spec, as_points(z, "z"), Y) @ coef + mean
