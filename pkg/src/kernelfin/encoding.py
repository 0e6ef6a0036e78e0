"""Permuted kernel encoders, latent generators and the conditioned-law sampler."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import KernelInterpolant, KernelSpec, Standardizer, as_points, fit_interpolant
from .transport import is_permutation, lap_solve, mmd_cost, sp_solve

STRATEGIES = ("none", "ot_mmd", "sp_smooth")
LATENT_KINDS = ("uniform_cube", "standard_gaussian", "identity_passthrough")
SNAPSHOT_VERSION = 1


class ExtrapolationWarning(UserWarning):
    """A query lies outside the (10% inflated) training bounding box."""


@dataclass(frozen=True)
class LatentSpec:
    kind: str = "uniform_cube"
    dimension: int = 1
    seed: int = 0
    source: np.ndarray | None = None  # rows replayed by identity_passthrough

    def __post_init__(self):
        if self.kind not in LATENT_KINDS:
            raise ValueError(f"unknown latent kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("latent dimension must be >= 1")

    def draw(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = np.random.default_rng(self.seed) if rng is None else rng
        if self.kind == "uniform_cube":
            return rng.uniform(size=(n, self.dimension))
        if self.kind == "standard_gaussian":
            return rng.standard_normal((n, self.dimension))
        if self.source is None:
            raise ValueError("identity_passthrough latent needs a source point set")
        src = as_points(self.source, "latent source")
        if src.shape[1] != self.dimension:
            raise ValueError("identity_passthrough source dimension mismatch")
        if n > src.shape[0]:
            raise ValueError(f"identity_passthrough can replay at most {src.shape[0]} rows")
        return src[:n].copy()


@dataclass(frozen=True)
class Encoder:
    """Kernel map ``inputs -> outputs[permutation]`` fitted by interpolation."""

    interpolant: KernelInterpolant
    inputs: np.ndarray
    outputs_permuted: np.ndarray
    permutation: np.ndarray
    strategy: str = "none"

    def __post_init__(self):
        if not is_permutation(self.permutation):
            raise ValueError("encoder permutation is not a bijection")
        if self.permutation.size != self.inputs.shape[0]:
            raise ValueError("permutation length differs from the number of inputs")

    @property
    def spec(self) -> KernelSpec:
        return self.interpolant.spec

    @property
    def coefficients(self) -> np.ndarray:
        return self.interpolant.coefficients

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs_permuted.shape[1]

    def __call__(self, query) -> np.ndarray:
        return apply(self, query)

    def to_json(self) -> str:
        m = self.interpolant
        payload = {
            "format": "kernelfin.encoder",
            "version": SNAPSHOT_VERSION,
            "strategy": self.strategy,
            "spec": m.spec.to_dict(),
            "inputs": self.inputs.tolist(),
            "outputs_permuted": self.outputs_permuted.tolist(),
            "permutation": self.permutation.tolist(),
            "centers": m.centers.tolist(),
            "shift": m.standardizer.shift.tolist(),
            "scale": m.standardizer.scale.tolist(),
            "value_mean": m.value_mean.tolist(),
            "coefficients": m.coefficients.tolist(),
            "rank": m.rank,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "Encoder":
        d = json.loads(text)
        if d.get("format") != "kernelfin.encoder":
            raise ValueError("not an encoder snapshot")
        if d.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported encoder snapshot version {d.get('version')}")
        arr = lambda key: np.asarray(d[key], dtype=float)  # noqa: E731
        interp = KernelInterpolant(
            KernelSpec.from_dict(d["spec"]),
            arr("centers").reshape(len(d["centers"]), -1),
            Standardizer(arr("shift"), arr("scale")),
            arr("value_mean"),
            arr("coefficients").reshape(len(d["coefficients"]), -1),
            int(d["rank"]),
        )
        n = len(d["inputs"])
        return cls(
            interp,
            arr("inputs").reshape(n, -1),
            arr("outputs_permuted").reshape(n, -1),
            np.asarray(d["permutation"], dtype=np.intp),
            d["strategy"],
        )


def _standardized(A: np.ndarray) -> np.ndarray:
    return Standardizer.fit(A)(A)


def pairing_permutation(spec: KernelSpec, inputs, outputs, strategy: str, **sp_options) -> np.ndarray:
    inputs = as_points(inputs, "inputs")
    outputs = as_points(outputs, "outputs")
    n = inputs.shape[0]
    if strategy == "none":
        return np.arange(n)
    if strategy == "ot_mmd":
        if inputs.shape[1] != outputs.shape[1]:
            raise ValueError(
                "ot_mmd needs inputs and outputs of the same dimension "
                f"({inputs.shape[1]} != {outputs.shape[1]}); use strategy='sp_smooth' "
                "for maps between spaces of different dimension"
            )
        cost = mmd_cost(KernelSpec(spec.family), _standardized(outputs), _standardized(inputs))
        sigma, _ = lap_solve(cost)
        return sigma
    if strategy == "sp_smooth":
        sigma, _ = sp_solve(spec, inputs, outputs, **sp_options)
        return sigma
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def fit_encoder(
    spec: KernelSpec,
    inputs,
    outputs,
    strategy: str = "none",
    *,
    standardize: bool = True,
    sp_budget: int = 1000,
    sp_restarts: int | None = None,
    sp_fidelity: float = 1e4,
    seed: int = 0,
) -> Encoder:
    """Fit ``p -> outputs[sigma]`` with ``sigma`` chosen by ``strategy``."""
    inputs = as_points(inputs, "inputs")
    outputs = as_points(outputs, "outputs")
    if inputs.shape[0] != outputs.shape[0]:
        raise ValueError(f"{inputs.shape[0]} inputs but {outputs.shape[0]} outputs")
    sigma = pairing_permutation(
        spec, inputs, outputs, strategy, budget=sp_budget, seed=seed, restarts=sp_restarts,
        fidelity=sp_fidelity,
    )
    permuted = outputs[sigma]
    interp = fit_interpolant(spec, inputs, permuted, standardize=standardize)
    return Encoder(interp, inputs, permuted, np.asarray(sigma, dtype=np.intp), strategy)


def apply(encoder: Encoder, query) -> np.ndarray:
    return encoder.interpolant.predict(query)


def fit_generator(spec: KernelSpec, samples, latent: LatentSpec) -> Encoder:
    """Encoder from latent draws to ``samples``, paired by the OT permutation.

    With ``identity_passthrough`` the latent source rows are the inputs and
    no permutation is applied.
    """
    samples = as_points(samples, "samples")
    n = samples.shape[0]
    if latent.kind == "identity_passthrough":
        src = latent.draw(n)
        return fit_encoder(spec, src, samples, "none")
    if latent.dimension != samples.shape[1]:
        raise ValueError(
            f"latent dimension {latent.dimension} != sample dimension {samples.shape[1]}"
        )
    return fit_encoder(spec, latent.draw(n), samples, "ot_mmd")


def generate(encoder: Encoder, latent: LatentSpec, n: int) -> np.ndarray:
    """``n`` samples ``encoder(eta)`` with ``eta`` drawn from ``latent``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if latent.dimension != encoder.input_dim:
        raise ValueError(
            f"latent dimension {latent.dimension} != encoder input dimension {encoder.input_dim}"
        )
    if n == 0:
        return np.zeros((0, encoder.output_dim))
    if latent.kind == "identity_passthrough":
        if n > encoder.outputs_permuted.shape[0]:
            raise ValueError("identity_passthrough cannot replay more rows than were fitted")
        return encoder.outputs_permuted[:n].copy()
    return apply(encoder, latent.draw(n))


def _check_in_box(X: np.ndarray, x: np.ndarray, inflate: float = 0.1):
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = inflate * (hi - lo)
    if np.any(x < lo - pad) or np.any(x > hi + pad):
        warnings.warn(
            "condition lies outside the training range; kernel extrapolation may be unreliable",
            ExtrapolationWarning,
            stacklevel=3,
        )
        return False
    return True


@dataclass(frozen=True)
class ConditionalSampler:
    """Fitted generator of ``Y | X = x``.

    ``x_encoder`` maps data ``X`` to its latent coordinates and ``decoder``
    maps a full latent ``(eta_x, eta_y)`` to ``Y``.  Both share one
    permutation pairing latent draws to the joint sample ``(X, Y)``.
    """

    x_encoder: Encoder | None  # None for the trivial map eta_x = x
    decoder: Encoder
    latent: LatentSpec
    X: np.ndarray
    dim_x: int
    dim_y: int

    def latent_x(self, condition) -> np.ndarray:
        x = np.asarray(condition, dtype=float).reshape(1, -1)
        if x.shape[1] != self.dim_x:
            raise ValueError(f"condition has dimension {x.shape[1]}, expected {self.dim_x}")
        if self.x_encoder is None:
            return x[0]
        return apply(self.x_encoder, x)[0]

    def sample(self, condition, n: int, seed: int | None = None) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        x = np.asarray(condition, dtype=float).ravel()
        eta_x = self.latent_x(x)
        _check_in_box(self.X, x)
        if n == 0:
            return np.zeros((0, self.dim_y))
        seed = self.latent.seed + 1 if seed is None else seed
        rng = np.random.default_rng(seed)
        y_latent = LatentSpec(_y_kind(self.latent.kind), self.dim_y, seed)
        eta_y = y_latent.draw(n, rng)
        query = np.hstack([np.broadcast_to(eta_x, (n, eta_x.size)), eta_y])
        return apply(self.decoder, query)


def _y_kind(kind: str) -> str:
    return "uniform_cube" if kind == "identity_passthrough" else kind


def fit_conditional_sampler(
    spec: KernelSpec,
    X,
    Y,
    latent: LatentSpec | None = None,
    *,
    x_weight: float = 16.0,
) -> ConditionalSampler:
    """Pair latent draws with the joint sample and fit both encoders.

    Pairing minimizes the kernel discrepancy on standardized coordinates
    with the ``X``-block stretched by ``x_weight``.  Large weights push the
    coupling towards a triangular (Knothe-Rosenblatt) map, so the latent
    ``x``-part depends on ``X`` alone and the ``y``-part carries the
    conditional rank of ``Y``; ``x_weight=1`` is the plain joint transport.
    """
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    n, dx = X.shape
    dy = Y.shape[1]
    if Y.shape[0] != n:
        raise ValueError(f"X has {n} rows but Y has {Y.shape[0]}")
    if n < 2:
        raise ValueError("conditional sampling needs at least two joint observations")
    if latent is None:
        latent = LatentSpec("uniform_cube", dx + dy, 0)
    rng = np.random.default_rng(latent.seed)
    if latent.kind == "identity_passthrough":
        eps = np.hstack([X, LatentSpec("uniform_cube", dy).draw(n, rng)])
    else:
        if latent.dimension != dx + dy:
            raise ValueError(
                f"latent dimension {latent.dimension} != dim X + dim Y = {dx + dy}"
            )
        eps = latent.draw(n, rng)
    w = np.r_[np.full(dx, float(x_weight)), np.ones(dy)]
    joint = _standardized(np.hstack([X, Y])) * w
    lat = _standardized(eps) * w
    cost = mmd_cost(KernelSpec(spec.family), lat, joint)
    sigma, _ = lap_solve(cost)
    eps_paired = eps[sigma]  # latent row paired with data row n
    x_encoder = None
    if latent.kind != "identity_passthrough":
        x_encoder = Encoder(
            fit_interpolant(spec, X, eps_paired[:, :dx]), X, eps_paired[:, :dx], sigma, "ot_mmd"
        )
    decoder = Encoder(fit_interpolant(spec, eps_paired, Y), eps_paired, Y, sigma, "ot_mmd")
    return ConditionalSampler(x_encoder, decoder, latent, X, dx, dy)


def conditional_sampler(
    spec: KernelSpec,
    X,
    Y,
    latent: LatentSpec | None,
    condition,
    n: int,
    *,
    x_weight: float = 16.0,
) -> np.ndarray:
    """``n`` draws of ``Y | X = condition``; deterministic in ``latent.seed``."""
    sampler = fit_conditional_sampler(spec, X, Y, latent, x_weight=x_weight)
    return sampler.sample(condition, n)
