"""Ground-truth model sampling and VAR(1) rollout for synthetic experiments.

Random graphs use edge probability d / (m+n) so the expected in-degree of an
observed node equals the configured average in-degree d.  Strengths are drawn
from a Gaussian whose mean and standard deviation are themselves drawn once
per matrix from configurable uniform ranges.  The effective transition matrix
is rescaled by a single scalar whenever its spectral radius exceeds the
stationarity cap, so every generated series is usable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigError, SimulationError, ValidationError
from .model import (
    CausalParams,
    GmmNoiseParams,
    GroundTruth,
    ModelDims,
    NoiseSpec,
    TimeSeriesDataset,
    causal_matrix,
    spectral_radius,
    validate_block_structure,
)

NOISE_FAMILIES = ("gmm", "uniform", "chisq")

# GMM ground-truth noise is drawn with these per-component ranges.
GMM_COMPONENTS = 5
GMM_MEAN_RANGE = (-2.0, 2.0)
GMM_SCALE_RANGE = (0.1, 1.0)

# Latent self-coefficients are kept away from zero so the latent block
# constraint A_ii * W_ii != 0 holds numerically.
LATENT_SELF_FLOOR = 0.05


@dataclass(frozen=True)
class GenConfig:
    """Settings for one synthetic ground-truth model and its rollout."""

    dims: ModelDims
    avg_in_degree: float = 1.25
    latent_ratio: float | None = None
    noise_family: str = "gmm"
    weight_mean_range: tuple[float, float] = (0.5, 0.9)
    weight_std_range: tuple[float, float] = (0.001, 0.01)
    stationarity_cap: float = 0.95
    burn_in: int = 100
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.avg_in_degree <= 0:
            problems.append(f"avg_in_degree must be positive, got {self.avg_in_degree}")
        if self.latent_ratio is not None and not 0.0 <= self.latent_ratio <= 1.0:
            problems.append(f"latent_ratio must lie in [0,1], got {self.latent_ratio}")
        if self.noise_family not in NOISE_FAMILIES:
            problems.append(f"noise_family must be one of {NOISE_FAMILIES}")
        for name in ("weight_mean_range", "weight_std_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                problems.append(f"{name} is not a valid interval: ({lo}, {hi})")
        if not 0.0 < self.stationarity_cap < 1.0:
            problems.append(f"stationarity_cap must lie in (0,1), got {self.stationarity_cap}")
        if self.burn_in < 0:
            problems.append(f"burn_in must be non-negative, got {self.burn_in}")
        if problems:
            raise ValidationError(problems)

    def resolved_dims(self) -> ModelDims:
        """Dims with n derived from latent_ratio when a ratio is given."""
        d = self.dims
        if self.latent_ratio is None:
            return d
        n = int(round(self.latent_ratio * d.m))
        return ModelDims(m=d.m, n=n, T=d.T, C=d.C)


def sample_noise(family: str, count: int, rng: np.random.Generator,
                 pi=None, mu=None, sigma=None) -> np.ndarray:
    """Draw ``count`` i.i.d. noise values from a named family.

    For "gmm" the per-variable mixture row (pi, mu, sigma) must be supplied;
    each draw picks a component index first, then samples that Gaussian.
    """
    if count < 1:
        raise ValidationError([f"count must be >= 1, got {count}"])
    if family == "uniform":
        return rng.uniform(0.0, 1.0, size=count)
    if family == "chisq":
        return rng.chisquare(2.0, size=count)
    if family == "gmm":
        if pi is None or mu is None or sigma is None:
            raise ValidationError(["gmm sampling requires pi, mu, sigma"])
        pi = np.asarray(pi, dtype=float)
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        comp = rng.choice(pi.size, size=count, p=pi)
        return rng.normal(mu[comp], sigma[comp])
    raise ValidationError([f"unknown noise family {family!r}"])


def _sample_gmm_rows(rows: int, rng: np.random.Generator) -> GmmNoiseParams | None:
    if rows == 0:
        return None
    pi = rng.dirichlet(np.ones(GMM_COMPONENTS), size=rows)
    mu = rng.uniform(*GMM_MEAN_RANGE, size=(rows, GMM_COMPONENTS))
    sigma = rng.uniform(*GMM_SCALE_RANGE, size=(rows, GMM_COMPONENTS))
    return GmmNoiseParams(pi=pi, mu=mu, sigma=sigma)


def sample_ground_truth(config: GenConfig, rng: np.random.Generator) -> GroundTruth:
    """Draw a random causal model honoring the block constraints and stationarity cap."""
    dims = config.resolved_dims()
    m, n, k = dims.m, dims.n, dims.k

    p_edge = config.avg_in_degree / k
    if p_edge > 1.0:
        raise DegenerateConfigError(
            f"edge probability exceeds 1 (d={config.avg_in_degree}, m+n={k}); "
            "use a smaller avg_in_degree or more variables"
        )

    A = np.zeros((k, k))
    A[:m, :] = (rng.random((m, k)) < p_edge).astype(float)

    w_mean = rng.uniform(*config.weight_mean_range)
    w_std = rng.uniform(*config.weight_std_range)
    W = np.zeros((k, k))
    W[:m, :] = rng.normal(w_mean, w_std, size=(m, k))

    if n > 0:
        idx = np.arange(m, k)
        A[idx, idx] = 1.0
        diag = rng.normal(w_mean, w_std, size=n)
        small = np.abs(diag) < LATENT_SELF_FLOOR
        diag[small] = np.where(diag[small] < 0, -LATENT_SELF_FLOOR, LATENT_SELF_FLOOR)
        W[idx, idx] = diag

    sr = spectral_radius(A * W)
    rescale = 1.0
    if sr > config.stationarity_cap:
        rescale = config.stationarity_cap / sr
        W = W * rescale
        if n > 0:
            idx = np.arange(m, k)
            diag = W[idx, idx]
            small = np.abs(diag) < LATENT_SELF_FLOOR
            diag[small] = np.where(diag[small] < 0, -LATENT_SELF_FLOOR, LATENT_SELF_FLOOR)
            W[idx, idx] = diag

    if config.noise_family == "gmm":
        noise = NoiseSpec(
            family="gmm",
            observed=_sample_gmm_rows(m, rng),
            latent=_sample_gmm_rows(n, rng),
        )
    else:
        noise = NoiseSpec(family=config.noise_family)

    params = CausalParams(A=A, W=W)
    validate_block_structure(params, dims).raise_if_invalid()
    return GroundTruth(params=params, noise=noise, dims=dims, rescale=rescale)


def _noise_matrix(noise: NoiseSpec, group: str, rows: int, steps: int,
                  rng: np.random.Generator) -> np.ndarray:
    """(steps x rows) noise draws for one variable group, column by column."""
    out = np.empty((steps, rows))
    gmm = noise.observed if group == "observed" else noise.latent
    for i in range(rows):
        if noise.family == "gmm":
            out[:, i] = sample_noise(
                "gmm", steps, rng, pi=gmm.pi[i], mu=gmm.mu[i], sigma=gmm.sigma[i]
            )
        else:
            out[:, i] = sample_noise(noise.family, steps, rng)
    return out


def simulate_series(gt: GroundTruth, T: int, rng: np.random.Generator,
                    burn_in: int = 100) -> TimeSeriesDataset:
    """Roll the VAR(1) forward burn_in + T steps and keep the final T rows.

    The first row is a pure noise draw; every later row is B @ previous plus
    fresh noise, with B the effective transition matrix.  The returned
    dataset carries the ground truth with the retained latent path attached.
    """
    if T < 2:
        raise ValidationError([f"T must be >= 2, got {T}"])
    dims = gt.dims
    m, n, k = dims.m, dims.n, dims.k
    B = causal_matrix(gt.params)
    steps = burn_in + T

    noise = np.empty((steps, k))
    noise[:, :m] = _noise_matrix(gt.noise, "observed", m, steps, rng)
    if n > 0:
        noise[:, m:] = _noise_matrix(gt.noise, "latent", n, steps, rng)

    V = np.empty((steps, k))
    V[0] = noise[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, steps):
            V[t] = B @ V[t - 1] + noise[t]
            if not np.all(np.isfinite(V[t])):
                raise SimulationError(
                    f"non-finite value at rollout step {t}; "
                    "the configuration appears non-stationary",
                    timestep=t,
                )

    kept = V[burn_in:]
    Z = kept[:, m:].copy()
    truth = GroundTruth(
        params=gt.params,
        noise=gt.noise,
        dims=ModelDims(m=m, n=n, T=T, C=dims.C),
        Z=Z,
        rescale=gt.rescale,
    )
    return TimeSeriesDataset(X=kept[:, :m].copy(), truth=truth)


def generate_dataset(config: GenConfig, seed: int | None = None) -> TimeSeriesDataset:
    """Convenience wrapper: one rng drives both model sampling and the rollout."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    gt = sample_ground_truth(config, rng)
    return simulate_series(gt, config.resolved_dims().T, rng, burn_in=config.burn_in)


def check_assumptions(gt: GroundTruth) -> list[str]:
    """Identifiability-related sanity checks; returns human-readable warnings.

    Checks that noises are plausibly non-Gaussian, that noise components are
    mutually independent by construction, and that the latent-to-observed
    loading block has full column rank.
    """
    warnings = []
    if gt.noise.family == "gmm":
        g = gt.noise.observed
        if g is not None and g.C == 1:
            warnings.append("observed noise is a single Gaussian component (non-Gaussianity assumption violated)")
        elif g is not None:
            spread_mu = np.ptp(g.mu, axis=1)
            spread_sd = np.ptp(g.sigma, axis=1)
            flat = np.where((spread_mu < 1e-9) & (spread_sd < 1e-9))[0]
            if flat.size:
                warnings.append(
                    f"observed noise rows {flat.tolist()} have identical mixture components (effectively Gaussian)"
                )
    n, m = gt.dims.n, gt.dims.m
    if n > 0:
        loading = causal_matrix(gt.params)[:m, m:]
        rank = int(np.linalg.matrix_rank(loading))
        if rank < min(m, n):
            warnings.append(
                f"latent-to-observed loading block has rank {rank} < {min(m, n)} (full-rank assumption violated)"
            )
    return warnings
