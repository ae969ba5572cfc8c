"""Log-density evaluation: mixture noise, trajectory likelihoods, parameter priors.

Everything stays in log space; probabilities are never materialized.  The
time-t = 1 terms evaluate the noise density at the raw initial values, so a
trajectory's log-likelihood is the sum over one residual matrix whose first
row is the trajectory's first row itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .model import (
    CausalParams,
    GmmNoiseParams,
    ModelDims,
    causal_matrix,
    free_adjacency_mask,
    free_weight_mask,
)

LOG_2PI = float(np.log(2.0 * np.pi))


def gmm_logpdf(x: float, pi, mu, sigma) -> float:
    """log sum_c pi_c N(x; mu_c, sigma_c^2), stabilized with log-sum-exp."""
    pi = np.asarray(pi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not (pi.shape == mu.shape == sigma.shape):
        raise ValidationError(["pi, mu, sigma must have equal lengths"])
    if np.any(sigma <= 0):
        raise ValidationError(["sigma must be strictly positive"])
    with np.errstate(divide="ignore"):
        comp = np.log(pi) - np.log(sigma) - 0.5 * LOG_2PI - (x - mu) ** 2 / (2.0 * sigma**2)
    return float(logsumexp(comp))


def gmm_logpdf_rows(R: np.ndarray, noise: GmmNoiseParams) -> np.ndarray:
    """Elementwise mixture log-density of a (T x v) residual matrix.

    Column i of R is scored under noise row i.  Returns a (T x v) matrix.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[1] != noise.rows:
        raise ValidationError(
            [f"residual matrix shape {R.shape} does not match {noise.rows} noise rows"]
        )
    with np.errstate(divide="ignore"):
        log_pi = np.log(noise.pi)
    comp = (
        log_pi[None, :, :]
        - np.log(noise.sigma)[None, :, :]
        - 0.5 * LOG_2PI
        - (R[:, :, None] - noise.mu[None, :, :]) ** 2 / (2.0 * noise.sigma[None, :, :] ** 2)
    )
    return logsumexp(comp, axis=2)


def residuals(X: np.ndarray, Z: np.ndarray | None, params: CausalParams) -> tuple[np.ndarray, np.ndarray]:
    """One-step prediction residuals for the observed and latent trajectories.

    Row 0 of each residual matrix holds the raw initial values; rows t >= 1
    hold value(t) minus the lag-1 prediction from the effective causal
    matrix.  Latent dynamics use only the diagonal latent block.
    """
    X = np.asarray(X, dtype=float)
    m = X.shape[1]
    if Z is None:
        Z = np.zeros((X.shape[0], 0))
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] != X.shape[0]:
        raise ValidationError(
            [f"X has {X.shape[0]} rows but Z has {Z.shape[0]}"]
        )
    k = m + Z.shape[1]
    if params.A.shape != (k, k):
        raise ValidationError(
            [f"params are {params.A.shape} but trajectories imply ({k}, {k})"]
        )
    B = causal_matrix(params)
    V = np.hstack([X, Z])
    pred = V[:-1] @ B.T
    Rx = X.copy()
    Rx[1:] = X[1:] - pred[:, :m]
    Rz = Z.copy()
    Rz[1:] = Z[1:] - pred[:, m:]
    return Rx, Rz


def obs_loglik(X: np.ndarray, Z: np.ndarray | None, params: CausalParams,
               noise: GmmNoiseParams) -> float:
    """Joint log-likelihood of the observed trajectory given params and latents."""
    Rx, _ = residuals(X, Z, params)
    return float(gmm_logpdf_rows(Rx, noise).sum())


def latent_logprior(Z: np.ndarray | None, params: CausalParams,
                    noise: GmmNoiseParams | None) -> float:
    """Joint log-density of the latent trajectory under its autoregressive prior."""
    if Z is None or np.asarray(Z).shape[1] == 0:
        return 0.0
    Z = np.asarray(Z, dtype=float)
    k = params.A.shape[0]
    n = Z.shape[1]
    m = k - n
    diag = np.diag(causal_matrix(params))[m:]
    Rz = Z.copy()
    Rz[1:] = Z[1:] - Z[:-1] * diag[None, :]
    return float(gmm_logpdf_rows(Rz, noise).sum())


@dataclass(frozen=True)
class PriorConfig:
    """Priors over the free causal parameters.

    Each field is a scalar applied uniformly, or a full (m+n) x (m+n) matrix
    read at the free positions (the channel for per-edge expert knowledge).
    """

    rho: float | np.ndarray = 0.5
    w_mean: float | np.ndarray = 0.0
    w_std: float | np.ndarray = 1.0

    def rho_at(self, mask: np.ndarray) -> np.ndarray:
        return _at(self.rho, mask)

    def w_mean_at(self, mask: np.ndarray) -> np.ndarray:
        return _at(self.w_mean, mask)

    def w_std_at(self, mask: np.ndarray) -> np.ndarray:
        return _at(self.w_std, mask)


def _at(value, mask: np.ndarray) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(int(mask.sum()), float(arr))
    if arr.shape != mask.shape:
        raise ValidationError(
            [f"per-entry prior shape {arr.shape} does not match mask {mask.shape}"]
        )
    return arr[mask]


def prior_logprob(params: CausalParams, prior: PriorConfig, dims: ModelDims) -> float:
    """Log-prior of (A, W) over the free entries: Bernoulli on A, Gaussian on W."""
    a_mask = free_adjacency_mask(dims)
    w_mask = free_weight_mask(dims)
    rho = prior.rho_at(a_mask)
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ValidationError(["prior rho must lie strictly inside (0, 1)"])
    w_mean = prior.w_mean_at(w_mask)
    w_std = prior.w_std_at(w_mask)
    if np.any(w_std <= 0):
        raise ValidationError(["prior w_std must be strictly positive"])
    a = params.A[a_mask]
    w = params.W[w_mask]
    bern = float(np.sum(a * np.log(rho) + (1.0 - a) * np.log1p(-rho)))
    gauss = float(
        np.sum(-np.log(w_std) - 0.5 * LOG_2PI - (w - w_mean) ** 2 / (2.0 * w_std**2))
    )
    return bern + gauss
