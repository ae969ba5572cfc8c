"""Core domain types and block-structure rules for the latent-confounded VAR(1) model.

The joint system stacks m observed series and n latent series into one
(m+n)-dimensional lag-1 vector autoregression.  The effective transition
matrix is the elementwise product A * W of a binary adjacency matrix and a
real strength matrix, both carrying the same block structure:

    [ A_xx  A_xz ]      rows/cols 0..m-1   observed
    [  0    A_zz ]      rows/cols m..m+n-1 latent

Latents are exogenous (zero lower-left block) and evolve independently of
each other (A_zz diagonal, with a nonzero self-coefficient per latent).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError, SpectralRadiusError

# Numerical floor below which a latent self-coefficient counts as zero.
LATENT_SELF_MIN = 1e-12


@dataclass(frozen=True)
class ModelDims:
    """Problem sizes: m observed series, n latent series, T timesteps, C mixture components."""

    m: int
    n: int
    T: int
    C: int

    def __post_init__(self):
        problems = []
        if self.m < 1:
            problems.append(f"m must be >= 1, got {self.m}")
        if self.n < 0:
            problems.append(f"n must be >= 0, got {self.n}")
        if self.T < 2:
            problems.append(f"T must be >= 2, got {self.T}")
        if self.C < 1:
            problems.append(f"C must be >= 1, got {self.C}")
        if problems:
            raise ValidationError(problems)

    @property
    def k(self) -> int:
        """Total system size m + n."""
        return self.m + self.n


@dataclass(frozen=True)
class CausalParams:
    """Adjacency matrix A (binary) and strength matrix W (real), both (m+n) x (m+n).

    Rows/columns 0..m-1 index observed variables, m..m+n-1 latent ones.
    """

    A: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        self.A.setflags(write=False)
        self.W.setflags(write=False)


@dataclass(frozen=True)
class GmmNoiseParams:
    """Per-variable Gaussian-mixture noise parameters: one (rows x C) block per group.

    ``pi`` rows live on the probability simplex, ``sigma`` is strictly positive.
    """

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        pi = np.atleast_2d(np.asarray(self.pi, dtype=float))
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        problems = []
        if not (pi.shape == mu.shape == sigma.shape):
            problems.append(
                f"pi/mu/sigma shapes differ: {pi.shape}, {mu.shape}, {sigma.shape}"
            )
        else:
            rowsums = pi.sum(axis=1)
            bad = np.where(np.abs(rowsums - 1.0) > 1e-9)[0]
            if bad.size:
                problems.append(f"pi rows {bad.tolist()} do not sum to 1")
            if np.any(pi < 0):
                problems.append("pi has negative entries")
            if np.any(sigma <= 0):
                problems.append("sigma has non-positive entries")
        if problems:
            raise ValidationError(problems)
        for arr in (pi, mu, sigma):
            arr.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.pi.shape[0]

    @property
    def C(self) -> int:
        return self.pi.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Ground-truth noise description: a named family plus GMM parameters when applicable.

    ``family`` is one of "gmm", "uniform", "chisq".  The analytic families
    (uniform on (0,1), chi-square with 2 degrees of freedom) carry no
    per-variable parameters.
    """

    family: str
    observed: GmmNoiseParams | None = None
    latent: GmmNoiseParams | None = None

    def __post_init__(self):
        if self.family not in ("gmm", "uniform", "chisq"):
            raise ValidationError([f"unknown noise family {self.family!r}"])
        if self.family == "gmm" and self.observed is None:
            raise ValidationError(["gmm noise requires observed-group parameters"])


@dataclass(frozen=True)
class GroundTruth:
    """True generating model: causal parameters, noise spec, dims, and (once simulated) the latent path."""

    params: CausalParams
    noise: NoiseSpec
    dims: ModelDims
    Z: np.ndarray | None = None
    rescale: float = 1.0

    def __post_init__(self):
        validate_block_structure(self.params, self.dims).raise_if_invalid()
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float)
            if Z.shape != (self.dims.T, self.dims.n):
                raise ValidationError(
                    [f"Z shape {Z.shape} != (T={self.dims.T}, n={self.dims.n})"]
                )
            object.__setattr__(self, "Z", Z)
            Z.setflags(write=False)


@dataclass(frozen=True)
class TimeSeriesDataset:
    """A T x m observation matrix with variable names and optional ground truth."""

    X: np.ndarray
    names: list[str] = field(default_factory=list)
    truth: GroundTruth | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValidationError([f"X must be 2-d, got shape {X.shape}"])
        if not np.all(np.isfinite(X)):
            raise ValidationError(["X contains non-finite entries"])
        object.__setattr__(self, "X", X)
        X.setflags(write=False)
        if not self.names:
            object.__setattr__(self, "names", [f"X{i+1}" for i in range(X.shape[1])])
        elif len(self.names) != X.shape[1]:
            raise ValidationError(
                [f"{len(self.names)} names for {X.shape[1]} columns"]
            )

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass
class ValidationResult:
    """Outcome of a structural check: empty ``violations`` means valid."""

    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError(self.violations)


def validate_block_structure(params: CausalParams, dims: ModelDims) -> ValidationResult:
    """Check A and W against the exogenous-latent block constraints.

    Returns a ValidationResult listing every violated constraint; raises
    ValidationError only for outright shape mismatches.
    """
    m, n, k = dims.m, dims.n, dims.k
    A, W = params.A, params.W
    if A.shape != (k, k) or W.shape != (k, k):
        raise ValidationError(
            [f"A shape {A.shape} and W shape {W.shape} must both be ({k}, {k})"]
        )
    violations = []
    if not np.all(np.isin(A, (0.0, 1.0))):
        bad = np.argwhere(~np.isin(A, (0.0, 1.0)))[:5]
        violations.append(f"A entries not in {{0,1}} at {bad.tolist()}")
    if n > 0:
        if np.any(A[m:, :m] != 0) or np.any(W[m:, :m] != 0):
            rows, cols = np.nonzero(
                (A[m:, :m] != 0) | (W[m:, :m] != 0)
            )
            where = list(zip((rows + m).tolist(), cols.tolist()))[:5]
            violations.append(
                f"lower-left latent-to-observed block must be zero, nonzero at {where}"
            )
        Azz = A[m:, m:]
        off = ~np.eye(n, dtype=bool)
        if np.any(Azz[off] != 0):
            violations.append("latent block A_zz must be diagonal")
        if np.any(W[m:, m:][off] != 0):
            violations.append("latent block W_zz must be diagonal")
        prod = np.diag(Azz) * np.diag(W[m:, m:])
        missing = np.where(np.abs(prod) <= LATENT_SELF_MIN)[0]
        if missing.size:
            violations.append(
                "latent self-loop missing: A_ii * W_ii == 0 for latent index(es) "
                f"{(missing + m).tolist()}"
            )
    return ValidationResult(violations)


def causal_matrix(params: CausalParams) -> np.ndarray:
    """Effective transition matrix: the elementwise (Hadamard) product A * W."""
    return params.A * params.W


def spectral_radius(M: np.ndarray, tol: float = 1e-9) -> float:
    """Largest eigenvalue magnitude of a square real matrix.

    Computed by dense eigendecomposition (exact to LAPACK precision, well
    below any tol of interest here); tol is kept for contract compatibility
    and must be positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError([f"matrix must be square, got shape {M.shape}"])
    if not np.all(np.isfinite(M)):
        raise ValidationError(["matrix contains non-finite entries"])
    if tol <= 0:
        raise ValidationError([f"tol must be positive, got {tol}"])
    if M.shape[0] == 0:
        return 0.0
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise SpectralRadiusError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eigs)))


def free_adjacency_mask(dims: ModelDims) -> np.ndarray:
    """Boolean (k x k) mask of adjacency entries that are free to learn.

    The observed rows (A_xx and A_xz blocks) are free; the latent rows are
    pinned (zero lower-left, identity diagonal).
    """
    mask = np.zeros((dims.k, dims.k), dtype=bool)
    mask[: dims.m, :] = True
    return mask


def free_weight_mask(dims: ModelDims) -> np.ndarray:
    """Boolean (k x k) mask of strength entries that are free to learn.

    Observed rows plus the latent self-coefficients on the diagonal.
    """
    mask = free_adjacency_mask(dims)
    for i in range(dims.m, dims.k):
        mask[i, i] = True
    return mask
