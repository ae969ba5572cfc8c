"""Discretizing fitted posteriors into graphs and scoring them against truth.

Precision/recall/F1 are computed on the observed-observed adjacency block
only, the one block identifiable without permutation ambiguity.  The
latent-to-observed loadings are scored separately by the best
permutation-and-scale alignment.  A latent-blind ridge VAR baseline is
included as a sanity contrast.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import GroundTruth, ModelDims, TimeSeriesDataset, causal_matrix

EVALUATION_SCOPE = "observed-observed adjacency block only"


@dataclass
class MetricsReport:
    """Edge-recovery scores; aggregate runs also carry per-seed values and SDs."""

    precision: float
    recall: float
    f1: float
    true_positives: int = 0
    predicted_edges: int = 0
    actual_edges: int = 0
    precision_sd: float | None = None
    recall_sd: float | None = None
    f1_sd: float | None = None
    per_seed: list["MetricsReport"] = field(default_factory=list)


def extract_adjacency(edge_prob: np.ndarray, tau: float = 0.5,
                      dims: ModelDims | None = None) -> np.ndarray:
    """Threshold edge probabilities into a binary graph: edge iff prob > tau.

    When dims is given the latent-block constraints are re-imposed on the
    result (zero lower-left block, diagonal-only latent block).
    """
    P = np.asarray(edge_prob, dtype=float)
    out = (P > tau).astype(float)
    if dims is not None and dims.n > 0:
        m = dims.m
        out[m:, :m] = 0.0
        latent = out[m:, m:]
        out[m:, m:] = np.diag(np.diag(latent))
    return out


def prf1(predicted: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """Precision, recall, F1 of a predicted edge set against the true one.

    Both inputs are binary matrices of the same shape (the observed block);
    every position, including the diagonal, is a candidate edge.
    """
    P = np.asarray(predicted)
    G = np.asarray(truth)
    if P.shape != G.shape:
        raise ValidationError([f"shape mismatch: predicted {P.shape} vs truth {G.shape}"])
    pred = P != 0
    act = G != 0
    tp = int(np.sum(pred & act))
    n_pred = int(pred.sum())
    n_act = int(act.sum())
    precision = tp / n_pred if n_pred > 0 else 0.0
    if n_act > 0:
        recall = tp / n_act
    else:
        recall = 1.0 if n_pred == 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        true_positives=tp,
        predicted_edges=n_pred,
        actual_edges=n_act,
    )


MAX_LATENTS_FOR_MATCHING = 8


def match_latents(estimated: np.ndarray, truth: np.ndarray):
    """Best column permutation and per-column scale aligning estimate to truth.

    Exhaustive search over all n! permutations with closed-form least-squares
    scales; returns (permutation, scales, frobenius_distance) where
    permutation[j] is the estimated column assigned to truth column j.
    """
    E = np.asarray(estimated, dtype=float)
    G = np.asarray(truth, dtype=float)
    if E.shape != G.shape:
        raise ValidationError([f"shape mismatch: estimated {E.shape} vs truth {G.shape}"])
    n = E.shape[1]
    if n > MAX_LATENTS_FOR_MATCHING:
        raise ValidationError(
            [f"{n} latent columns exceed the exhaustive-search limit "
             f"{MAX_LATENTS_FOR_MATCHING}; skip latent evaluation"]
        )
    if n == 0:
        return (), np.zeros(0), 0.0
    best = None
    for perm in itertools.permutations(range(n)):
        scales = np.zeros(n)
        sq = 0.0
        for j in range(n):
            e = E[:, perm[j]]
            t = G[:, j]
            ee = float(e @ e)
            scales[j] = float(e @ t) / ee if ee > 0 else 0.0
            r = scales[j] * e - t
            sq += float(r @ r)
        if best is None or sq < best[2]:
            best = (perm, scales, sq)
    perm, scales, sq = best
    return perm, scales, float(np.sqrt(sq))


def baseline_var_ols(dataset: TimeSeriesDataset, ridge: float = 0.0,
                     tau_w: float = 0.1):
    """Latent-blind lag-1 least squares: X(t) ~ B X(t-1), thresholded on |B|.

    Returns (B, adjacency).  Ridge regularization is optional; with ridge=0 a
    singular Gram matrix is an error suggesting ridge > 0.
    """
    X = dataset.X
    T, m = X.shape
    if T < m + 2:
        raise ValidationError([f"need T >= m + 2 (T={T}, m={m})"])
    if ridge < 0:
        raise ValidationError([f"ridge must be non-negative, got {ridge}"])
    if tau_w <= 0:
        raise ValidationError([f"tau_w must be positive, got {tau_w}"])
    gram = X[:-1].T @ X[:-1] + ridge * np.eye(m)
    if ridge == 0.0 and np.linalg.matrix_rank(gram) < m:
        raise ValidationError(
            ["normal equations are singular; retry with ridge > 0"]
        )
    rhs = X[:-1].T @ X[1:]
    B = np.linalg.solve(gram, rhs).T
    adjacency = (np.abs(B) > tau_w).astype(float)
    return B, adjacency


def score_against_truth(edge_prob_full: np.ndarray, w_mean_full: np.ndarray,
                        truth: GroundTruth, tau: float = 0.5):
    """Score a fitted posterior against ground truth.

    Returns (MetricsReport on the observed block, latent-match dict or None).
    The latent loadings are compared as thresholded-adjacency times posterior
    strength means; alignment is skipped when there are no latents or more
    than the exhaustive-search limit.
    """
    dims = truth.dims
    m, n = dims.m, dims.n
    pred = extract_adjacency(edge_prob_full, tau, dims)
    report = prf1(pred[:m, :m], truth.params.A[:m, :m])
    latent_match = None
    if 1 <= n <= MAX_LATENTS_FOR_MATCHING:
        estimated = pred[:m, m:] * w_mean_full[:m, m:]
        actual = causal_matrix(truth.params)[:m, m:]
        perm, scales, distance = match_latents(estimated, actual)
        latent_match = {
            "distance": float(distance),
            "permutation": list(perm),
            "scales": [float(s) for s in scales],
        }
    return report, latent_match


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Per-metric mean and sample standard deviation over seed replicates."""
    if not reports:
        raise ValidationError(["cannot aggregate an empty report list"])

    def stats(values):
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return mean, sd

    p_mean, p_sd = stats([r.precision for r in reports])
    r_mean, r_sd = stats([r.recall for r in reports])
    f_mean, f_sd = stats([r.f1 for r in reports])
    return MetricsReport(
        precision=p_mean,
        recall=r_mean,
        f1=f_mean,
        true_positives=sum(r.true_positives for r in reports),
        predicted_edges=sum(r.predicted_edges for r in reports),
        actual_edges=sum(r.actual_edges for r in reports),
        precision_sd=p_sd,
        recall_sd=r_sd,
        f1_sd=f_sd,
        per_seed=list(reports),
    )
