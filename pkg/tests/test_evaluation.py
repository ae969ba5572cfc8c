import itertools

import numpy as np
import pytest

from latvar import (
    CausalParams,
    GenConfig,
    GmmNoiseParams,
    GroundTruth,
    ModelDims,
    NoiseSpec,
    TimeSeriesDataset,
    ValidationError,
    aggregate,
    baseline_var_ols,
    extract_adjacency,
    match_latents,
    prf1,
    simulate_series,
)
from latvar.evaluation import MetricsReport, score_against_truth


class TestExtractAdjacency:
    def test_all_on(self):
        P = np.full((3, 3), 0.9)
        assert np.array_equal(extract_adjacency(P, 0.5), np.ones((3, 3)))

    def test_tie_rule_strict(self):
        P = np.full((2, 2), 0.5)
        assert np.array_equal(extract_adjacency(P, 0.5), np.zeros((2, 2)))

    def test_elementwise_against_scalar_loop(self):
        rng = np.random.default_rng(0)
        P = rng.random((5, 5))
        tau = 0.37
        got = extract_adjacency(P, tau)
        for i in range(5):
            for j in range(5):
                assert got[i, j] == (1.0 if P[i, j] > tau else 0.0)

    def test_latent_blocks_reimposed(self):
        dims = ModelDims(m=2, n=2, T=5, C=1)
        P = np.full((4, 4), 0.9)
        got = extract_adjacency(P, 0.5, dims)
        assert np.array_equal(got[2:, :2], np.zeros((2, 2)))
        assert np.array_equal(got[2:, 2:], np.eye(2))

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(1)
        P = rng.random((6, 6))
        prev = extract_adjacency(P, 0.1)
        for tau in (0.3, 0.5, 0.7, 0.9):
            cur = extract_adjacency(P, tau)
            assert np.all(cur <= prev)
            prev = cur


class TestPrf1:
    def test_perfect_recovery(self):
        G = np.array([[1, 0], [1, 1]], dtype=float)
        rep = prf1(G, G)
        assert (rep.precision, rep.recall, rep.f1) == (1.0, 1.0, 1.0)

    def test_hand_counted_case(self):
        truth = np.zeros((3, 3))
        truth[0, 1] = truth[0, 2] = truth[1, 2] = truth[2, 0] = 1.0
        pred = np.zeros((3, 3))
        pred[0, 1] = 1.0  # correct
        pred[1, 0] = 1.0  # wrong
        rep = prf1(pred, truth)
        assert rep.precision == pytest.approx(0.5)
        assert rep.recall == pytest.approx(0.25)
        assert rep.f1 == pytest.approx(1.0 / 3.0)

    def test_empty_prediction_convention(self):
        truth = np.eye(3)
        rep = prf1(np.zeros((3, 3)), truth)
        assert (rep.precision, rep.recall, rep.f1) == (0.0, 0.0, 0.0)

    def test_empty_truth_and_prediction(self):
        rep = prf1(np.zeros((2, 2)), np.zeros((2, 2)))
        assert rep.precision == 0.0 and rep.recall == 1.0 and rep.f1 == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            prf1(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_permutation_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            pred = (rng.random((5, 5)) < 0.3).astype(float)
            truth = (rng.random((5, 5)) < 0.3).astype(float)
            perm = rng.permutation(5)
            a = prf1(pred, truth)
            b = prf1(pred[np.ix_(perm, perm)], truth[np.ix_(perm, perm)])
            assert (a.precision, a.recall, a.f1) == (b.precision, b.recall, b.f1)

    def test_subset_prediction_has_unit_precision(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            truth = (rng.random((4, 4)) < 0.5).astype(float)
            mask = rng.random((4, 4)) < 0.5
            pred = truth * mask
            if pred.sum() == 0:
                continue
            assert prf1(pred, truth).precision == 1.0

    def test_brute_force_oracle(self):
        # edge-set counting written out independently
        rng = np.random.default_rng(4)
        for _ in range(200):
            pred = (rng.random((6, 6)) < 0.25).astype(float)
            truth = (rng.random((6, 6)) < 0.25).astype(float)
            rep = prf1(pred, truth)
            pred_set = {(i, j) for i in range(6) for j in range(6) if pred[i, j]}
            true_set = {(i, j) for i in range(6) for j in range(6) if truth[i, j]}
            tp = len(pred_set & true_set)
            P = tp / len(pred_set) if pred_set else 0.0
            if true_set:
                R = tp / len(true_set)
            else:
                R = 1.0 if not pred_set else 0.0
            F = 2 * P * R / (P + R) if P + R > 0 else 0.0
            assert rep.precision == P and rep.recall == R and rep.f1 == pytest.approx(F)


class TestMatchLatents:
    def test_identity_match(self):
        rng = np.random.default_rng(5)
        E = rng.normal(size=(4, 3))
        perm, scales, dist = match_latents(E, E)
        assert perm == (0, 1, 2)
        assert np.allclose(scales, 1.0)
        assert dist == pytest.approx(0.0, abs=1e-12)

    def test_swap_and_negation_recovered(self):
        rng = np.random.default_rng(6)
        truth = rng.normal(size=(5, 2))
        est = truth[:, [1, 0]].copy()
        est[:, 0] *= -1.0
        perm, scales, dist = match_latents(est, truth)
        assert dist == pytest.approx(0.0, abs=1e-10)
        assert perm == (1, 0)
        # truth column 1 is matched by the negated estimate column
        assert scales[1] == pytest.approx(-1.0)
        assert scales[0] == pytest.approx(1.0)

    def test_matches_factorial_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(1, 4))
            truth = rng.normal(size=(6, n))
            est = rng.normal(size=(6, n))
            _, _, dist = match_latents(est, truth)
            best = np.inf
            for perm in itertools.permutations(range(n)):
                sq = 0.0
                for j in range(n):
                    e, t = est[:, perm[j]], truth[:, j]
                    s = (e @ t) / (e @ e)
                    sq += float(np.sum((s * e - t) ** 2))
                best = min(best, sq)
            assert dist == pytest.approx(np.sqrt(best), abs=1e-9)

    def test_invariant_to_premixed_permutation_scale(self):
        rng = np.random.default_rng(8)
        truth = rng.normal(size=(6, 3))
        est = rng.normal(size=(6, 3))
        _, _, d0 = match_latents(est, truth)
        perm = rng.permutation(3)
        scales = rng.uniform(0.5, 2.0, size=3) * rng.choice([-1, 1], size=3)
        mixed = est[:, perm] * scales[None, :]
        _, _, d1 = match_latents(mixed, truth)
        assert d1 == pytest.approx(d0, abs=1e-9)

    def test_too_many_latents_rejected(self):
        with pytest.raises(ValidationError, match="skip latent evaluation"):
            match_latents(np.zeros((2, 9)), np.zeros((2, 9)))


def _noisefree_dataset(seed=0, m=4, T=400):
    rng = np.random.default_rng(seed)
    A = np.zeros((m, m))
    W = np.zeros((m, m))
    A[0, 1] = A[2, 3] = A[3, 3] = 1.0
    W[0, 1] = 0.6
    W[2, 3] = -0.5
    W[3, 3] = 0.4
    gmm = GmmNoiseParams(pi=np.ones((m, 1)), mu=np.zeros((m, 1)),
                         sigma=np.full((m, 1), 1e-6))
    gt = GroundTruth(
        params=CausalParams(A=A, W=W),
        noise=NoiseSpec("gmm", observed=gmm),
        dims=ModelDims(m=m, n=0, T=T, C=1),
    )
    # tiny noise still seeds the system; give it a kick with a warm start
    ds = simulate_series(gt, T, rng, burn_in=0)
    return ds, A, W


class TestBaselineVarOls:
    def test_recovers_noise_free_system(self):
        # deterministic rollout from a random start: OLS solves it exactly
        rng = np.random.default_rng(9)
        m, T = 3, 12
        A = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        W = np.array([[0.4, 0.0, 0.5], [0.0, 0.0, 0.0], [0.0, 0.6, 0.0]])
        B_true = A * W
        X = np.empty((T, m))
        X[0] = rng.normal(size=m)
        for t in range(1, T):
            X[t] = B_true @ X[t - 1]
        ds = TimeSeriesDataset(X=X)
        B, adjacency = baseline_var_ols(ds, ridge=0.0, tau_w=0.1)
        assert np.max(np.abs(B - B_true)) < 1e-6
        assert np.array_equal(adjacency, A)
        rep = prf1(adjacency, A)
        assert rep.f1 == 1.0

    def test_pure_noise_yields_empty_graph(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(5000, 4))
            ds = TimeSeriesDataset(X=X)
            _, adjacency = baseline_var_ols(ds, ridge=0.0, tau_w=0.1)
            assert adjacency.sum() == 0

    def test_infinite_ridge_shrinks_to_zero(self):
        rng = np.random.default_rng(10)
        ds = TimeSeriesDataset(X=rng.normal(size=(50, 3)))
        B, _ = baseline_var_ols(ds, ridge=1e12, tau_w=0.1)
        assert np.max(np.abs(B)) < 1e-6

    def test_singular_without_ridge(self):
        X = np.zeros((20, 3))  # Gram matrix is singular
        X[:, 0] = 1.0
        ds = TimeSeriesDataset(X=X)
        with pytest.raises(ValidationError, match="ridge"):
            baseline_var_ols(ds, ridge=0.0)

    def test_needs_enough_rows(self):
        ds = TimeSeriesDataset(X=np.random.default_rng(0).normal(size=(4, 3)))
        with pytest.raises(ValidationError):
            baseline_var_ols(ds)


class TestAggregate:
    def test_single_report(self):
        rep = MetricsReport(precision=0.5, recall=0.25, f1=1 / 3)
        agg = aggregate([rep])
        assert agg.precision == 0.5 and agg.f1 == pytest.approx(1 / 3)
        assert agg.f1_sd == 0.0

    def test_two_reports_sample_sd(self):
        reports = [
            MetricsReport(precision=1.0, recall=1.0, f1=0.4),
            MetricsReport(precision=1.0, recall=1.0, f1=0.6),
        ]
        agg = aggregate(reports)
        assert agg.f1 == pytest.approx(0.5)
        assert agg.f1_sd == pytest.approx(0.1414, abs=1e-4)  # n-1 denominator

    def test_identical_reports_zero_sd(self):
        reports = [MetricsReport(precision=0.7, recall=0.7, f1=0.7)] * 4
        agg = aggregate(reports)
        assert agg.precision_sd == 0.0 and agg.recall_sd == 0.0 and agg.f1_sd == 0.0

    def test_empty_list_rejected(self):
        with pytest.raises(ValidationError):
            aggregate([])


def test_score_against_truth_latent_block():
    rng = np.random.default_rng(11)
    m, n = 3, 2
    k = m + n
    A = np.zeros((k, k))
    W = np.zeros((k, k))
    A[0, 1] = 1.0
    W[0, 1] = 0.7
    A[0, 3] = A[2, 4] = 1.0
    W[0, 3] = 0.5
    W[2, 4] = -0.4
    for i in (3, 4):
        A[i, i] = 1.0
        W[i, i] = 0.5
    truth = GroundTruth(
        params=CausalParams(A=A, W=W),
        noise=NoiseSpec("uniform"),
        dims=ModelDims(m=m, n=n, T=10, C=1),
        Z=rng.normal(size=(10, n)),
    )
    # edge probabilities that exactly encode the truth
    edge_prob = A * 0.98 + 0.01
    rep, latent = score_against_truth(edge_prob, W, truth, tau=0.5)
    assert rep.f1 == 1.0
    assert latent is not None
    assert latent["distance"] == pytest.approx(0.0, abs=1e-9)
