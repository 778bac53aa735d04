import math

import numpy as np
import pytest

from voxsel.data import fit_standardizer
from voxsel.nnet import TrainConfig
from voxsel.select import (
    RankingResult,
    SubsetResult,
    chi2_statistic,
    cfs_merit,
    feature_correlations,
    mutual_information_bits,
    nca_objective,
    rank,
    rank_chi2,
    rank_mrmr,
    rank_nca,
    rank_pcc,
    rank_relieff,
    rank_tvfs,
    select_cfs,
    select_sfs,
    top_k,
)

from conftest import make_grouped
from oracles import brute_cfs, planted


def naive_relieff(X, y, k):
    """Loop-level ReliefF: every sample once, Manhattan distance, range-scaled diffs."""
    n, d = X.shape
    span = [max(X[:, f]) - min(X[:, f]) for f in range(d)]
    prior = {c: float(np.mean(y == c)) for c in set(y.tolist())}
    W = [0.0] * d
    for i in range(n):
        dist = [(sum(abs(X[i, f] - X[j, f]) for f in range(d)), j) for j in range(n) if j != i]
        for c in prior:
            near = [j for _, j in sorted(dist) if y[j] == c][:k]
            for f in range(d):
                diff = 0.0 if span[f] == 0 else sum(abs(X[i, f] - X[j, f]) for j in near) / span[f]
                if c == y[i]:
                    W[f] -= diff / (n * k)
                else:
                    W[f] += prior[c] / (1 - prior[y[i]]) * diff / (n * k)
    return np.array(W)


def naive_mi_bits(x, y, bins):
    lo, hi = min(x), max(x)
    b = [0 if hi == lo else min(int((v - lo) / (hi - lo) * bins), bins - 1) for v in x]
    n = len(x)
    mi = 0.0
    for a in set(b):
        for c in set(y):
            pab = sum(1 for u, v in zip(b, y) if u == a and v == c) / n
            if pab:
                mi += pab * math.log2(pab / ((b.count(a) / n) * (list(y).count(c) / n)))
    return mi


def naive_nca_value(w, X, y, lam, sigma):
    n = X.shape[0]
    total = 0.0
    for i in range(n):
        k = [0.0 if j == i else math.exp(-sum(w[f] ** 2 * abs(X[i, f] - X[j, f]) for f in range(X.shape[1])) / sigma)
             for j in range(n)]
        total += sum(k[j] for j in range(n) if y[j] == y[i]) / sum(k)
    return total / n - lam * float(np.sum(w**2))


class TestFilters:
    def test_chi2_hand_value(self):
        assert chi2_statistic(np.array([[10, 0], [0, 10]])) == pytest.approx(20.0, abs=1e-12)

    def test_chi2_label_copy_first_and_constant_zero(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 80)
        X = np.column_stack([rng.standard_normal(80), np.ones(80), y + 0.0, rng.standard_normal(80)])
        r = rank_chi2(X, y)
        assert r.order[0] == 2
        assert r.scores[1] == 0.0

    def test_pcc_hand_value(self):
        r = rank_pcc(np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0, 0, 1, 1]))
        assert r.scores[0] == pytest.approx(2 / math.sqrt(5), abs=1e-12)
        assert r.scores[0] == pytest.approx(0.8944, abs=1e-4)

    def test_pcc_sign_irrelevant(self):
        y = np.array([0, 1, 0, 1, 1])
        r = rank_pcc(np.column_stack([y, 1 - y, np.ones(5)]).astype(float), y)
        np.testing.assert_allclose(r.scores, [1.0, 1.0, 0.0], atol=1e-12)

    def test_tvfs(self):
        X = np.array([[0.0, 1, 5], [0, 2, 5], [4, 3, 5], [4, 4, 5]])
        r = rank_tvfs(X)
        assert r.scores[0] == pytest.approx(4.0)
        assert r.scores[2] == 0.0
        r2 = rank_tvfs(np.column_stack([X[:, 1], 10 * X[:, 1]]))
        assert r2.order.tolist() == [1, 0]

    def test_affine_invariance(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((60, 6))
        y = (X[:, 2] + rng.standard_normal(60) > 0).astype(int)
        Xa = X * rng.uniform(0.5, 3, 6) + rng.uniform(-5, 5, 6)
        for fn in (rank_pcc, rank_chi2):
            assert fn(X, y).order.tolist() == fn(Xa, y).order.tolist()

    def test_ties_order_by_index(self):
        r = rank_tvfs(np.ones((4, 5)))
        assert r.order.tolist() == [0, 1, 2, 3, 4]

    def test_top_k(self):
        r = RankingResult("x", np.array([7, 2, 5, 0, 1, 3, 4, 6]), np.arange(8.0)[::-1], {})
        assert top_k(r, 2) == [7, 2]
        assert sorted(top_k(r, 8)) == list(range(8))
        with pytest.raises(ValueError):
            top_k(r, 9)


class TestRelieff:
    def test_matches_naive(self):
        rng = np.random.default_rng(1)
        y = np.repeat([0, 1], [15, 25])
        X = rng.standard_normal((40, 5))
        X[:, 1] += 1.5 * y
        np.testing.assert_allclose(rank_relieff(X, y, k=3).scores, naive_relieff(X, y, 3), atol=1e-12)

    def test_separating_feature_and_constant(self):
        rng = np.random.default_rng(2)
        y = np.repeat([0, 1], 20)
        X = rng.standard_normal((40, 10))
        X[:, 4] = np.where(y == 1, 5.0, -5.0) + 0.1 * rng.standard_normal(40)
        X[:, 7] = 3.0
        r = rank_relieff(X, y)
        assert r.order[0] == 4 and r.scores[7] == 0.0

    def test_duplicate_equal_weights(self):
        X, y = planted(3, n=40, noise=4)
        X = np.column_stack([X, X[:, 0]])
        s = rank_relieff(X, y).scores
        assert abs(s[0] - s[-1]) < 1e-12

    def test_small_class(self):
        with pytest.raises(ValueError, match="k=10"):
            rank_relieff(np.zeros((15, 2)), np.array([0] * 10 + [1] * 5))


class TestMrmr:
    def test_mi_of_label_with_itself(self):
        y = np.array([0, 1] * 20)
        assert mutual_information_bits(y, y) == pytest.approx(1.0, abs=1e-12)

    def test_first_pick_is_max_relevance(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((60, 8))
        y = (X[:, 3] + X[:, 5] > 0).astype(int)
        r = rank_mrmr(X, y, top=3)
        mi = [naive_mi_bits(X[:, f].tolist(), y.tolist(), 10) for f in range(8)]
        assert r.order[0] == int(np.argmax(mi))
        np.testing.assert_allclose(r.extras["relevance"], mi, atol=1e-12)

    def test_duplicate_not_picked_twice(self):
        rng = np.random.default_rng(6)
        y = np.repeat([0, 1], 30)
        A = y + 0.3 * rng.standard_normal(60)
        C = 0.5 * y + rng.standard_normal(60)
        r = rank_mrmr(np.column_stack([A, A, C]), y, top=2)
        assert r.order[:2].tolist() == [0, 2]

    def test_is_permutation_with_consistent_scores(self):
        X, y = planted(0, noise=6)
        r = rank_mrmr(X, y, top=3)
        assert sorted(r.order.tolist()) == list(range(7))
        assert np.all(np.diff(r.scores[r.order]) < 0)


class TestNca:
    def test_objective_matches_naive(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((12, 3))
        y = rng.integers(0, 2, 12)
        w = rng.uniform(0.2, 1.5, 3)
        assert nca_objective(w, X, y, 0.1, 1.3, with_grad=False) == pytest.approx(
            naive_nca_value(w, X, y, 0.1, 1.3), abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((25, 5))
        y = rng.integers(0, 2, 25)
        w = rng.uniform(0.2, 1.5, 5)
        _, g = nca_objective(w, X, y, 0.04, 1.0)
        h = 1e-6
        fd = np.array([(nca_objective(w + h * e, X, y, 0.04, 1.0, False)
                        - nca_objective(w - h * e, X, y, 0.04, 1.0, False)) / (2 * h) for e in np.eye(5)])
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5

    def test_informative_weights_dominate(self):
        rng = np.random.default_rng(8)
        y = np.repeat([0, 1], 30)
        X = rng.standard_normal((60, 10))
        X[:, 0] += 3 * y
        X[:, 1] -= 3 * y
        s = rank_nca(X, y).scores
        assert min(s[0], s[1]) > max(s[2:])

    def test_heavy_regularization_zeroes_weights(self):
        X, y = planted(1, n=40, noise=5)
        r = rank_nca(X, y, lam=10.0)
        assert np.all(r.scores == 0.0)
        assert r.order.tolist() == list(range(6))

    def test_objective_increases(self):
        X, y = planted(2, n=40, noise=5)
        hist = rank_nca(X, y).extras["objective"]
        assert all(b > a for a, b in zip(hist, hist[1:]))


class TestCfs:
    def test_label_copy(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 50)
        X = np.column_stack([rng.standard_normal(50), y.astype(float), rng.standard_normal(50)])
        r = select_cfs(X, y)
        assert r.selected == (1,)
        assert r.criterion_trace[-1][1] == pytest.approx(1.0)

    def test_duplicate_kept_once(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, 80)
        a = y + 0.5 * rng.standard_normal(80)
        X = np.column_stack([a, a, rng.standard_normal(80)])
        best, arg = brute_cfs(X, y)
        r = select_cfs(X, y)
        assert r.selected == (0,) == arg

    def test_noise_gives_single_feature(self):
        # columns are orthogonal to y and nearly uncorrelated with one another
        rng = np.random.default_rng(2)
        y = np.repeat([0.0, 1.0], 32)
        X = rng.standard_normal((64, 6))
        X -= np.outer(y - y.mean(), (y - y.mean()) @ X) / ((y - y.mean()) @ (y - y.mean()))
        X[:, 3] += 0.3 * (y - 0.5)
        r = select_cfs(X, y)
        assert r.selected == (3,)

    def test_merit_formula(self):
        X, y = planted(3, n=60, noise=5)
        r_cf, r_ff = feature_correlations(X, y)
        R = np.abs(np.corrcoef(np.column_stack([X, y]), rowvar=False))
        for S in [(0,), (0, 2), (1, 3, 5)]:
            k = len(S)
            rff = R[np.ix_(S, S)][~np.eye(k, dtype=bool)].mean() if k > 1 else 0.0
            expect = k * R[list(S), -1].mean() / math.sqrt(k + k * (k - 1) * rff)
            assert cfs_merit(S, r_cf, r_ff) == pytest.approx(expect, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_exhaustive_search_finds_brute_optimum(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(3, 9))
        y = rng.integers(0, 2, 60).astype(float)
        X = rng.standard_normal((60, d)) + np.outer(y, rng.uniform(0, 1.5, d))
        best, arg = brute_cfs(X, y)
        r = select_cfs(X, y, max_stale=2**d)
        assert sorted(r.selected) == list(arg)
        assert r.criterion_trace[-1][1] == pytest.approx(best, abs=1e-12)

    def test_trace_improves(self):
        X, y = planted(4, n=60, noise=8)
        tr = select_cfs(X, y).criterion_trace
        assert all(b[1] > a[1] for a, b in zip(tr, tr[1:]))


class TestSfs:
    def test_perfect_feature_stops_at_one(self):
        d = make_grouped(n_subjects=40, n_features=5, informative=(0,), shift=8.0, seed=1)
        r = select_sfs(d, np.arange(d.n_samples))
        assert r.selected == (0,)
        assert r.criterion_trace == ((1, 1.0),)

    @staticmethod
    def _xor(seed, n_noise, n_subj=48):
        """Features 0 and 1 are an XOR pair: balanced per class, useless alone."""
        from voxsel.data import Dataset

        rng = np.random.default_rng(seed)
        base = make_grouped(n_subjects=n_subj, n_features=2 + n_noise, n_healthy=n_subj // 2,
                            informative=(), seed=seed)
        lab = (np.arange(n_subj) >= n_subj // 2).astype(int)
        a = np.concatenate([rng.permutation(np.repeat([0, 1], n_subj // 4)) for _ in range(2)])
        b = a ^ lab
        subj = np.repeat(np.arange(n_subj), 3)
        X = base.features.copy()
        X[:, 0] = 2 * a[subj] - 1 + 0.1 * rng.standard_normal(len(subj))
        X[:, 1] = 2 * b[subj] - 1 + 0.1 * rng.standard_normal(len(subj))
        return Dataset(X, base.labels, base.subject_ids, base.column_names, base.group_of)

    @pytest.mark.parametrize("seed", range(3))
    def test_xor_pair_selected_by_step_two(self, seed):
        d = self._xor(seed, n_noise=0)
        r = select_sfs(d, np.arange(d.n_samples))
        assert set(r.selected) == {0, 1}
        assert r.criterion_trace[-1] == (2, 1.0)

    @pytest.mark.parametrize("seed", [0, 1, 3])
    def test_follows_greedy_path_of_brute_table(self, seed):
        from voxsel.metrics import macro_f1
        from voxsel.nnet import predict_labels, train
        from voxsel.validate import stratified_holdout_by_person

        d = self._xor(seed, n_noise=3)
        cfg = TrainConfig("LM", hidden_units=10, max_epochs=100, rng_seed=0)
        plan = stratified_holdout_by_person(d, 0.75, rep_id=0, seed=0)
        std = fit_standardizer(d, plan.train_rows)
        Z = std.transform(d.features)
        tr, te = plan.train_rows, plan.test_rows

        def wrapper(cols):
            net = train(Z[np.ix_(tr, cols)], d.labels[tr], cfg)
            return macro_f1(d.labels[te], predict_labels(net, Z[np.ix_(te, cols)]))

        singles = [wrapper([f]) for f in range(5)]
        first = int(np.argmax(singles))
        pairs = {f: wrapper([first, f]) for f in range(5) if f != first}
        second = max(pairs, key=lambda f: (pairs[f], -f))
        r = select_sfs(d, np.arange(d.n_samples), cfg)
        assert r.selected[0] == first
        if pairs[second] > singles[first]:
            assert r.selected[1] == second
        else:
            assert r.selected == (first,)

    def test_cap(self):
        d = make_grouped(n_subjects=20, n_features=100, informative=(), seed=2)
        cfg = TrainConfig("LM", hidden_units=2, max_epochs=5)
        r = select_sfs(d, np.arange(d.n_samples), cfg, cap=3)
        assert len(r.selected) <= 3

    def test_cap_bound(self, grouped):
        with pytest.raises(ValueError):
            select_sfs(grouped, np.arange(grouped.n_samples), cap=51)


class TestDeterminismAndSerialization:
    @pytest.mark.parametrize("method", ["chi2", "pcc", "relieff", "mrmr", "nca"])
    def test_bit_identical(self, method):
        X, y = planted(9, n=40, noise=6)
        a, b = rank(method, X, y), rank(method, X, y)
        assert np.array_equal(a.order, b.order) and np.array_equal(a.scores, b.scores)
        assert sorted(a.order.tolist()) == list(range(7))

    def test_ranking_roundtrip(self):
        X, y = planted(0, n=40, noise=3)
        r = rank_pcc(X, y)
        back = RankingResult.from_dict(r.to_dict())
        assert np.array_equal(back.order, r.order)

    def test_subset_roundtrip(self):
        r = SubsetResult("cfs", (3, 1), ((1, 0.5), (2, 0.6)), {"max_stale": 5})
        back = SubsetResult.from_dict(r.to_dict())
        assert (back.method, back.selected, back.criterion_trace, back.params) == (
            r.method, r.selected, r.criterion_trace, r.params)

    def test_tvfs_needs_raw(self):
        with pytest.raises(ValueError):
            rank("tvfs", np.zeros((3, 2)), np.array([0, 1, 0]))

    def test_selectors_use_train_rows_only(self, grouped):
        s = fit_standardizer(grouped, range(30))
        assert s.mean.shape == (grouped.n_features,)
