"""Feature rankers and subset searches.

Rankers return a :class:`RankingResult` whose ``order`` is a permutation of
all feature indices, best first; equal scores are ordered by ascending index.
Unless stated otherwise inputs are standardized training rows.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numba
import numpy as np
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RankingResult:
    method: str
    order: np.ndarray
    scores: np.ndarray
    params: Mapping[str, Any] = field(default_factory=dict)
    extras: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self, top: int | None = None) -> dict:
        return {
            "method": self.method,
            "params": dict(self.params),
            "order": [int(i) for i in self.order],
            "scores": [float(s) for s in self.scores],
            "selected": None if top is None else [int(i) for i in self.order[:top]],
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "RankingResult":
        return cls(rec["method"], np.asarray(rec["order"], dtype=int),
                   np.asarray(rec["scores"], dtype=float), dict(rec.get("params", {})))


@dataclass(frozen=True, eq=False)
class SubsetResult:
    method: str
    selected: tuple[int, ...]  # in the order features were added
    criterion_trace: tuple[tuple[int, float], ...]
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": dict(self.params),
            "order": list(self.selected),
            "scores": [c for _, c in self.criterion_trace],
            "selected": sorted(self.selected),
            "criterion_trace": [list(t) for t in self.criterion_trace],
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "SubsetResult":
        return cls(rec["method"], tuple(rec["order"]),
                   tuple((int(k), float(v)) for k, v in rec["criterion_trace"]),
                   dict(rec.get("params", {})))


def order_by_score(scores: np.ndarray) -> np.ndarray:
    """Indices by decreasing score, ties by ascending index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(scores.size), -scores))


def _ranking(method: str, scores: np.ndarray, **params) -> RankingResult:
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise SelectionError(f"{method}: non-finite scores")
    return RankingResult(method, order_by_score(scores), scores, params)


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} disagree")
    return X, y


def top_k(r: RankingResult, k: int) -> list[int]:
    if not 1 <= k <= len(r.order):
        raise ValueError(f"k must be in [1, {len(r.order)}], got {k}")
    return [int(i) for i in r.order[:k]]


# -- univariate filters ----------------------------------------------------


def chi2_statistic(table: np.ndarray) -> float:
    """Pearson chi-square of a contingency table; empty rows/columns ignored."""
    O = np.asarray(table, dtype=float)
    n = O.sum()
    if n == 0:
        return 0.0
    E = np.outer(O.sum(axis=1), O.sum(axis=0)) / n
    mask = E > 0
    return float(np.sum((O[mask] - E[mask]) ** 2 / E[mask]))


def equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.arange(1, bins) / bins)
    return np.searchsorted(edges, x, side="right")


def rank_chi2(X, y, bins: int = 10) -> RankingResult:
    X, y = _check_xy(X, y)
    if bins < 2 or X.shape[0] < bins:
        raise ValueError("need bins >= 2 and at least `bins` samples")
    classes, yc = np.unique(y, return_inverse=True)
    scores = np.empty(X.shape[1])
    for f in range(X.shape[1]):
        b = equal_frequency_bins(X[:, f], bins)
        table = np.zeros((bins, classes.size))
        np.add.at(table, (b, yc), 1)
        scores[f] = chi2_statistic(table)
    return _ranking("chi2", scores, bins=bins)


def rank_pcc(X, y) -> RankingResult:
    X, y = _check_xy(X, y)
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    return _ranking("pcc", abs_correlation_with(X, y.astype(float)))


def abs_correlation_with(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """|Pearson r| of each column with ``v``; 0 for constant columns."""
    Xc = X - X.mean(axis=0)
    vc = v - v.mean()
    den = np.sqrt((Xc * Xc).sum(axis=0) * (vc @ vc))
    num = Xc.T @ vc
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.minimum(np.abs(r), 1.0)


def rank_tvfs(X_raw) -> RankingResult:
    """Variance ranking.  Needs unstandardized values: after z-scoring every
    column has unit variance and the ranking degenerates to index order."""
    X_raw = np.asarray(X_raw, dtype=float)
    return _ranking("tvfs", X_raw.var(axis=0))


# -- ReliefF ---------------------------------------------------------------


def rank_relieff(X, y, k: int = 10, m: int | None = None, rng_seed: int = 0) -> RankingResult:
    """ReliefF with k nearest hits/misses under Manhattan distance.

    Feature differences are scaled by the column range so every weight lies
    in [-1, 1].  With ``m`` = n (default) each sample is an anchor exactly
    once and the seed is unused.
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    classes, counts = np.unique(y, return_counts=True)
    if k < 1:
        raise ValueError("k must be >= 1")
    if np.any(counts <= k):
        raise ValueError(f"every class needs more than k={k} members; counts {counts.tolist()}")
    m = n if m is None else int(m)
    if not 1 <= m <= n:
        raise ValueError("m must be in [1, n]")
    anchors = np.arange(n) if m == n else np.sort(np.random.default_rng(rng_seed).choice(n, m, replace=False))

    span = X.max(axis=0) - X.min(axis=0)
    scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
    prior = dict(zip(classes.tolist(), (counts / n).tolist()))
    members = {c: np.flatnonzero(y == c) for c in classes.tolist()}

    W = np.zeros(d)
    dist = cdist(X[anchors], X, metric="cityblock")
    for a, i in enumerate(anchors):
        ci = int(y[i])
        for c, idx in members.items():
            cand = idx[idx != i] if c == ci else idx
            near = cand[np.argsort(dist[a, cand], kind="stable")[:k]]
            contrib = np.abs(X[near] - X[i]).sum(axis=0) * scale
            if c == ci:
                W -= contrib
            else:
                W += contrib * (prior[c] / (1.0 - prior[ci]))
    W /= m * k
    return _ranking("relieff", W, k=k, m=m, rng_seed=rng_seed)


# -- mRMR ------------------------------------------------------------------


def equal_width_bins(X: np.ndarray, bins: int) -> np.ndarray:
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    B = np.floor((X - lo) / safe * bins).astype(np.int64)
    B = np.clip(B, 0, bins - 1)
    B[:, span == 0] = 0
    return B


def mutual_information_bits(a: np.ndarray, b: np.ndarray) -> float:
    """I(a; b) in bits for two discrete label vectors."""
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pa @ pb)[nz])))


def _mi_columns(B: np.ndarray, nb: int, v: np.ndarray, nv: int) -> np.ndarray:
    """I(B[:, f]; v) in bits for every column f at once."""
    n, d = B.shape
    codes = (np.arange(d, dtype=np.int64) * (nb * nv))[None, :] + B * nv + v[:, None]
    P = np.bincount(codes.ravel(), minlength=d * nb * nv).reshape(d, nb, nv) / n
    pb = P.sum(axis=2, keepdims=True)
    pv = P.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log2(P / (pb * pv)), 0.0)
    return terms.sum(axis=(1, 2))


def rank_mrmr(X, y, top: int | None = None, bins: int = 10) -> RankingResult:
    """Greedy mRMR, difference form: relevance minus mean redundancy.

    The first ``top`` positions come from the greedy search; the remainder
    follow by relevance.  ``scores`` are rank-derived (n - position) so that
    ``order`` stays sorted by score; the criterion values are kept in
    ``extras``.
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    top = d if top is None else int(top)
    if not 1 <= top <= d:
        raise ValueError(f"top must be in [1, {d}]")
    B = equal_width_bins(X, bins)
    _, yc = np.unique(y, return_inverse=True)
    relevance = _mi_columns(B, bins, yc, int(yc.max()) + 1)

    picked: list[int] = []
    gains: list[float] = []
    redundancy = np.zeros(d)
    available = np.ones(d, dtype=bool)
    for step in range(top):
        crit = relevance - (redundancy / step if step else 0.0)
        crit = np.where(available, crit, -np.inf)
        f = int(np.argmax(crit))  # first maximum = lowest index
        picked.append(f)
        gains.append(float(crit[f]))
        available[f] = False
        if step + 1 < top:
            redundancy += _mi_columns(B, bins, B[:, f], bins)
    rest = [int(i) for i in order_by_score(relevance) if available[i]]
    order = np.array(picked + rest, dtype=int)
    scores = np.empty(d)
    scores[order] = d - np.arange(d)
    return RankingResult(
        "mrmr", order, scores, {"top": top, "bins": bins},
        {"relevance": relevance, "criterion": np.array(gains)},
    )


# -- NCA feature weighting -------------------------------------------------


@numba.njit(cache=True)
def _weighted_l1(X, w2):
    n, d = X.shape
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for f in range(d):
                s += w2[f] * abs(X[i, f] - X[j, f])
            D[i, j] = s
            D[j, i] = s
    return D


@numba.njit(cache=True)
def _pair_sums(X, C):
    """sum_ij C_ij |x_if - x_jf| for each feature f."""
    n, d = X.shape
    out = np.zeros(d)
    for i in range(n):
        for j in range(i + 1, n):
            c = C[i, j] + C[j, i]
            if c != 0.0:
                for f in range(d):
                    out[f] += c * abs(X[i, f] - X[j, f])
    return out


def nca_objective(w, X, y, lam: float, sigma: float, with_grad: bool = True):
    """Regularized leave-one-out soft-neighbour accuracy and its gradient."""
    w = np.asarray(w, dtype=float)
    n = X.shape[0]
    D = _weighted_l1(X, w * w) / sigma
    np.fill_diagonal(D, np.inf)
    D -= D.min(axis=1, keepdims=True)
    K = np.exp(-D)
    P = K / K.sum(axis=1, keepdims=True)
    same = y[:, None] == y[None, :]
    p_correct = np.where(same, P, 0.0).sum(axis=1)
    value = p_correct.mean() - lam * float(w @ w)
    if not with_grad:
        return value
    C = p_correct[:, None] * P - np.where(same, P, 0.0)
    g = 2.0 * w * (_pair_sums(X, C) / (sigma * n) - lam)
    return value, g


def rank_nca(
    X,
    y,
    lam: float | None = None,
    sigma: float = 1.0,
    max_iters: int = 100,
    rng_seed: int = 0,
    step: float = 1.0,
    tol: float = 1e-10,
    zero_tol: float = 1e-12,
) -> RankingResult:
    """Diagonal NCA feature weighting by gradient ascent from w = 1.

    A step that fails to raise the objective is discarded and the step size
    halved.  Scores are squared weights; values below ``zero_tol`` are
    snapped to 0 so that fully regularized features fall back to index order.
    ``rng_seed`` is recorded but unused: the start point is deterministic.
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two samples")
    lam = 1.0 / n if lam is None else float(lam)
    w = np.ones(d)
    f, g = nca_objective(w, X, y, lam, sigma)
    history = [float(f)]
    it = 0
    while it < max_iters and step > 1e-12:
        it += 1
        w_new = w + step * g
        f_new, g_new = nca_objective(w_new, X, y, lam, sigma)
        if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
            raise SelectionError(
                f"nca: non-finite objective at iteration {it} (step={step:g}, |w|max={np.abs(w).max():g})"
            )
        if f_new > f:
            gain = f_new - f
            w, f, g = w_new, f_new, g_new
            history.append(float(f))
            if gain < tol * max(1.0, abs(f)):
                break
        else:
            step *= 0.5
    scores = w * w
    scores[scores < zero_tol] = 0.0
    r = _ranking("nca", scores, lam=lam, sigma=sigma, max_iters=max_iters, rng_seed=rng_seed)
    return RankingResult(r.method, r.order, r.scores, r.params,
                         {"weights": w, "objective": history, "iterations": it})


# -- subset searches -------------------------------------------------------


def cfs_merit(subset: Sequence[int], r_cf: np.ndarray, r_ff: np.ndarray) -> float:
    s = list(subset)
    k = len(s)
    if k == 0:
        return 0.0
    num = r_cf[s].sum()
    inter = r_ff[np.ix_(s, s)].sum() - np.trace(r_ff[np.ix_(s, s)])
    return float(num / math.sqrt(k + inter))


def feature_correlations(X, y) -> tuple[np.ndarray, np.ndarray]:
    """|r| feature-class and |r| feature-feature matrices (0 for constants)."""
    X, y = _check_xy(X, y)
    r_cf = abs_correlation_with(X, y.astype(float))
    Xc = X - X.mean(axis=0)
    norms = np.sqrt((Xc * Xc).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    Z = Xc / safe
    r_ff = np.abs(Z.T @ Z)
    r_ff[:, norms == 0] = 0.0
    r_ff[norms == 0, :] = 0.0
    np.fill_diagonal(r_ff, 1.0)
    return r_cf, np.minimum(r_ff, 1.0)


def select_cfs(X, y, max_stale: int = 5) -> SubsetResult:
    """Best-first forward search over correlation-based merit.

    Stops after ``max_stale`` consecutive expansions that do not improve the
    best merit found so far.
    """
    X, y = _check_xy(X, y)
    d = X.shape[1]
    if d < 1:
        raise ValueError("need at least one feature")
    r_cf, r_ff = feature_correlations(X, y)

    # heap entries: (-merit, subset tuple, relevance sum, pairwise sum)
    open_: list = [(-0.0, (), 0.0, 0.0)]
    seen: set[tuple[int, ...]] = {()}
    best: tuple[int, ...] = ()
    best_merit = 0.0
    trace: list[tuple[int, float]] = []
    stale = 0
    while open_ and stale < max_stale:
        _, subset, rel, pairs = heapq.heappop(open_)
        k = len(subset) + 1
        pair_add = r_ff[:, list(subset)].sum(axis=1) if subset else np.zeros(d)
        merits = (rel + r_cf) / np.sqrt(k + 2.0 * (pairs + pair_add))
        improved = False
        in_subset = set(subset)
        for f in order_by_score(merits):
            f = int(f)
            if f in in_subset:
                continue
            child = tuple(sorted(subset + (f,)))
            if child in seen:
                continue
            seen.add(child)
            m = float(merits[f])
            heapq.heappush(open_, (-m, child, rel + r_cf[f], pairs + pair_add[f]))
            if m > best_merit + 1e-12:
                best, best_merit, improved = child, m, True
        if improved:
            trace.append((len(best), best_merit))
            stale = 0
        else:
            stale += 1
    if not best:
        best = (int(order_by_score(r_cf)[0]),)
        trace.append((1, float(r_cf[best[0]])))
    ordered = tuple(sorted(best, key=lambda f: (-r_cf[f], f)))
    return SubsetResult("cfs", ordered, tuple(trace), {"max_stale": max_stale})


def select_sfs(d, rows, wrapper_config=None, cap: int = 50, rng_seed: int = 0,
               train_fraction: float = 0.75) -> SubsetResult:
    """Greedy forward wrapper search scored by macro-F1 of a compact network.

    ``rows`` are split once, by subject and stratified by class, into an
    internal fit/score pair.  The search stops when no candidate improves the
    score or ``cap`` features are selected.
    """
    from .data import fit_standardizer
    from .metrics import macro_f1
    from .nnet import TrainConfig, TrainingError, predict_labels, train
    from .validate import stratified_holdout_by_person

    if cap > 50 or cap < 1:
        raise ValueError("cap must be in [1, 50]")
    cfg = wrapper_config or TrainConfig("LM", hidden_units=10, max_epochs=100, rng_seed=rng_seed)
    inner = d.subset_rows(rows)
    plan = stratified_holdout_by_person(inner, train_fraction, rep_id=0, seed=rng_seed)
    std = fit_standardizer(inner, plan.train_rows)
    Ztr = std.transform(inner.features[plan.train_rows])
    Zte = std.transform(inner.features[plan.test_rows])
    ytr = inner.labels[plan.train_rows]
    yte = inner.labels[plan.test_rows]

    def score(cols: list[int]) -> float:
        try:
            net = train(Ztr[:, cols], ytr, cfg)
            return macro_f1(yte, predict_labels(net, Zte[:, cols]))
        except (TrainingError, ValueError, np.linalg.LinAlgError) as exc:
            logger.debug("sfs candidate %s failed: %s", cols, exc)
            return -np.inf

    selected: list[int] = []
    trace: list[tuple[int, float]] = []
    best = -np.inf
    while len(selected) < min(cap, inner.n_features):
        cand = [f for f in range(inner.n_features) if f not in selected]
        scores = np.array([score(selected + [f]) for f in cand])
        i = int(np.argmax(scores))
        if not scores[i] > best:
            break
        best = float(scores[i])
        selected.append(cand[i])
        trace.append((len(selected), best))
        if best >= 1.0:
            break
    return SubsetResult("sfs", tuple(selected), tuple(trace),
                        {"cap": cap, "rng_seed": rng_seed, "hidden_units": cfg.hidden_units,
                         "algorithm": cfg.algorithm, "max_epochs": cfg.max_epochs})


RANKERS = ("chi2", "pcc", "tvfs", "relieff", "mrmr", "nca")
SUBSET_METHODS = ("cfs", "sfs")
METHODS = RANKERS + SUBSET_METHODS + ("baseline",)


def rank(method: str, X, y, X_raw=None, **params) -> RankingResult:
    """Dispatch to a ranker by name."""
    if method == "chi2":
        return rank_chi2(X, y, **params)
    if method == "pcc":
        return rank_pcc(X, y, **params)
    if method == "tvfs":
        if X_raw is None:
            raise ValueError("tvfs needs the unstandardized matrix")
        return rank_tvfs(X_raw, **params)
    if method == "relieff":
        return rank_relieff(X, y, **params)
    if method == "mrmr":
        return rank_mrmr(X, y, **params)
    if method == "nca":
        return rank_nca(X, y, **params)
    raise ValueError(f"unknown ranking method {method!r}")
