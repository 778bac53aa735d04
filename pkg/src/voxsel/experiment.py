"""Two-stage experiment: repeated selection + training, feature union,
retraining on the fixed union, model comparison and group reporting.

Seeds: stage ``s`` (1 or 2) plans its hold-out splits from
``derive_seed(master, s)`` with the repetition number as ``rep_id``; the
network initialisation of repetition ``r`` uses ``derive_seed(master, s, r)``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from .data import GROUP_TAGS, Dataset, GroupMap, fit_standardizer
from .metrics import EvaluationRecord, summarize
from .nnet import TrainConfig, TrainedNetwork, TrainingError, predict_labels, train
from .select import RANKERS, rank, select_cfs, select_sfs, top_k
from .validate import SplitPlan, derive_seed, stratified_holdout_by_person

logger = logging.getLogger(__name__)

STAGE1, STAGE2 = 1, 2


@dataclass
class RepOutcome:
    rep_id: int
    plan: SplitPlan
    selected: list[int]
    record: EvaluationRecord | None
    error: str | None = None
    network: TrainedNetwork | None = field(default=None, repr=False)

    @property
    def failed(self) -> bool:
        return self.record is None


@dataclass
class StageOneResult:
    method: str
    top: int | None
    cfg: TrainConfig
    reps: list[RepOutcome]
    method_params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def selected_sets(self) -> list[list[int]]:
        """Per successful repetition, features in selection order."""
        return [r.selected for r in self.reps if not r.failed]

    @property
    def records(self) -> list[EvaluationRecord]:
        return [r.record for r in self.reps if r.record is not None]

    @property
    def failures(self) -> list[tuple[int, str]]:
        return [(r.rep_id, r.error or "") for r in self.reps if r.failed]


def config_id(method: str, top: int | None, cfg: TrainConfig) -> str:
    return f"{cfg.algorithm}-{cfg.hidden_units}-{method}-{'all' if top is None else top}"


def select_on_train(
    d: Dataset, train_rows: np.ndarray, Ztr: np.ndarray, method: str, top: int | None,
    method_params: Mapping[str, Any], seed: int,
) -> list[int]:
    """Feature indices chosen from training rows only, best first."""
    ytr = d.labels[train_rows]
    params = dict(method_params)
    if method == "baseline":
        return list(range(d.n_features))
    if method in RANKERS:
        if top is None:
            raise ValueError(f"{method} needs a `top` cut-off")
        if method == "mrmr":
            params.setdefault("top", top)
        if method in ("relieff", "nca"):
            params.setdefault("rng_seed", seed)
        r = rank(method, Ztr, ytr, X_raw=d.features[train_rows], **params)
        return top_k(r, top)
    if method == "cfs":
        return list(select_cfs(Ztr, ytr, **params).selected)
    if method == "sfs":
        params.setdefault("cap", top or 50)
        params.setdefault("rng_seed", seed)
        return list(select_sfs(d, train_rows, **params).selected)
    raise ValueError(f"unknown selection method {method!r}")


def _one_rep(
    d: Dataset, plan: SplitPlan, method: str, top: int | None, method_params: Mapping[str, Any],
    cfg: TrainConfig, cid: str, seed: int, keep_network: bool, fixed: Sequence[int] | None = None,
) -> RepOutcome:
    std = fit_standardizer(d, plan.train_rows)
    Ztr = std.transform(d.features[plan.train_rows])
    ytr = d.labels[plan.train_rows]
    selected: list[int] = []
    try:
        if fixed is not None:
            selected = list(fixed)
        else:
            selected = select_on_train(d, plan.train_rows, Ztr, method, top, method_params, seed)
        net = train(Ztr[:, selected], ytr, cfg, feature_subset=selected, standardizer=std)
        pred = predict_labels(net, d.features[plan.test_rows])
    except (TrainingError, np.linalg.LinAlgError, FloatingPointError) as exc:
        logger.warning("repetition %d failed: %s", plan.rep_id, exc)
        return RepOutcome(plan.rep_id, plan, selected, None, str(exc))
    rec = EvaluationRecord.from_predictions(plan.rep_id, cid, d.labels[plan.test_rows], pred)
    return RepOutcome(plan.rep_id, plan, selected, rec, None, net if keep_network else None)


def _run(d, stage, method, top, method_params, cfg, reps, seed, train_fraction, jobs, keep_networks,
         cid, fixed=None):
    if reps < 1:
        raise ValueError("reps must be >= 1")
    plan_seed = derive_seed(seed, stage)
    tasks = []
    for r in range(reps):
        plan = stratified_holdout_by_person(d, train_fraction, rep_id=r, seed=plan_seed)
        rep_cfg = cfg.replace(rng_seed=derive_seed(seed, stage, r))
        tasks.append((d, plan, method, top, method_params, rep_cfg, cid, derive_seed(seed, stage, r),
                      keep_networks, fixed))
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_one_rep, *zip(*tasks)))
    else:
        out = [_one_rep(*t) for t in tasks]
    return sorted(out, key=lambda o: o.rep_id)


def stage1(
    d: Dataset,
    method: str,
    method_params: Mapping[str, Any] | None,
    top: int | None,
    cfg: TrainConfig,
    reps: int = 30,
    seed: int = 0,
    *,
    train_fraction: float = 0.75,
    jobs: int = 1,
    keep_networks: bool = False,
) -> StageOneResult:
    """Per repetition: person-stratified hold-out, standardize and select on
    the training part, train, score on the test part."""
    method_params = dict(method_params or {})
    outs = _run(d, STAGE1, method, top, method_params, cfg, reps, seed, train_fraction, jobs,
                keep_networks, config_id(method, top, cfg))
    return StageOneResult(method, top, cfg, outs, method_params)


def stage2(
    d: Dataset,
    union: "UnionOutcome | Sequence[int]",
    cfg: TrainConfig,
    reps: int = 30,
    seed: int = 0,
    *,
    train_fraction: float = 0.75,
    jobs: int = 1,
    cid: str | None = None,
) -> list[EvaluationRecord]:
    """Retrain on a fixed feature set over fresh hold-out splits.

    Failed repetitions are logged and left out of the returned records.
    """
    features = list(union.final_set if isinstance(union, UnionOutcome) else union)
    if not features:
        raise ValueError("empty feature set")
    outs = _run(d, STAGE2, "union", None, {}, cfg, reps, seed, train_fraction, jobs, False,
                cid or config_id("union", len(features), cfg), fixed=features)
    return [o.record for o in outs if o.record is not None]


# -- feature union ---------------------------------------------------------


@dataclass(frozen=True)
class UnionOutcome:
    final_set: tuple[int, ...]
    threshold: float
    frequencies: Mapping[int, float]
    status: str  # "in_range" | "closest_fallback"

    def to_dict(self) -> dict:
        return {
            "final_set": list(self.final_set),
            "threshold": self.threshold,
            "frequencies": {str(k): v for k, v in sorted(self.frequencies.items())},
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "UnionOutcome":
        return cls(tuple(int(i) for i in rec["final_set"]), float(rec["threshold"]),
                   {int(k): float(v) for k, v in rec["frequencies"].items()}, rec["status"])


def selection_frequencies(sets: Sequence[Sequence[int]]) -> dict[int, float]:
    if not sets:
        raise ValueError("no feature sets to merge")
    counts: dict[int, int] = {}
    for s in sets:
        for f in set(int(i) for i in s):
            counts[f] = counts.get(f, 0) + 1
    return {f: c / len(sets) for f, c in sorted(counts.items())}


def feature_union(sets: Sequence[Sequence[int]], lower: int = 30, upper: int = 50) -> UnionOutcome:
    """Merge per-repetition feature sets through a rising frequency threshold.

    The threshold starts at the smallest observed frequency (every feature
    used at least once) and climbs through the observed frequency values
    until at most ``upper`` features survive.  If that jump lands below
    ``lower``, the last oversized set is cut to ``upper`` features by
    frequency (ties by index) instead.
    """
    freq = selection_frequencies(sets)
    levels = sorted(set(freq.values()))

    def members(t: float) -> list[int]:
        return [f for f, v in freq.items() if v >= t]

    prev_t, prev = levels[0], members(levels[0])
    if len(prev) < lower:
        return UnionOutcome(tuple(prev), prev_t, freq, "closest_fallback")
    if len(prev) <= upper:
        return UnionOutcome(tuple(prev), prev_t, freq, "in_range")
    for t in levels[1:]:
        cur = members(t)
        if len(cur) <= upper:
            if len(cur) >= lower:
                return UnionOutcome(tuple(cur), t, freq, "in_range")
            break
        prev_t, prev = t, cur
    keep = sorted(prev, key=lambda f: (-freq[f], f))[:upper]
    return UnionOutcome(tuple(sorted(keep)), prev_t, freq, "closest_fallback")


# -- statistics ------------------------------------------------------------


@dataclass
class ComparisonSummary:
    configs: list[str]
    mean_scores: dict[str, float]
    mean_ranks: dict[str, float]
    friedman_statistic: float
    friedman_p: float
    significant: bool
    alpha: float
    pairwise: list[dict] = field(default_factory=list)
    best: str = ""
    indistinguishable_from_best: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "configs": self.configs,
            "mean_scores": self.mean_scores,
            "mean_ranks": self.mean_ranks,
            "friedman_statistic": self.friedman_statistic,
            "friedman_p": self.friedman_p,
            "significant": self.significant,
            "alpha": self.alpha,
            "pairwise": self.pairwise,
            "best": self.best,
            "indistinguishable_from_best": self.indistinguishable_from_best,
        }

    def render(self) -> str:
        lines = [f"Friedman chi2 = {self.friedman_statistic:.4f}, p = {self.friedman_p:.4g} "
                 f"({'significant' if self.significant else 'no significant difference'} at alpha={self.alpha})"]
        width = max(len(c) for c in self.configs)
        for c in sorted(self.configs, key=lambda c: -self.mean_ranks[c]):
            mark = "*" if c in self.indistinguishable_from_best else " "
            lines.append(f" {mark} {c:<{width}}  mean={self.mean_scores[c]:.4f}  rank={self.mean_ranks[c]:.3f}")
        for p in self.pairwise:
            lines.append(f"   {p['a']} vs {p['b']}: p={p['p']:.4g}, holm={p['p_holm']:.4g}")
        lines.append("* = not significantly different from the best")
        return "\n".join(lines)


def friedman(scores: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Tie-corrected Friedman statistic for an (n blocks x k treatments)
    table; larger scores get larger ranks."""
    scores = np.asarray(scores, dtype=float)
    n, k = scores.shape
    ranks = np.apply_along_axis(stats.rankdata, 1, scores)
    R = ranks.sum(axis=0)
    ties = 0.0
    for row in scores:
        _, t = np.unique(row, return_counts=True)
        ties += float(np.sum(t**3 - t))
    denom = 1.0 - ties / (n * k * (k * k - 1))
    if denom <= 0:
        return 0.0, 1.0, ranks.mean(axis=0)
    chi = (12.0 / (n * k * (k + 1)) * float(R @ R) - 3.0 * n * (k + 1)) / denom
    return chi, float(stats.chi2.sf(chi, k - 1)), ranks.mean(axis=0)


def holm(pvalues: Sequence[float]) -> list[float]:
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for i, j in enumerate(order):
        running = max(running, min(1.0, (m - i) * p[j]))
        adj[j] = running
    return adj.tolist()


def _wilcoxon_p(a: np.ndarray, b: np.ndarray) -> float:
    if np.all(a == b):
        return 1.0
    return float(stats.wilcoxon(a, b).pvalue)


def compare_models(records_by_config: Mapping[str, Sequence[float]], alpha: float = 0.05) -> ComparisonSummary:
    """Friedman test over paired repetitions, then Holm-corrected pairwise
    Wilcoxon signed-rank tests when the Friedman test rejects."""
    names = list(records_by_config)
    if len(names) < 2:
        raise ValueError("need at least two configurations")
    lengths = {len(records_by_config[c]) for c in names}
    if len(lengths) != 1:
        raise ValueError(f"unequal repetition counts: { {c: len(records_by_config[c]) for c in names} }")
    table = np.column_stack([np.asarray(records_by_config[c], dtype=float) for c in names])
    chi, p, mean_ranks = friedman(table)
    significant = p < alpha
    ranks = dict(zip(names, mean_ranks.tolist()))
    means = {c: float(table[:, i].mean()) for i, c in enumerate(names)}
    best = max(names, key=lambda c: (ranks[c], means[c]))
    summary = ComparisonSummary(names, means, ranks, float(chi), p, significant, alpha, best=best)
    if not significant:
        summary.indistinguishable_from_best = list(names)
        return summary
    pairs = [(i, j) for i in range(len(names)) for j in range(i + 1, len(names))]
    raw = [_wilcoxon_p(table[:, i], table[:, j]) for i, j in pairs]
    adj = holm(raw)
    summary.pairwise = [
        {"a": names[i], "b": names[j], "p": pr, "p_holm": pa} for (i, j), pr, pa in zip(pairs, raw, adj)
    ]
    keep = [best]
    for rec in summary.pairwise:
        other = rec["b"] if rec["a"] == best else rec["a"] if rec["b"] == best else None
        if other is not None and rec["p_holm"] >= alpha:
            keep.append(other)
    summary.indistinguishable_from_best = [c for c in names if c in keep]
    return summary


# -- group reporting -------------------------------------------------------


def group_distribution(
    sets: Sequence[Sequence[int]], gm: GroupMap | Sequence[str], top_n: int | None = None
) -> dict[str, float]:
    """Fraction of (set, feature) occurrences falling in each group.

    With ``top_n`` only the first ``top_n`` features of each set count, which
    requires the sets to be ordered (lists or tuples, not sets).
    """
    tags = gm.tags() if isinstance(gm, GroupMap) else np.asarray(gm, dtype=object)
    counts: dict[str, int] = {}
    for s in sets:
        if top_n is not None:
            if isinstance(s, (set, frozenset)):
                raise ValueError("top_n requires rank-ordered feature sequences")
            s = list(s)[:top_n]
        for f in s:
            if not 0 <= int(f) < len(tags):
                raise ValueError(f"feature index {f} out of range")
            t = str(tags[int(f)])
            counts[t] = counts.get(t, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return {}
    known = [t for t in GROUP_TAGS if t in counts]
    other = sorted(t for t in counts if t not in GROUP_TAGS)
    return {t: counts[t] / total for t in known + other}


# -- report ----------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: dict
    hidden_units: int
    method: str
    top: int | None
    stage1_summary: dict
    stage2_summary: dict
    total_features: int
    union: UnionOutcome
    distribution_all: dict[str, float]
    distribution_top30: dict[str, float]
    distribution_union: dict[str, float]
    failures: dict[str, list] = field(default_factory=dict)
    comparison: dict | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "hidden_units": self.hidden_units,
            "method": self.method,
            "top": self.top,
            "stage1": self.stage1_summary,
            "stage2": self.stage2_summary,
            "total_features": self.total_features,
            "union_status": self.union.status,
            "union_threshold": self.union.threshold,
            "distribution_all": self.distribution_all,
            "distribution_top30": self.distribution_top30,
            "distribution_union": self.distribution_union,
            "failures": self.failures,
            "comparison": self.comparison,
        }

    def table_row(self) -> dict:
        s = self.stage2_summary
        return {
            "units": self.hidden_units,
            "method": self.method,
            "selected": "-" if self.top is None else str(self.top),
            "f1": f"{s['f1_mean']:.3f} +/- {s['f1_sd']:.3f}",
            "mcc": f"{s['mcc_mean']:.3f} +/- {s['mcc_sd']:.3f}",
            "total": self.total_features,
        }

    def render(self) -> str:
        return render_table([self.table_row()])


def render_table(rows: Sequence[Mapping]) -> str:
    head = ("#units", "Method", "#Selected feat", "F1-Score", "MCC", "#total feat")
    keys = ("units", "method", "selected", "f1", "mcc", "total")
    cells = [head] + [tuple(str(r[k]) for k in keys) for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(head))]
    fmt = " | ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
    out += [fmt.format(*c) for c in cells[1:]]
    return "\n".join(out)


def build_report(
    d: Dataset, s1: StageOneResult, union: UnionOutcome, s2_records: Sequence[EvaluationRecord],
    config: dict, stage2_failures: Sequence[int] = (),
) -> ExperimentReport:
    sets = s1.selected_sets
    return ExperimentReport(
        config=config,
        hidden_units=s1.cfg.hidden_units,
        method=s1.method,
        top=s1.top,
        stage1_summary=summarize(s1.records),
        stage2_summary=summarize(s2_records),
        total_features=len(union.final_set),
        union=union,
        distribution_all=group_distribution(sets, d.group_of),
        distribution_top30=group_distribution(sets, d.group_of, top_n=30),
        distribution_union=group_distribution([list(union.final_set)], d.group_of),
        failures={"stage1": [r for r, _ in s1.failures], "stage2": list(stage2_failures)},
    )


def group_share(distribution: Mapping[str, float], groups: Sequence[str]) -> float:
    return float(sum(distribution.get(g, 0.0) for g in groups))
