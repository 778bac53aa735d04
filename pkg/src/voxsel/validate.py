"""Subject-grouped splitting schemes.

Every plan keeps all samples of a subject on one side of the split.
Random streams are derived from ``numpy.random.SeedSequence`` so that a
(seed, rep_id) pair always reproduces the same plan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset


@dataclass(frozen=True, eq=False)
class SplitPlan:
    train_rows: np.ndarray
    test_rows: np.ndarray
    scheme: str
    rep_id: int
    seed: int
    train_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "rep_id": self.rep_id,
            "seed": self.seed,
            "train_subjects": list(self.train_subjects),
            "test_subjects": list(self.test_subjects),
        }

    @classmethod
    def from_dict(cls, rec: dict, d: Dataset) -> "SplitPlan":
        train = tuple(str(s) for s in rec["train_subjects"])
        test = tuple(str(s) for s in rec["test_subjects"])
        return cls(d.rows_of(train), d.rows_of(test), rec["scheme"], int(rec["rep_id"]),
                   int(rec["seed"]), train, test)


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _plan(d: Dataset, train_subj, test_subj, scheme: str, rep_id: int, seed: int) -> SplitPlan:
    train_subj = tuple(sorted(str(s) for s in train_subj))
    test_subj = tuple(sorted(str(s) for s in test_subj))
    return SplitPlan(d.rows_of(train_subj), d.rows_of(test_subj), scheme, rep_id, seed,
                     train_subj, test_subj)


def grouped_kfold(d: Dataset, k: int, seed: int = 0) -> list[SplitPlan]:
    """K folds over subjects: shuffle subjects, then deal them round-robin."""
    subjects = d.subjects
    if k < 2 or k > len(subjects):
        raise ValueError(f"k must be in [2, {len(subjects)}], got {k}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    order = subjects[rng.permutation(len(subjects))]
    folds = [order[i::k] for i in range(k)]
    plans = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        plans.append(_plan(d, train, test, "grouped_kfold", i, seed))
    return plans


def n_train_subjects(n_subjects: int, train_fraction: float) -> int:
    """Nearest-integer share of subjects, leaving at least one for testing."""
    n = math.floor(train_fraction * n_subjects + 0.5)
    return max(1, min(n, n_subjects - 1))


def stratified_holdout_by_person(
    d: Dataset, train_fraction: float = 0.75, rep_id: int = 0, seed: int = 0
) -> SplitPlan:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    labels = d.subject_labels()
    rng = np.random.default_rng(np.random.SeedSequence([seed, rep_id]))
    train, test = [], []
    for cls in (0, 1):
        members = np.array(sorted(s for s, l in labels.items() if l == cls))
        if len(members) < 2:
            raise ValueError(f"class {cls} has {len(members)} subject(s); need at least 2")
        picked = rng.permutation(len(members))
        n = n_train_subjects(len(members), train_fraction)
        train.extend(members[picked[:n]])
        test.extend(members[picked[n:]])
    return _plan(d, train, test, "stratified_holdout", rep_id, seed)


def aggregate_subjects(d: Dataset, aggregator: str = "mean") -> Dataset:
    """One row per subject, features reduced by ``mean`` or ``median``."""
    reducers = {"mean": np.mean, "median": np.median}
    if aggregator not in reducers:
        raise ValueError(f"aggregator must be one of {sorted(reducers)}")
    subjects = d.subjects
    rows = [d.rows_of([s]) for s in subjects]
    X = np.vstack([reducers[aggregator](d.features[r], axis=0) for r in rows])
    y = np.array([d.labels[r[0]] for r in rows])
    return Dataset(X, y, subjects.copy(), d.column_names, d.group_of)


def summarized_loo(d: Dataset, aggregator: str = "mean") -> tuple[Dataset, list[SplitPlan]]:
    reduced = aggregate_subjects(d, aggregator)
    subjects = reduced.subjects
    plans = [
        _plan(reduced, np.delete(subjects, i), [s], "summarized_loo", i, 0)
        for i, s in enumerate(subjects)
    ]
    return reduced, plans


def check_plan(d: Dataset, plan: SplitPlan) -> None:
    """Raise AssertionError when a plan leaks a subject across the split."""
    train = set(d.subject_ids[plan.train_rows])
    test = set(d.subject_ids[plan.test_rows])
    assert not train & test, f"subjects on both sides: {sorted(train & test)[:5]}"
    assert not set(plan.train_rows) & set(plan.test_rows)


def plans_to_records(plans: Sequence[SplitPlan]) -> list[dict]:
    return [p.to_dict() for p in plans]
