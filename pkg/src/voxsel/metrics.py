"""Confusion tables and imbalance-aware scores.

Degenerate denominators (no predicted or no actual positives) resolve to 0
for precision, recall, F1 and MCC so that a single bad fold never produces
NaN.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionTable:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionTable":
        """Same table with the other class taken as positive."""
        return ConfusionTable(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


def confusion(y_true, y_pred, positive: int = 1) -> ConfusionTable:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    t = y_true == positive
    p = y_pred == positive
    return ConfusionTable(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        fn=int(np.sum(t & ~p)),
        tn=int(np.sum(~t & ~p)),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def precision(c: ConfusionTable) -> float:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: ConfusionTable) -> float:
    return _ratio(c.tp, c.tp + c.fn)


def f1(c: ConfusionTable) -> float:
    p, r = precision(c), recall(c)
    return _ratio(2 * p * r, p + r)


def macro_f1_from_table(c: ConfusionTable) -> float:
    return 0.5 * (f1(c) + f1(c.swapped()))


def macro_f1(y_true, y_pred) -> float:
    """Mean of the per-class F1 scores, each class taken once as positive."""
    return macro_f1_from_table(confusion(y_true, y_pred, positive=1))


def mcc(c: ConfusionTable) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    factors = (c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn)
    if 0 in factors:
        return 0.0
    # exact integer arithmetic so that perfect agreement gives exactly +-1
    num = c.tp * c.tn - c.fp * c.fn
    den2 = math.prod(factors)
    if num * num == den2:
        return math.copysign(1.0, num)
    return max(-1.0, min(1.0, num / math.sqrt(den2)))


def accuracy(c: ConfusionTable) -> float:
    if c.total == 0:
        raise ValueError("accuracy of an empty confusion table")
    return (c.tp + c.tn) / c.total


@dataclass(frozen=True)
class EvaluationRecord:
    rep_id: int
    config_id: str
    tp: int
    fp: int
    fn: int
    tn: int
    macro_f1: float
    mcc: float
    accuracy: float

    @classmethod
    def from_predictions(cls, rep_id: int, config_id: str, y_true, y_pred) -> "EvaluationRecord":
        c = confusion(y_true, y_pred)
        return cls(
            rep_id=rep_id,
            config_id=config_id,
            tp=c.tp,
            fp=c.fp,
            fn=c.fn,
            tn=c.tn,
            macro_f1=macro_f1_from_table(c),
            mcc=mcc(c),
            accuracy=accuracy(c),
        )

    @property
    def table(self) -> ConfusionTable:
        return ConfusionTable(self.tp, self.fp, self.fn, self.tn)

    def to_dict(self) -> dict:
        return asdict(self)


RECORD_FIELDS = tuple(f.name for f in fields(EvaluationRecord))


def write_records(path: str | Path, records: Iterable[EvaluationRecord]) -> None:
    """CSV with one row per repetition; floats are written with repr precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([getattr(r, k) for k in RECORD_FIELDS])


def read_records(path: str | Path) -> list[EvaluationRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            out.append(
                EvaluationRecord(
                    rep_id=int(row["rep_id"]),
                    config_id=row["config_id"],
                    tp=int(row["tp"]),
                    fp=int(row["fp"]),
                    fn=int(row["fn"]),
                    tn=int(row["tn"]),
                    macro_f1=float(row["macro_f1"]),
                    mcc=float(row["mcc"]),
                    accuracy=float(row["accuracy"]),
                )
            )
    return out


def summarize(records: Sequence[EvaluationRecord]) -> dict:
    """Mean and population sd of macro-F1 and MCC across repetitions."""
    f = np.array([r.macro_f1 for r in records], dtype=float)
    m = np.array([r.mcc for r in records], dtype=float)
    if f.size == 0:
        return {"n": 0, "f1_mean": float("nan"), "f1_sd": float("nan"),
                "mcc_mean": float("nan"), "mcc_sd": float("nan")}
    return {
        "n": int(f.size),
        "f1_mean": float(f.mean()),
        "f1_sd": float(f.std()),
        "mcc_mean": float(m.mean()),
        "mcc_sd": float(m.std()),
    }
