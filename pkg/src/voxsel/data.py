"""Loading, validation and slicing of the voice-features dataset.

The canonical input is the UCI Parkinson's speech-features table: one row per
recording, three recordings per subject, an ``id`` column naming the subject
and a ``class`` column (1 = PD, 0 = healthy).  After the id column is dropped
753 feature columns remain: gender followed by six acoustic groups.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

GENDER = "GENDER"
UNKNOWN = "UNKNOWN"
GROUP_TAGS = (GENDER, "G1", "G2", "G3", "G4", "G5", "G6")

GROUP_NAMES = {
    GENDER: "Gender",
    "G1": "Baseline",
    "G2": "Time-frequency",
    "G3": "MFCC",
    "G4": "Wavelet",
    "G5": "Vocal fold",
    "G6": "TQWT",
}


class DatasetError(ValueError):
    """Malformed input file (bad header, unparsable cell)."""


class IntegrityError(DatasetError):
    """Well-formed file whose content violates a dataset invariant."""


@dataclass(frozen=True)
class GroupMap:
    """Ordered column counts per feature group."""

    ranges: "OrderedDict[str, int]"

    @property
    def n_columns(self) -> int:
        return sum(self.ranges.values())

    def tags(self) -> np.ndarray:
        """Expand to one group tag per column, positionally."""
        out: list[str] = []
        for tag, count in self.ranges.items():
            out.extend([tag] * count)
        return np.array(out, dtype=object)


CANONICAL_GROUPS = GroupMap(
    OrderedDict(
        [(GENDER, 1), ("G1", 21), ("G2", 11), ("G3", 84), ("G4", 182), ("G5", 22), ("G6", 432)]
    )
)
CANONICAL_N_FEATURES = CANONICAL_GROUPS.n_columns  # 753

# Keywords found in the group banner row that precedes the header in the
# UCI distribution of the file.
_BANNER_KEYWORDS = (
    ("baseline", "G1"),
    ("intensity", "G2"),
    ("formant", "G2"),
    ("bandwidth", "G2"),
    ("time frequency", "G2"),
    ("mfcc", "G3"),
    ("wavelet", "G4"),
    ("tqwt", "G6"),
    ("vocal fold", "G5"),
)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus per-row subject identity and label.

    Arrays are made read-only on construction; the object can be shared
    between workers without copying.
    """

    features: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray
    column_names: tuple[str, ...]
    group_of: np.ndarray
    ragged: bool = False

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        sid = np.asarray(self.subject_ids).astype(str)
        groups = np.asarray(self.group_of, dtype=object)
        if X.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        n, p = X.shape
        if y.shape != (n,) or sid.shape != (n,):
            raise DatasetError(
                f"labels ({y.shape[0]}) and subject ids ({sid.shape[0]}) must match {n} rows"
            )
        if len(self.column_names) != p or groups.shape != (p,):
            raise DatasetError("column_names/group_of length must equal the feature count")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise IntegrityError(f"non-finite value at row {r}, column {self.column_names[c]!r}")
        if not np.all((y == 0) | (y == 1)):
            raise IntegrityError("labels must be 0 (healthy) or 1 (PD)")
        uniq, inverse = np.unique(sid, return_inverse=True)
        lo = np.full(len(uniq), 2)
        hi = np.full(len(uniq), -1)
        np.minimum.at(lo, inverse, y)
        np.maximum.at(hi, inverse, y)
        bad = np.flatnonzero(lo != hi)
        if bad.size:
            raise IntegrityError(f"subject {uniq[bad[0]]!r} has inconsistent labels")
        counts = np.bincount(inverse)
        ragged = bool(counts.size and counts.min() != counts.max())
        if ragged and not self.ragged:
            warnings.warn("subjects have differing numbers of samples", stacklevel=3)
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "labels", _freeze(y))
        object.__setattr__(self, "subject_ids", _freeze(sid))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "group_of", _freeze(groups))
        object.__setattr__(self, "ragged", ragged)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def subjects(self) -> np.ndarray:
        """Distinct subject ids, sorted."""
        return np.unique(self.subject_ids)

    def subject_labels(self) -> dict[str, int]:
        return {s: int(l) for s, l in zip(self.subject_ids, self.labels)}

    def rows_of(self, subjects: Iterable[str]) -> np.ndarray:
        """Row indices (ascending) belonging to the given subjects."""
        wanted = np.asarray(list(subjects)).astype(str)
        return np.flatnonzero(np.isin(self.subject_ids, wanted))

    def subset_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            self.features[rows],
            self.labels[rows],
            self.subject_ids[rows],
            self.column_names,
            self.group_of,
            ragged=True,
        )

    def summary(self) -> dict:
        labels = self.subject_labels()
        healthy = sum(1 for v in labels.values() if v == 0)
        tags, counts = np.unique(self.group_of.astype(str), return_counts=True)
        return {
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "n_subjects": len(labels),
            "healthy_subjects": healthy,
            "pd_subjects": len(labels) - healthy,
            "healthy_samples": int(np.sum(self.labels == 0)),
            "pd_samples": int(np.sum(self.labels == 1)),
            "ragged": self.ragged,
            "groups": {str(t): int(c) for t, c in zip(tags, counts)},
        }


def _parse_float(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if text == "" or text.lower() in {"na", "nan", "null", "?"}:
        raise IntegrityError(f"missing value at row {row}, column {column!r}")
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"malformed numeric cell {cell!r} at row {row}, column {column!r}") from None
    if not math.isfinite(value):
        raise IntegrityError(f"non-finite value at row {row}, column {column!r}")
    return value


def _banner_groups(banner: Sequence[str], names: Sequence[str]) -> list[str] | None:
    """Group tags from the UCI banner row; None if it cannot be mapped."""
    tags: list[str] = []
    current = None
    for text, name in zip(banner, names):
        low = text.strip().lower()
        if low:
            current = next((tag for key, tag in _BANNER_KEYWORDS if key in low), None)
            if current is None:
                return None
        if name.strip().lower() == "gender":
            tags.append(GENDER)
        else:
            tags.append(current if current is not None else UNKNOWN)
    return tags


def read_group_overrides(path: str | Path) -> dict[str, str]:
    """Two-column CSV ``column_name,group_tag``; a header row is optional."""
    out: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise DatasetError(f"group file line {i + 1}: expected 2 columns, got {len(row)}")
            name, tag = row[0].strip(), row[1].strip()
            if i == 0 and (name.lower(), tag.lower()) == ("column_name", "group_tag"):
                continue
            out[name] = tag
    return out


def assign_groups(
    column_names: Sequence[str],
    banner: Sequence[str] | None = None,
    overrides: Mapping[str, str] | None = None,
) -> np.ndarray:
    """Group tag for each feature column.

    Precedence: the banner row when every banner label is recognised, else
    positional assignment in the canonical group order when there are
    exactly 753 columns, else ``UNKNOWN``.  Explicit overrides win last.
    """
    p = len(column_names)
    tags: list[str] | None = None
    if banner is not None:
        tags = _banner_groups(banner, column_names)
        if tags is not None and UNKNOWN in tags:
            tags = None
    if tags is None and p == CANONICAL_N_FEATURES:
        tags = list(CANONICAL_GROUPS.tags())
    if tags is None:
        tags = [UNKNOWN] * p
    if tags is not None and p == CANONICAL_N_FEATURES:
        counts = {t: tags.count(t) for t in GROUP_TAGS}
        if counts != dict(CANONICAL_GROUPS.ranges):
            logger.warning("group counts %s differ from the canonical map", counts)
    if overrides:
        index = {n: i for i, n in enumerate(column_names)}
        for name, tag in overrides.items():
            if name not in index:
                raise DatasetError(f"group override names unknown column {name!r}")
            tags[index[name]] = tag
    return np.array(tags, dtype=object)


def load_dataset(
    path: str | Path,
    id_column: str = "id",
    label_column: str = "class",
    groups_file: str | Path | None = None,
) -> Dataset:
    """Read a comma-separated feature table.

    The header row must contain ``id_column`` and ``label_column``.  A single
    banner row above the header (as shipped by UCI) is tolerated and used for
    group assignment.  The id column is removed from the features, the label
    column becomes ``Dataset.labels``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and "".join(r).strip()]
    if not rows:
        raise DatasetError(f"{path}: empty file")

    banner = None
    header_at = None
    for i in range(min(2, len(rows))):
        stripped = [c.strip() for c in rows[i]]
        if id_column in stripped and label_column in stripped:
            header_at = i
            break
    if header_at is None:
        raise DatasetError(f"{path}: header must contain {id_column!r} and {label_column!r}")
    if header_at == 1:
        banner = rows[0]
    header = [c.strip() for c in rows[header_at]]
    id_at = header.index(id_column)
    label_at = header.index(label_column)
    feat_at = [j for j in range(len(header)) if j not in (id_at, label_at)]
    names = [header[j] for j in feat_at]

    body = rows[header_at + 1 :]
    X = np.empty((len(body), len(feat_at)))
    y = np.empty(len(body), dtype=int)
    sid: list[str] = []
    for r, row in enumerate(body):
        lineno = header_at + 2 + r
        if len(row) != len(header):
            raise DatasetError(f"row {lineno}: expected {len(header)} cells, found {len(row)}")
        sid.append(row[id_at].strip())
        if not sid[-1]:
            raise IntegrityError(f"missing value at row {lineno}, column {id_column!r}")
        label = _parse_float(row[label_at], lineno, label_column)
        if label not in (0.0, 1.0):
            raise IntegrityError(f"label {row[label_at]!r} at row {lineno} is not 0 or 1")
        y[r] = int(label)
        for c, j in enumerate(feat_at):
            X[r, c] = _parse_float(row[j], lineno, header[j])

    if banner is not None:
        banner = [banner[j] if j < len(banner) else "" for j in feat_at]
    overrides = read_group_overrides(groups_file) if groups_file else None
    groups = assign_groups(names, banner, overrides)
    return Dataset(X, y, np.array(sid), tuple(names), groups)


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column z-scoring fitted on training rows.

    Standard deviations use the population (1/n) convention.  Columns listed
    in ``passthrough`` (gender) are returned unscaled and zero-variance columns
    map to 0.
    """

    mean: np.ndarray
    sd: np.ndarray
    passthrough: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        sd = np.asarray(self.sd, dtype=float)
        pt = (
            np.zeros(mean.shape, dtype=bool)
            if self.passthrough is None
            else np.asarray(self.passthrough, dtype=bool)
        )
        object.__setattr__(self, "mean", _freeze(mean.copy()))
        object.__setattr__(self, "sd", _freeze(sd.copy()))
        object.__setattr__(self, "passthrough", _freeze(pt.copy()))

    @property
    def zero_variance(self) -> np.ndarray:
        return self.sd == 0.0

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.mean.shape[0]:
            raise ValueError(
                f"expected {self.mean.shape[0]} columns, got array of shape {X.shape}"
            )
        safe_sd = np.where(self.zero_variance, 1.0, self.sd)
        Z = (X - self.mean) / safe_sd
        Z[:, self.zero_variance] = 0.0
        Z[:, self.passthrough] = X[:, self.passthrough]
        return Z

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        X = Z * self.sd + self.mean
        X[:, self.passthrough] = Z[:, self.passthrough]
        return X

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "passthrough": np.flatnonzero(self.passthrough).tolist(),
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "Standardizer":
        mean = np.asarray(rec["mean"], dtype=float)
        pt = np.zeros(mean.shape, dtype=bool)
        pt[np.asarray(rec.get("passthrough", []), dtype=int)] = True
        return cls(mean, np.asarray(rec["sd"], dtype=float), pt)


def _check_rows(d: Dataset, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=int).ravel()
    if rows.size == 0:
        raise ValueError("row set is empty")
    if rows.min() < 0 or rows.max() >= d.n_samples:
        raise ValueError("row index out of range")
    return rows


def fit_standardizer(d: Dataset, rows) -> Standardizer:
    rows = _check_rows(d, rows)
    X = d.features[rows]
    return Standardizer(X.mean(axis=0), X.std(axis=0, ddof=0), d.group_of == GENDER)


def apply_standardizer(s: Standardizer, d: Dataset, rows=None) -> np.ndarray:
    X = d.features if rows is None else d.features[_check_rows(d, rows)]
    return s.transform(X)
