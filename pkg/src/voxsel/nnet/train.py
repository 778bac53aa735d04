from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..data import Standardizer
from .network import NetworkParams, forward, init_network, jacobian, loss_and_gradient
from .optimizers import ALGORITHMS, TrainingError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.  ``params`` overrides algorithm constants such as
    ``lr`` (GD family), ``mu0`` (LM) or ``delta0`` (RP)."""

    algorithm: str = "LM"
    hidden_units: int = 10
    max_epochs: int = 1000
    goal_mse: float = 0.0
    min_gradient: float = 1e-7
    params: Mapping[str, Any] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {sorted(ALGORITHMS)}")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        object.__setattr__(self, "params", dict(self.params))

    def replace(self, **kw) -> "TrainConfig":
        rec = asdict(self)
        rec.update(kw)
        return TrainConfig(**rec)

    def to_dict(self) -> dict:
        return asdict(self)


class _NetObjective:
    def __init__(self, X: np.ndarray, y: np.ndarray, hidden: int):
        self.X, self.y, self.hidden = X, y, hidden
        self.input_dim = X.shape[1]

    def _p(self, w) -> NetworkParams:
        return NetworkParams.from_flat(w, self.input_dim, self.hidden)

    def value_grad(self, w):
        return loss_and_gradient(self._p(w), self.X, self.y)

    def residual_jac(self, w):
        p = self._p(w)
        return forward(p, self.X) - self.y, jacobian(p, self.X)


@dataclass(frozen=True, eq=False)
class TrainedNetwork:
    params: NetworkParams
    feature_subset: tuple[int, ...]
    standardizer: Standardizer | None
    training_trace: tuple[float, ...]
    stop_reason: str
    config: TrainConfig

    def to_dict(self) -> dict:
        return {
            "format": "voxsel-network",
            "version": FORMAT_VERSION,
            "input_dim": self.params.input_dim,
            "hidden_units": self.params.hidden_units,
            "weights": self.params.flat().tolist(),
            "weight_order": ["W1 (hidden x input, row-major)", "b1", "W2", "b2"],
            "feature_subset": list(self.feature_subset),
            "standardizer": None if self.standardizer is None else self.standardizer.to_dict(),
            "training_trace": list(self.training_trace),
            "stop_reason": self.stop_reason,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "TrainedNetwork":
        if rec.get("format") != "voxsel-network" or rec.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 network record")
        p = NetworkParams.from_flat(np.asarray(rec["weights"]), rec["input_dim"], rec["hidden_units"])
        std = rec.get("standardizer")
        return cls(
            p,
            tuple(rec["feature_subset"]),
            None if std is None else Standardizer.from_dict(std),
            tuple(rec["training_trace"]),
            rec["stop_reason"],
            TrainConfig(**rec["config"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedNetwork":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train(
    X,
    y,
    cfg: TrainConfig,
    *,
    feature_subset=None,
    standardizer: Standardizer | None = None,
    w0: np.ndarray | None = None,
) -> TrainedNetwork:
    """Fit a network to already standardized, already subset inputs ``X``.

    ``feature_subset`` and ``standardizer`` are only recorded so that
    :func:`predict_labels` can later be applied to raw rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) with one label per row")
    if X.shape[0] < 2 or np.unique(y).size < 2:
        raise ValueError("training needs at least two samples covering both classes")
    obj = _NetObjective(X, y, cfg.hidden_units)
    if w0 is None:
        w0 = init_network(X.shape[1], cfg.hidden_units, cfg.rng_seed).flat()
    res = ALGORITHMS[cfg.algorithm](
        obj,
        w0,
        max_epochs=cfg.max_epochs,
        goal_mse=cfg.goal_mse,
        min_gradient=cfg.min_gradient,
        **cfg.params,
    )
    subset = tuple(range(X.shape[1])) if feature_subset is None else tuple(int(i) for i in feature_subset)
    return TrainedNetwork(
        NetworkParams.from_flat(res.w, X.shape[1], cfg.hidden_units),
        subset,
        standardizer,
        tuple(res.trace),
        res.stop_reason,
        cfg,
    )


def predict_proba(t: TrainedNetwork, X_raw) -> np.ndarray:
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim != 2:
        raise ValueError("expected a 2-D row matrix")
    Z = X_raw if t.standardizer is None else t.standardizer.transform(X_raw)
    return forward(t.params, Z[:, list(t.feature_subset)])


def predict_labels(t: TrainedNetwork, X_raw) -> np.ndarray:
    """Class 1 (PD) when the network output is >= 0.5."""
    return (predict_proba(t, X_raw) >= 0.5).astype(int)


__all__ = [
    "TrainConfig",
    "TrainedNetwork",
    "TrainingError",
    "predict_labels",
    "predict_proba",
    "train",
]
