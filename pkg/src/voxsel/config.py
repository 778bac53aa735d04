"""Experiment configuration files.

INI-style key/value text with one ``[experiment]`` section and optional
``[method_params]`` and ``[train_params]`` sections::

    [experiment]
    dataset = pd_speech_features.csv
    method = nca
    top = 50
    hidden_units = 50
    algorithm = LM
    reps = 30
    seed = 0

    [method_params]
    sigma = 1.0

Unknown sections or keys are rejected.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import inspect
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import select
from .nnet import ALGORITHMS, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    id_column: str = "id"
    label_column: str = "class"
    groups_file: str = ""
    method: str = "nca"
    top: int | None = 50
    hidden_units: int = 10
    algorithm: str = "LM"
    max_epochs: int = 1000
    goal_mse: float = 0.0
    min_gradient: float = 1e-7
    reps: int = 30
    stage2_reps: int | None = None
    seed: int = 0
    train_fraction: float = 0.75
    union_lower: int = 30
    union_upper: int = 50
    method_params: dict = field(default_factory=dict)
    train_params: dict = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            algorithm=self.algorithm,
            hidden_units=self.hidden_units,
            max_epochs=self.max_epochs,
            goal_mse=self.goal_mse,
            min_gradient=self.min_gradient,
            params=self.train_params,
            rng_seed=self.seed,
        )

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "ExperimentConfig":
        if self.method not in select.METHODS:
            raise ConfigError(f"method must be one of {list(select.METHODS)}, got {self.method!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {sorted(ALGORITHMS)}, got {self.algorithm!r}")
        if self.method in select.RANKERS and (self.top is None or self.top < 1):
            raise ConfigError(f"method {self.method!r} needs top >= 1")
        for name in ("hidden_units", "max_epochs", "reps", "union_lower", "union_upper"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.union_lower > self.union_upper:
            raise ConfigError("union_lower must not exceed union_upper")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        _check_params(self.method, self.method_params)
        return self


_METHOD_FUNCS = {
    "chi2": select.rank_chi2,
    "pcc": select.rank_pcc,
    "tvfs": select.rank_tvfs,
    "relieff": select.rank_relieff,
    "mrmr": select.rank_mrmr,
    "nca": select.rank_nca,
    "cfs": select.select_cfs,
    "sfs": select.select_sfs,
}
_POSITIONAL = {"X", "y", "X_raw", "d", "rows", "wrapper_config"}


def _check_params(method: str, params: dict) -> None:
    if method == "baseline":
        if params:
            raise ConfigError("baseline takes no method parameters")
        return
    allowed = set(inspect.signature(_METHOD_FUNCS[method]).parameters) - _POSITIONAL
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for {method}; allowed {sorted(allowed)}")


def _coerce(name: str, raw: str, typ: Any) -> Any:
    text = raw.strip()
    optional = "None" in str(typ)
    if optional and text.lower() in ("", "none", "all"):
        return None
    try:
        if "int" in str(typ) and "float" not in str(typ):
            return int(text)
        if "float" in str(typ):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {typ}") from None
    return text


def _literal(raw: str) -> Any:
    try:
        return ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError):
        return raw.strip()


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = set(cp.sections())
    extra = sections - {"experiment", "method_params", "train_params"}
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")
    if "experiment" not in sections:
        raise ConfigError("missing [experiment] section")
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    values: dict[str, Any] = {}
    for key, raw in cp["experiment"].items():
        if key not in types or key in ("method_params", "train_params"):
            raise ConfigError(f"unknown key {key!r} in [experiment]")
        values[key] = _coerce(key, raw, types[key])
    if "method_params" in sections:
        values["method_params"] = {k: _literal(v) for k, v in cp["method_params"].items()}
    if "train_params" in sections:
        values["train_params"] = {k: _literal(v) for k, v in cp["train_params"].items()}
    cfg = ExperimentConfig(**values)
    if base_dir is not None:
        for key in ("dataset", "groups_file"):
            val = getattr(cfg, key)
            if val and not Path(val).is_absolute():
                cfg = cfg.replace(**{key: str(base_dir / val)})
    return cfg.validate()


def load_config(path: str | Path) -> tuple[ExperimentConfig, str]:
    """Parsed config and the sha256 digest of the file bytes."""
    path = Path(path)
    raw = path.read_bytes()
    cfg = parse_config(raw.decode("utf-8"), base_dir=path.parent)
    return cfg, hashlib.sha256(raw).hexdigest()
