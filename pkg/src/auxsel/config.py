"""Run configuration: one JSON document, validated before any stage runs."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import MAX_TASKS, MetricKind
from .errors import ConfigError, ParseError

ENV_KINDS = ("synthetic", "table", "replay")


@dataclass(frozen=True)
class EnvironmentSpec:
    """Where rewards come from.

    ``synthetic`` takes either ``path`` (model JSON) or an inline ``model``;
    ``table`` takes a means CSV plus noise parameters; ``replay`` a rewards CSV.
    Relative paths resolve against the config file's directory.
    """

    kind: str = "synthetic"
    path: str | None = None
    model: dict | None = None
    noise_concentration: float = 150.0
    metric_mixing: float = 0.5
    split_correlation: float = 0.0

    def validate(self) -> None:
        if self.kind not in ENV_KINDS:
            raise ConfigError(f"environment.kind must be one of {ENV_KINDS}, got {self.kind!r}")
        if self.kind == "synthetic":
            if (self.path is None) == (self.model is None):
                raise ConfigError("synthetic environment needs exactly one of 'path' and 'model'")
        elif self.path is None:
            raise ConfigError(f"{self.kind} environment needs 'path'")
        elif self.model is not None:
            raise ConfigError(f"'model' is only valid for synthetic environments, not {self.kind}")


@dataclass(frozen=True)
class Alphas:
    ttest: float = 0.05
    friedman: float = 0.05
    nemenyi: float = 0.05

    def validate(self) -> None:
        for name in ("ttest", "friedman", "nemenyi"):
            a = getattr(self, name)
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alphas.{name} must lie in (0, 1), got {a}")


@dataclass(frozen=True)
class GapESpec:
    c: float = 0.5
    eps_gap: float = 1e-3
    b: float = 1.0

    def validate(self) -> None:
        for name in ("c", "eps_gap", "b"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"gape.{name} must be positive")


@dataclass(frozen=True)
class RunConfig:
    M: int
    environment: EnvironmentSpec
    n_splits: int = 50
    budget: int = 20000
    reward_metric: str = "AUPR"
    alphas: Alphas = field(default_factory=Alphas)
    gape: GapESpec = field(default_factory=GapESpec)
    welch: bool = False
    paired_t: bool = False
    tie_correction: bool = False
    bonferroni: bool = False
    include_base_case_arms: bool = False
    unbiased_variance: bool = True
    check_invariants: bool = False
    seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    metrics_cadence: int | None = None  # None: max(1, budget // 1000); 0: final snapshot only
    bandits: list[int] | None = None  # subset of tasks that get a bandit; None: all
    stage3_split_offset: int | None = None  # None: n_splits, so Stage 3 never reuses Stage-1 splits
    base_dir: str = field(default=".", compare=False)

    def validate(self) -> RunConfig:
        if not isinstance(self.M, int) or not 2 <= self.M <= MAX_TASKS:
            raise ConfigError(f"M must be an integer in [2, {MAX_TASKS}], got {self.M!r}")
        self.environment.validate()
        self.alphas.validate()
        self.gape.validate()
        if self.n_splits < 2:
            raise ConfigError("n_splits must be >= 2")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.reward_metric not in {k.value for k in MetricKind}:
            raise ConfigError(f"reward_metric must be AUPR or AUROC, got {self.reward_metric!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.metrics_cadence is not None and self.metrics_cadence < 0:
            raise ConfigError("metrics_cadence must be >= 0")
        if self.stage3_split_offset is not None and self.stage3_split_offset < 0:
            raise ConfigError("stage3_split_offset must be >= 0")
        if self.bandits is not None:
            if not self.bandits or any(not 0 <= m < self.M for m in self.bandits):
                raise ConfigError(f"bandits must be a non-empty list of task ids in [0, {self.M})")
        return self

    @property
    def metric(self) -> MetricKind:
        return MetricKind(self.reward_metric)

    @property
    def split_offset(self) -> int:
        return self.n_splits if self.stage3_split_offset is None else self.stage3_split_offset

    @property
    def cadence(self) -> int:
        return max(1, self.budget // 1000) if self.metrics_cadence is None else self.metrics_cadence

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes).validate()

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


_NESTED = {"environment": EnvironmentSpec, "alphas": Alphas, "gape": GapESpec}
_BOOL_FIELDS = {"welch", "paired_t", "tie_correction", "bonferroni", "include_base_case_arms", "unbiased_variance", "check_invariants"}
_INT_FIELDS = {"M", "n_splits", "budget", "seed", "workers", "metrics_cadence", "stage3_split_offset"}


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}")
    kwargs = {}
    for k, v in doc.items():
        if k in _NESTED and cls is RunConfig:
            v = _build(_NESTED[k], v, k)
        elif k in _BOOL_FIELDS and not isinstance(v, bool):
            raise ConfigError(f"{where}.{k} must be true or false")
        elif k in _INT_FIELDS and v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"{where}.{k} must be an integer")
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(doc: dict, base_dir: str | Path = ".") -> RunConfig:
    if "M" not in doc or "environment" not in doc:
        raise ConfigError("config needs at least 'M' and 'environment'")
    cfg = _build(RunConfig, doc, "config")
    return dataclasses.replace(cfg, base_dir=str(base_dir)).validate()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_dict(doc, path.parent)
