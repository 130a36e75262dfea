"""Reward sources standing in for neural-network training.

Three modes answer ``evaluate(set, split)``:

* synthetic: a parametric ground truth (per-task base level plus saturating
  pairwise transfer) with Beta noise,
* table: file-provided means per (task, set) with the same Beta noise,
* replay: recorded rewards keyed by (set, split).

Every reward lies in [0, 1]; this is checked on every evaluation.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .core import MAX_TASKS, MetricKind, RngStream, TaskSet
from .errors import DomainError, MissingEntry, ParseError, ReplayExhausted, ValidationError

EPS = 1e-6
ENV_STREAM = 0x656E76  # stream id of environment noise
REPLAY_HEADER = ["set", "split", "task", "aupr", "auroc"]
TABLE_HEADER = ["set", "task", "aupr", "auroc"]
MODEL_KEYS = {"base", "transfer", "saturation", "noise_concentration", "metric_offset", "metric_mixing"}
OPTIONAL_MODEL_KEYS = {"split_correlation"}

@dataclass(frozen=True)
class Evaluation:
    """Rewards of one training of ``trained_set`` on split ``split``.

    ``values[i]`` holds (aupr, auroc) for the i-th member of the set in
    ascending task order.
    """

    trained_set: TaskSet
    split: int
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (len(self.trained_set), 2):
            raise ValidationError(f"reward block shape {v.shape} does not match set {self.trained_set!r}")
        if not (v.min() >= 0.0 and v.max() <= 1.0):
            raise ValidationError(f"reward outside [0, 1] for set {self.trained_set.label} split {self.split}")

    def reward(self, task: int, metric: MetricKind | str = MetricKind.AUPR) -> float:
        metric = MetricKind(metric)
        for i, t in enumerate(self.trained_set):
            if t == task:
                return float(self.values[i, metric.column])
        raise DomainError(f"task {task} not in trained set {self.trained_set!r}")

    @property
    def rewards(self) -> dict[int, tuple[float, float]]:
        return {t: (float(a), float(b)) for t, (a, b) in zip(self.trained_set, self.values)}


@dataclass(frozen=True)
class BetaNoise:
    """Beta-distributed rewards around a mean, coupled through Gaussian copulas.

    ``concentration`` is kappa in Beta(mu*kappa, (1-mu)*kappa). ``metric_mixing``
    correlates the AUROC draw with the AUPR draw of the same task;
    ``split_correlation`` shares part of the latent draw between all sets
    evaluated on the same split (1.0 gives common random numbers).
    """

    concentration: float = 150.0
    metric_mixing: float = 0.5
    split_correlation: float = 0.0

    def __post_init__(self):
        if not self.concentration > 0:
            raise DomainError("noise_concentration must be > 0")
        if not 0.0 <= self.metric_mixing <= 1.0:
            raise DomainError("metric_mixing must lie in [0, 1]")
        if not 0.0 <= self.split_correlation <= 1.0:
            raise DomainError("split_correlation must lie in [0, 1]")

    def variance(self, mu):
        return mu * (1.0 - mu) / (self.concentration + 1.0)

    def draw(self, key: tuple[int, int], s: TaskSet, split: int, means: np.ndarray) -> np.ndarray:
        tasks = _members_array(s)
        out = np.empty((tasks.shape[0], 2))
        _kernels.beta_rewards(
            np.uint64(key[0]),
            np.uint64(key[1]),
            split,
            np.uint64(s.mask),
            tasks,
            tasks.shape[0],
            means,
            self.concentration,
            self.metric_mixing,
            self.split_correlation,
            out,
        )
        return out


_MEMBERS: dict[int, np.ndarray] = {}


def _members_array(s: TaskSet) -> np.ndarray:
    arr = _MEMBERS.get(s.mask)
    if arr is None:
        arr = np.array(s.members, dtype=np.int64)
        arr.setflags(write=False)
        _MEMBERS[s.mask] = arr
    return arr


@dataclass(frozen=True, eq=False)
class SyntheticModel:
    base: np.ndarray
    transfer: np.ndarray
    saturation: float = 1.0
    noise_concentration: float = 150.0
    metric_offset: float = 0.05
    metric_mixing: float = 0.5
    split_correlation: float = 0.0
    noise: BetaNoise = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        transfer = np.array(self.transfer, dtype=float)
        M = base.shape[0]
        if base.ndim != 1 or not 1 <= M <= MAX_TASKS:
            raise ValidationError(f"base must be a vector of 1..{MAX_TASKS} reals")
        if transfer.shape != (M, M):
            raise ValidationError(f"transfer must be {M}x{M}, got {transfer.shape}")
        if np.any(base < 0) or np.any(base > 1):
            raise ValidationError("base levels must lie in [0, 1]")
        if not self.saturation > 0:
            raise ValidationError("saturation must be > 0")
        np.fill_diagonal(transfer, 0.0)
        base.setflags(write=False)
        transfer.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "transfer", transfer)
        try:
            noise = BetaNoise(self.noise_concentration, self.metric_mixing, self.split_correlation)
        except DomainError as exc:
            raise ValidationError(str(exc)) from None
        object.__setattr__(self, "noise", noise)

    @property
    def M(self) -> int:
        return self.base.shape[0]

    def _aupr_means(self, tasks: tuple[int, ...], mask: int) -> np.ndarray:
        idx = list(tasks)
        # column sums over members; diagonal is zero so the target itself adds nothing
        pushed = self.transfer[idx][:, idx].sum(axis=0)
        s = self.saturation
        return self.base[idx] + s * np.tanh(pushed / s)

    def means(self, s: TaskSet) -> np.ndarray:
        """(aupr, auroc) true means for every member of ``s``; read-only, cached per set."""
        out = self._cache.get(s.mask)
        if out is not None:
            return out
        tasks = s.members
        if tasks and tasks[-1] >= self.M:
            raise DomainError(f"set {s!r} has tasks outside [0, {self.M})")
        raw = self._aupr_means(tasks, s.mask)
        out = np.empty((len(tasks), 2))
        out[:, 0] = raw
        out[:, 1] = raw + self.metric_offset
        out = np.clip(out, EPS, 1.0 - EPS)
        out.setflags(write=False)
        self._cache[s.mask] = out
        return out

    def true_mean(self, task: int, s: TaskSet, metric: MetricKind | str = MetricKind.AUPR) -> float:
        if task not in s:
            raise DomainError(f"task {task} not in set {s!r}")
        metric = MetricKind(metric)
        idx = s.members.index(task)
        return float(self.means(s)[idx, metric.column])

    def to_json(self) -> dict:
        return {
            "base": self.base.tolist(),
            "transfer": self.transfer.tolist(),
            "saturation": self.saturation,
            "noise_concentration": self.noise_concentration,
            "metric_offset": self.metric_offset,
            "metric_mixing": self.metric_mixing,
            "split_correlation": self.split_correlation,
        }

    @classmethod
    def from_json(cls, doc: dict) -> SyntheticModel:
        keys = set(doc)
        missing = MODEL_KEYS - keys
        unknown = keys - MODEL_KEYS - OPTIONAL_MODEL_KEYS
        if missing or unknown:
            raise ValidationError(f"synthetic model keys: missing {sorted(missing)}, unknown {sorted(unknown)}")
        return cls(
            base=doc["base"],
            transfer=doc["transfer"],
            saturation=float(doc["saturation"]),
            noise_concentration=float(doc["noise_concentration"]),
            metric_offset=float(doc["metric_offset"]),
            metric_mixing=float(doc["metric_mixing"]),
            split_correlation=float(doc.get("split_correlation", 0.0)),
        )

    @classmethod
    def random(
        cls,
        M: int,
        seed: int,
        *,
        effect_scale: float = 0.1,
        sparsity: float = 0.5,
        **kwargs,
    ) -> SyntheticModel:
        """Random model: base levels in [0.3, 0.6], a ``sparsity`` share of
        transfer entries zero and the rest uniform in +-``effect_scale``."""
        rng = RngStream(seed, stream_id=0x6D6F64656C).generator()
        base = rng.uniform(0.3, 0.6, size=M)
        transfer = rng.uniform(-effect_scale, effect_scale, size=(M, M))
        transfer[rng.random((M, M)) < sparsity] = 0.0
        return cls(base=base, transfer=transfer, **kwargs)


def load_model(path: str | Path) -> SyntheticModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None
    return SyntheticModel.from_json(doc)


class TableModel:
    """Means given per (task, set) by a CSV file with header ``set,task,aupr,auroc``."""

    def __init__(self, entries: dict[TaskSet, np.ndarray], noise: BetaNoise, M: int | None = None):
        self._entries = entries
        self.noise = noise
        top = max((max(s.members) for s in entries if s), default=-1)
        self.M = M if M is not None else top + 1
        if top >= self.M:
            raise ValidationError(f"table mentions task {top} but M={self.M}")

    @property
    def sets(self) -> list[TaskSet]:
        return sorted(self._entries)

    def means(self, s: TaskSet) -> np.ndarray:
        try:
            return self._entries[s]
        except KeyError:
            raise MissingEntry(f"table has no means for set {s.label}") from None

    def true_mean(self, task: int, s: TaskSet, metric: MetricKind | str = MetricKind.AUPR) -> float:
        if task not in s:
            raise DomainError(f"task {task} not in set {s!r}")
        return float(self.means(s)[s.members.index(task), MetricKind(metric).column])


def load_table(path: str | Path, noise: BetaNoise, M: int | None = None) -> TableModel:
    rows: dict[TaskSet, dict[int, tuple[float, float]]] = {}
    for lineno, row in _read_csv(path, TABLE_HEADER):
        s = _parse_set(row["set"], lineno)
        task = _parse_int(row["task"], "task", lineno)
        if task not in s:
            raise ValidationError(f"line {lineno}: task {task} not in set {s.label}")
        vals = (_parse_reward(row["aupr"], lineno), _parse_reward(row["auroc"], lineno))
        if not (EPS <= vals[0] <= 1 - EPS and EPS <= vals[1] <= 1 - EPS):
            raise ValidationError(f"line {lineno}: table means must lie strictly inside (0, 1)")
        per = rows.setdefault(s, {})
        if task in per:
            raise ValidationError(f"line {lineno}: duplicate entry for set {s.label} task {task}")
        per[task] = vals
    entries = {}
    for s, per in rows.items():
        if set(per) != set(s):
            raise ValidationError(f"set {s.label}: entries for tasks {sorted(per)} do not cover the set")
        entries[s] = np.array([per[t] for t in s])
    return TableModel(entries, noise, M)


class SimulatedEnvironment:
    """Synthetic or table-backed environment with deterministic counter-based noise.

    The draw for (set, split) depends only on the seed, the set and the split
    (plus the task and the split for the shared component), so evaluations may
    run in any order or concurrently.
    """

    kind = "synthetic"

    def __init__(self, model: SyntheticModel | TableModel, seed: int = 0):
        self.model = model
        self.seed = int(seed)
        self.stream = RngStream(self.seed, stream_id=ENV_STREAM)
        if isinstance(model, TableModel):
            self.kind = "table"

    @property
    def M(self) -> int:
        return self.model.M

    @property
    def noise(self) -> BetaNoise:
        return self.model.noise

    def evaluate(self, s: TaskSet, split: int) -> Evaluation:
        if not s:
            raise DomainError("cannot train on an empty task set")
        means = self.model.means(s)
        values = self.noise.draw(self.stream.key, s, int(split), means)
        return Evaluation(s, int(split), values)

    def true_mean(self, task: int, s: TaskSet, metric: MetricKind | str = MetricKind.AUPR) -> float:
        return self.model.true_mean(task, s, metric)

    def reward_variance(self, task: int, s: TaskSet, metric: MetricKind | str = MetricKind.AUPR) -> float:
        return float(self.noise.variance(self.true_mean(task, s, metric)))


class ReplayEnvironment:
    """Answers evaluations from recorded rewards keyed by (set, split)."""

    kind = "replay"

    def __init__(self, records: dict[tuple[TaskSet, int], np.ndarray], M: int | None = None):
        self._records = records
        top = max((max(s.members) for s, _ in records), default=-1)
        self.M = M if M is not None else top + 1
        if top >= self.M:
            raise ValidationError(f"replay mentions task {top} but M={self.M}")

    def evaluate(self, s: TaskSet, split: int) -> Evaluation:
        try:
            values = self._records[(s, int(split))]
        except KeyError:
            raise ReplayExhausted(s.label, int(split)) from None
        return Evaluation(s, int(split), values)

    def coverage(self) -> dict[TaskSet, list[int]]:
        out: dict[TaskSet, list[int]] = {}
        for s, split in self._records:
            out.setdefault(s, []).append(split)
        return {s: sorted(v) for s, v in sorted(out.items())}

    def missing(self, pairs) -> list[tuple[TaskSet, int]]:
        return [(s, int(k)) for s, k in pairs if (s, int(k)) not in self._records]

    def __len__(self) -> int:
        return len(self._records)


def load_replay(path: str | Path, M: int | None = None) -> ReplayEnvironment:
    rows: dict[tuple[TaskSet, int], dict[int, tuple[float, float]]] = {}
    for lineno, row in _read_csv(path, REPLAY_HEADER):
        s = _parse_set(row["set"], lineno)
        split = _parse_int(row["split"], "split", lineno)
        task = _parse_int(row["task"], "task", lineno)
        if split < 0:
            raise ParseError(f"negative split {split}", lineno)
        if task not in s:
            raise ValidationError(f"line {lineno}: task {task} not in set {s.label}")
        vals = (_parse_reward(row["aupr"], lineno), _parse_reward(row["auroc"], lineno))
        per = rows.setdefault((s, split), {})
        if task in per:
            raise ValidationError(f"line {lineno}: duplicate record for set {s.label} split {split} task {task}")
        per[task] = vals
    records = {}
    for (s, split), per in rows.items():
        if set(per) != set(s):
            raise ValidationError(f"set {s.label} split {split}: records for tasks {sorted(per)} do not cover the set")
        records[(s, split)] = np.array([per[t] for t in s])
    return ReplayEnvironment(records, M)


def write_replay(path: str | Path, evaluations) -> None:
    """Write evaluations in replay CSV format (the inverse of :func:`load_replay`)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLAY_HEADER)
        for ev in evaluations:
            label = ev.trained_set.label
            for t, (a, b) in zip(ev.trained_set, ev.values):
                w.writerow([label, ev.split, t, repr(float(a)), repr(float(b))])


def _read_csv(path, header):
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    if [h.strip() for h in first] != header:
        raise ParseError(f"expected header {','.join(header)}, got {','.join(first)}", 1)
    for row in reader:
        lineno = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        yield lineno, dict(zip(header, (c.strip() for c in row)))


def _parse_set(label: str, lineno: int) -> TaskSet:
    try:
        s = TaskSet.parse(label)
    except DomainError as exc:
        raise ParseError(str(exc), lineno) from None
    if not s:
        raise ParseError("empty task set", lineno)
    if label != s.label:
        raise ParseError(f"set label {label!r} is not sorted and hyphen-joined", lineno)
    return s


def _parse_int(text: str, name: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{name} {text!r} is not an integer", lineno) from None


def _parse_reward(text: str, lineno: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"reward {text!r} is not a number", lineno) from None
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"line {lineno}: reward {x} outside [0, 1]")
    return x
