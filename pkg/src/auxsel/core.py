"""Task identifiers, task-set encoding, metric channels and deterministic randomness."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import DomainError

MAX_TASKS = 64


class MetricKind(str, enum.Enum):
    AUPR = "AUPR"
    AUROC = "AUROC"

    @property
    def column(self) -> int:
        return 0 if self is MetricKind.AUPR else 1


class Scenario(str, enum.Enum):
    """Base-case training scenario families."""

    STL = "STL"
    PW = "PW"
    FMTL = "FMTL"
    LOO = "LOO"


@dataclass(frozen=True)
class TaskSet:
    """Canonical set of task ids backed by a single bitmask.

    Equality and hashing are set equality; iteration yields ids in ascending order.
    Ordering compares the ascending member lists lexicographically.
    """

    mask: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> MAX_TASKS:
            raise DomainError(f"task-set mask out of range: {self.mask}")

    @classmethod
    def full(cls, M: int) -> TaskSet:
        _check_m(M)
        return cls((1 << M) - 1)

    @classmethod
    def single(cls, task: int) -> TaskSet:
        return cls(1 << task)

    @classmethod
    def parse(cls, label: str) -> TaskSet:
        """Inverse of :attr:`label`; ``"0-3-7"`` -> {0, 3, 7}."""
        label = label.strip()
        if not label:
            return cls(0)
        try:
            ids = [int(tok) for tok in label.split("-")]
        except ValueError:
            raise DomainError(f"malformed task-set label {label!r}") from None
        return taskset_from_list(ids)

    def __iter__(self) -> Iterator[int]:
        m = self.mask
        while m:
            low = m & -m
            yield low.bit_length() - 1
            m ^= low

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __contains__(self, task: object) -> bool:
        return isinstance(task, (int, np.integer)) and 0 <= task < MAX_TASKS and bool(self.mask >> int(task) & 1)

    def __bool__(self) -> bool:
        return self.mask != 0

    def __lt__(self, other: TaskSet) -> bool:
        return self.members < other.members

    def __le__(self, other: TaskSet) -> bool:
        return self.members <= other.members

    def __or__(self, other: TaskSet) -> TaskSet:
        return TaskSet(self.mask | other.mask)

    def __and__(self, other: TaskSet) -> TaskSet:
        return TaskSet(self.mask & other.mask)

    def __sub__(self, other: TaskSet) -> TaskSet:
        return TaskSet(self.mask & ~other.mask)

    def issubset(self, other: TaskSet) -> bool:
        return self.mask & ~other.mask == 0

    def add(self, task: int) -> TaskSet:
        return TaskSet(self.mask | (1 << task))

    def remove(self, task: int) -> TaskSet:
        return TaskSet(self.mask & ~(1 << task))

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(self)

    @property
    def label(self) -> str:
        return "-".join(str(t) for t in self)

    def to_json(self) -> list[int]:
        return list(self)

    def __repr__(self) -> str:
        return "{" + ",".join(str(t) for t in self) + "}"


def _check_m(M: int) -> None:
    if not 1 <= M <= MAX_TASKS:
        raise DomainError(f"task count M={M} outside [1, {MAX_TASKS}]")


def taskset_from_list(ids: Iterable[int], M: int = MAX_TASKS) -> TaskSet:
    """Build a canonical task set; duplicates collapse, ids must be below ``M``."""
    _check_m(M)
    mask = 0
    for i in ids:
        i = int(i)
        if not 0 <= i < M:
            raise DomainError(f"task id {i} outside [0, {M})")
        mask |= 1 << i
    return TaskSet(mask)


def scenario_family(kind: Scenario | str, M: int) -> list[TaskSet]:
    kind = Scenario(kind)
    if M < 2:
        raise DomainError(f"scenario families need M >= 2, got {M}")
    _check_m(M)
    full = TaskSet.full(M)
    if kind is Scenario.STL:
        return [TaskSet.single(m) for m in range(M)]
    if kind is Scenario.PW:
        return [TaskSet((1 << p) | (1 << q)) for p in range(M) for q in range(p + 1, M)]
    if kind is Scenario.FMTL:
        return [full]
    return [full.remove(m) for m in range(M)]


def base_case_sets(M: int) -> dict[TaskSet, list[Scenario]]:
    """Unique base-case sets with every scenario family each one belongs to."""
    out: dict[TaskSet, list[Scenario]] = {}
    for kind in Scenario:
        for s in scenario_family(kind, M):
            out.setdefault(s, []).append(kind)
    return out


def all_subsets_containing(task: int, M: int) -> list[TaskSet]:
    rest = [t for t in range(M) if t != task]
    out = []
    for bits in range(1 << len(rest)):
        mask = 1 << task
        for j, t in enumerate(rest):
            if bits >> j & 1:
                mask |= 1 << t
        out.append(TaskSet(mask))
    return sorted(out)


@dataclass(frozen=True)
class RngStream:
    """Counter-based Philox stream keyed by ``(seed, stream_id)``.

    Philox4x64 is fully specified, so equal keys and counters give identical
    draws on every platform. ``generator(*coords)`` positions the counter at a
    coordinate so unrelated consumers never share draws.
    """

    seed: int
    stream_id: int = 0

    @property
    def key(self) -> tuple[int, int]:
        return (self.seed & _U64, self.stream_id & _U64)

    def generator(self, *coords: int) -> np.random.Generator:
        """numpy Generator on Philox with counter ``[0, *coords]`` (zero padded)."""
        if len(coords) > 3:
            raise DomainError("at most three counter coordinates")
        counter = [0, *(c & _U64 for c in coords)] + [0] * (3 - len(coords))
        k0, k1 = self.key
        return np.random.Generator(np.random.Philox(key=k0 | (k1 << 64), counter=np.array(counter, dtype=np.uint64)))


_U64 = 0xFFFFFFFFFFFFFFFF
