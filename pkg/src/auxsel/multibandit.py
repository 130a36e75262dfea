"""Stage 3: adaptive GapE-V over several bandits sharing (semi-overlapping) arms.

Bandit ``m`` has one arm per candidate set containing task ``m``. Pulling an
arm trains its set once; every bandit with an arm on that same set receives a
sample for its own task. The initiating arm books an *own* pull, the others
an *induced* pull.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .candidates import Candidate
from .core import MetricKind, Scenario, TaskSet, base_case_sets
from .environment import SimulatedEnvironment
from .errors import ConfigError, EnvironmentFailure, StateError

log = logging.getLogger(__name__)


class BudgetExhausted(StateError):
    """Raised by :func:`select_pull` once all ``n`` rounds are spent."""


@dataclass(frozen=True)
class GapEConfig:
    c: float = 0.5  # a(t) = c * n / H(t)
    eps_gap: float = 1e-3
    b: float = 1.0  # reward range
    unbiased_variance: bool = True
    check_invariants: bool = False

    def __post_init__(self):
        if not (self.c > 0 and self.eps_gap > 0 and self.b > 0):
            raise ConfigError("c, eps_gap and b must be positive")


@dataclass(frozen=True)
class ArmRef:
    bandit: int
    arm_index: int
    set: TaskSet


@dataclass(frozen=True)
class PullRecord:
    t: int
    phase: str
    ref: ArmRef
    split: int
    rewards: dict[int, tuple[float, float]]
    fanout: list[tuple[int, int, float]]
    b_index: float | None

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "phase": self.phase,
            "bandit": self.ref.bandit,
            "arm": self.ref.arm_index,
            "set": self.ref.set.to_json(),
            "split": self.split,
            "rewards": {str(k): list(v) for k, v in self.rewards.items()},
            "fanout": [list(f) for f in self.fanout],
            "b_index": self.b_index,
        }


class MultiBanditState:
    """Per-arm statistics for all bandits plus the set -> arms fan-out index.

    Create with :func:`init`. Arrays are flat over arms, grouped by bandit in
    ascending task order, arms within a bandit in ascending set order.
    """

    def __init__(
        self,
        candidates,
        M: int,
        budget: int,
        reward_metric: MetricKind | str = MetricKind.AUPR,
        config: GapEConfig | None = None,
        bandits=None,
        split_offset: int = 0,
    ):
        self.M = M
        self.budget = int(budget)
        self.metric = MetricKind(reward_metric)
        self.config = config or GapEConfig()
        self.split_offset = int(split_offset)
        by_set: dict[TaskSet, Candidate] = {}
        for c in candidates:
            if c.set in by_set:
                raise ConfigError(f"duplicate candidate set {c.set.label}")
            if not c.set or max(c.set.members) >= M:
                raise ConfigError(f"candidate {c.set!r} is empty or has tasks outside [0, {M})")
            by_set[c.set] = c
        self.bandits: list[int] = sorted(range(M) if bandits is None else {int(m) for m in bandits})
        bandit_mask = sum(1 << m for m in self.bandits)
        orphans = [s.label for s in by_set if not s.mask & bandit_mask]
        if orphans:
            log.info("dropping %d candidate set(s) without a bandit task: %s", len(orphans), orphans)
        self.sets: list[TaskSet] = sorted(s for s in by_set if s.mask & bandit_mask)
        self.candidates: list[Candidate] = [by_set[s] for s in self.sets]

        arm_bandit, arm_set, arm_k, start = [], [], [], [0]
        self._arm_lookup: dict[tuple[int, int], int] = {}
        for m in self.bandits:
            ks = [u for u, s in enumerate(self.sets) if m in s]
            if len(ks) < 2:
                raise ConfigError(f"task {m} has {len(ks)} arm(s); every bandit needs at least 2")
            for k, u in enumerate(ks):
                self._arm_lookup[(m, k)] = len(arm_bandit)
                arm_bandit.append(m)
                arm_set.append(u)
                arm_k.append(k)
            start.append(len(arm_bandit))
        self.arm_bandit = np.array(arm_bandit, dtype=np.int64)
        self.arm_set = np.array(arm_set, dtype=np.int64)
        self.arm_k = np.array(arm_k, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self._bandit_pos = {m: j for j, m in enumerate(self.bandits)}

        # fan-out: arms per unique set and the member position of each arm's task
        self.fan_arms: list[np.ndarray] = []
        self.fan_pos: list[np.ndarray] = []
        for u, s in enumerate(self.sets):
            arms = np.nonzero(self.arm_set == u)[0]
            members = s.members
            self.fan_arms.append(arms.astype(np.int64))
            self.fan_pos.append(np.array([members.index(int(self.arm_bandit[i])) for i in arms], dtype=np.int64))
        need = 2 * len(self.sets)
        if self.budget < need:
            raise ConfigError(f"budget {self.budget} below the initialization requirement {need} (2 x unique sets)")

        A = len(arm_bandit)
        self.pulls = np.zeros(A)
        self.mean = np.zeros(A)
        self.m2 = np.zeros(A)
        self.own = np.zeros(A, dtype=np.int64)
        self.induced = np.zeros(A, dtype=np.int64)
        self.set_evaluations = np.zeros(len(self.sets), dtype=np.int64)
        self.t = 0
        self.delivered = 0
        self.invariant_violations = 0
        self._gap = np.zeros(A)
        self._var = np.zeros(A)
        self._index = np.zeros(A)

    @property
    def n_arms(self) -> int:
        return self.arm_bandit.shape[0]

    @property
    def initialized(self) -> bool:
        return self.t >= 2 * len(self.sets)

    def arm_ref(self, flat: int) -> ArmRef:
        return ArmRef(int(self.arm_bandit[flat]), int(self.arm_k[flat]), self.sets[self.arm_set[flat]])

    def flat(self, m: int, k: int) -> int:
        try:
            return self._arm_lookup[(m, k)]
        except KeyError:
            raise StateError(f"bandit {m} has no arm {k}") from None

    def arms_of(self, m: int) -> range:
        j = self._bandit_pos[m]
        return range(int(self.start[j]), int(self.start[j + 1]))

    def arm_sets(self, m: int) -> list[TaskSet]:
        return [self.sets[self.arm_set[i]] for i in self.arms_of(m)]

    def variance(self) -> np.ndarray:
        out = np.zeros(self.n_arms)
        _kernels.variances(self.m2, self.pulls, self.config.unbiased_variance, out)
        return out

    def check_invariants(self) -> int:
        """Count arms whose pull count differs from the evaluations of their set."""
        bad = int(np.count_nonzero(self.pulls != self.set_evaluations[self.arm_set]))
        if int(self.own.sum()) != self.t:
            bad += 1
        if not np.array_equal(self.own + self.induced, self.pulls.astype(np.int64)):
            bad += 1
        return bad


def init(
    candidates,
    M: int,
    budget: int,
    reward_metric: MetricKind | str = MetricKind.AUPR,
    config: GapEConfig | None = None,
    env=None,
    *,
    bandits=None,
    split_offset: int = 0,
    sink=None,
) -> MultiBanditState:
    """Build the state and, given ``env``, pull every unique set twice."""
    state = MultiBanditState(candidates, M, budget, reward_metric, config, bandits, split_offset)
    if env is not None:
        initialize(state, env, sink=sink)
    return state


def initialize(state: MultiBanditState, env, sink=None) -> None:
    # two passes over the sets so every arm has a defined variance
    if state.t:
        raise StateError("state already initialized")
    for _ in range(2):
        for u in range(len(state.sets)):
            ref = state.arm_ref(int(state.fan_arms[u][0]))
            rec = apply_pull(state, ref, env, phase="init")
            if sink is not None:
                sink(rec)


def gap_estimate(state: MultiBanditState, m: int, k: int) -> float:
    arms = state.arms_of(m)
    if np.any(state.pulls[arms.start : arms.stop] < 1):
        raise StateError(f"bandit {m} has unpulled arms")
    i = state.flat(m, k)
    others = [state.mean[j] for j in arms if j != i]
    return abs(max(others) - state.mean[i])


def complexity_estimate(state: MultiBanditState) -> float:
    if not state.initialized:
        raise StateError("complexity needs an initialized state")
    var = state.variance()
    gap = np.zeros(state.n_arms)
    _kernels.gaps(state.mean, state.start, gap)
    return _kernels.complexity(gap, var, state.config.eps_gap, state.config.b)


def _select_flat(state: MultiBanditState) -> tuple[int, float]:
    if not state.initialized:
        raise StateError("select_pull before initialization finished")
    if state.t >= state.budget:
        raise BudgetExhausted(f"budget of {state.budget} rounds exhausted")
    cfg = state.config
    best, _, _ = _kernels.select(
        state.mean,
        state.m2,
        state.pulls,
        state.start,
        float(state.budget),
        cfg.c,
        cfg.eps_gap,
        cfg.b,
        cfg.unbiased_variance,
        state._gap,
        state._var,
        state._index,
    )
    return int(best), float(state._index[best])


def select_pull(state: MultiBanditState) -> ArmRef:
    """Arm maximising the GapE-V index; raises :class:`BudgetExhausted` at t == n."""
    return state.arm_ref(_select_flat(state)[0])


def index_values(state: MultiBanditState) -> np.ndarray:
    """Current index of every arm (flat order), as used by :func:`select_pull`."""
    _select_flat(state)
    return state._index.copy()


def apply_pull(state: MultiBanditState, ref: ArmRef, env, *, phase: str = "gape", b_index: float | None = None) -> PullRecord:
    """Train ``ref.set`` once on a fresh split and fan the rewards out.

    On an environment failure the round is aborted and the state is untouched.
    """
    initiator = state.flat(ref.bandit, ref.arm_index)
    u = int(state.arm_set[initiator])
    split = state.split_offset + state.t
    try:
        ev = env.evaluate(ref.set, split)
    except EnvironmentFailure:
        log.exception("round %d aborted: evaluation of %s failed", state.t + 1, ref.set.label)
        raise
    arms, rewards = _update(state, u, initiator, ev)
    fan = [(int(state.arm_bandit[i]), int(state.arm_k[i]), float(r)) for i, r in zip(arms, rewards)]
    return PullRecord(state.t, phase, ref, split, ev.rewards, fan, b_index)


def _apply_fast(state: MultiBanditState, initiator: int, env) -> None:
    # apply_pull without building a record; used when no log is written
    u = int(state.arm_set[initiator])
    _update(state, u, initiator, env.evaluate(state.sets[u], state.split_offset + state.t))


def _update(state: MultiBanditState, u: int, initiator: int, ev):
    arms = state.fan_arms[u]
    rewards = ev.values[state.fan_pos[u], state.metric.column]
    _kernels.apply_rewards(arms, rewards, initiator, state.pulls, state.mean, state.m2, state.own, state.induced)
    state.set_evaluations[u] += 1
    state.t += 1
    state.delivered += arms.shape[0]
    if state.config.check_invariants:
        bad = state.check_invariants()
        if bad:
            state.invariant_violations += bad
            log.error("round %d: %d invariant violation(s)", state.t, bad)
    return arms, rewards


def _best_arm(state: MultiBanditState, m: int) -> int:
    arms = list(state.arms_of(m))
    # highest mean, then most pulls, then lowest arm index
    return min(arms, key=lambda i: (-state.mean[i], -state.pulls[i], i))


def recommend(state: MultiBanditState) -> dict[int, TaskSet]:
    if state.t < state.budget:
        raise StateError(f"recommend called at t={state.t} before the budget n={state.budget} is spent")
    return {m: state.sets[state.arm_set[_best_arm(state, m)]] for m in state.bandits}


def run(
    state: MultiBanditState,
    env,
    *,
    policy: str = "gape",
    sink=None,
    snapshot_every: int = 0,
    on_snapshot=None,
    oracle=None,
) -> dict[int, TaskSet]:
    """Play the game to the end of the budget and return the recommendations.

    ``policy="uniform"`` cycles through the unique sets instead of using the
    index (a baseline with the same budget and fan-out). ``sink`` receives a
    :class:`PullRecord` per round; ``on_snapshot`` a :class:`RoundMetrics`
    every ``snapshot_every`` rounds and at the end.
    """
    if policy not in ("gape", "uniform"):
        raise ConfigError(f"unknown policy {policy!r}")
    if sink is None and not state.config.check_invariants and isinstance(env, SimulatedEnvironment):
        _run_compiled(state, env, policy == "uniform", snapshot_every, on_snapshot, oracle)
        return recommend(state)
    U = len(state.sets)
    while state.t < state.budget:
        # initialization rounds (and every uniform round) cycle through the sets
        if state.t < 2 * U or policy == "uniform":
            flat, b = int(state.fan_arms[state.t % U][0]), None
            phase = "init" if state.t < 2 * U else policy
        else:
            flat, b = _select_flat(state)
            phase = policy
        if sink is None:
            _apply_fast(state, flat, env)
        else:
            sink(apply_pull(state, state.arm_ref(flat), env, phase=phase, b_index=b))
        if on_snapshot is not None and snapshot_every and state.t % snapshot_every == 0 and state.t < state.budget:
            on_snapshot(metrics_snapshot(state, oracle))
    if on_snapshot is not None:
        on_snapshot(metrics_snapshot(state, oracle))
    return recommend(state)


def _sim_tables(state: MultiBanditState, env: SimulatedEnvironment) -> dict:
    """Flat per-set arrays the compiled loop reads instead of calling ``env``."""
    U = len(state.sets)
    L = max(len(s) for s in state.sets)
    tasks = np.zeros((U, L), dtype=np.int64)
    means = np.zeros((U, L, 2))
    for u, s in enumerate(state.sets):
        tasks[u, : len(s)] = s.members
        means[u, : len(s)] = env.model.means(s)
    lens = np.array([len(f) for f in state.fan_arms], dtype=np.int64)
    k0, k1 = env.stream.key
    return {
        "fan_ptr": np.concatenate([[0], np.cumsum(lens)]).astype(np.int64),
        "fan_arms": np.concatenate(state.fan_arms),
        "fan_pos": np.concatenate(state.fan_pos),
        "set_masks": np.array([s.mask for s in state.sets], dtype=np.uint64),
        "set_tasks": tasks,
        "set_len": np.array([len(s) for s in state.sets], dtype=np.int64),
        "set_means": means,
        "k0": np.uint64(k0),
        "k1": np.uint64(k1),
    }


def _run_compiled(state: MultiBanditState, env, uniform: bool, snapshot_every: int, on_snapshot, oracle) -> None:
    # same rounds as the Python loop, played in chunks between snapshots
    tab = _sim_tables(state, env)
    noise = env.noise
    cfg = state.config
    while state.t < state.budget:
        stop = state.budget
        if on_snapshot is not None and snapshot_every:
            stop = min(stop, (state.t // snapshot_every + 1) * snapshot_every)
        state.delivered += _kernels.run_simulated(
            state.t,
            stop,
            float(state.budget),
            uniform,
            state.mean,
            state.m2,
            state.pulls,
            state.own,
            state.induced,
            state.start,
            state.arm_set,
            state.set_evaluations,
            tab["fan_ptr"],
            tab["fan_arms"],
            tab["fan_pos"],
            tab["set_masks"],
            tab["set_tasks"],
            tab["set_len"],
            tab["set_means"],
            tab["k0"],
            tab["k1"],
            state.split_offset,
            noise.concentration,
            noise.metric_mixing,
            noise.split_correlation,
            state.metric.column,
            cfg.c,
            cfg.eps_gap,
            cfg.b,
            cfg.unbiased_variance,
        )
        state.t = stop
        if on_snapshot is not None and state.t < state.budget:
            on_snapshot(metrics_snapshot(state, oracle))
    if on_snapshot is not None:
        on_snapshot(metrics_snapshot(state, oracle))


def format_ratio(own: int, induced: int) -> str:
    """Own pulls as a percentage of induced pulls, two decimals."""
    if induced == 0:
        return "inf%" if own else "0.00%"
    return f"{100.0 * own / induced:.2f}%"


@dataclass(frozen=True)
class BanditMetrics:
    bandit: int
    recommended_arm: int
    recommended_set: TaskSet
    own_pulls: int
    induced_pulls: int
    best_own_pulls: int
    best_induced_pulls: int
    simple_regret: float | None = None
    error: bool | None = None
    by_type: dict[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class RoundMetrics:
    t: int
    bandits: list[BanditMetrics]
    error: bool | None

    def rows(self) -> list[dict]:
        out = []
        for b in self.bandits:
            out.append(
                {
                    "t": self.t,
                    "bandit": b.bandit,
                    "recommended_arm": b.recommended_arm,
                    "recommended_set": b.recommended_set.label,
                    "simple_regret": "" if b.simple_regret is None else repr(b.simple_regret),
                    "error": "" if b.error is None else int(b.error),
                    "own_pulls": b.own_pulls,
                    "induced_pulls": b.induced_pulls,
                    "best_own_pulls": b.best_own_pulls,
                    "best_induced_pulls": b.best_induced_pulls,
                    "any_error": "" if self.error is None else int(self.error),
                }
            )
        return out


SNAPSHOT_COLUMNS = [
    "t",
    "bandit",
    "recommended_arm",
    "recommended_set",
    "simple_regret",
    "error",
    "own_pulls",
    "induced_pulls",
    "best_own_pulls",
    "best_induced_pulls",
    "any_error",
]


def metrics_snapshot(state: MultiBanditState, oracle=None) -> RoundMetrics:
    """Recommendation, regret (given an oracle report) and pull tallies per bandit."""
    rows = []
    any_error = None if oracle is None else False
    for m in state.bandits:
        arms = list(state.arms_of(m))
        best = _best_arm(state, m)
        rec = state.sets[state.arm_set[best]]
        regret = err = None
        if oracle is not None:
            regret, err = oracle.regret(m, rec)
            any_error = any_error or err
        kinds: dict[str, list[int]] = {}
        for i in arms:
            kinds.setdefault(state.candidates[state.arm_set[i]].kind, []).append(i)
        by_type = {
            kind: (float(state.own[idx].sum()) / len(idx), float(state.induced[idx].sum()) / len(idx))
            for kind, idx in sorted(kinds.items())
        }
        rows.append(
            BanditMetrics(
                bandit=m,
                recommended_arm=int(state.arm_k[best]),
                recommended_set=rec,
                own_pulls=int(state.own[arms].sum()),
                induced_pulls=int(state.induced[arms].sum()),
                best_own_pulls=int(state.own[best]),
                best_induced_pulls=int(state.induced[best]),
                simple_regret=regret,
                error=err,
                by_type=by_type,
            )
        )
    return RoundMetrics(state.t, rows, any_error)


def pull_table(state: MultiBanditState) -> list[dict]:
    """Own/induced pulls per bandit plus a TOTAL row."""
    rows = []
    for m in state.bandits:
        arms = list(state.arms_of(m))
        own = int(state.own[arms].sum())
        ind = int(state.induced[arms].sum())
        rows.append({"task": str(m), "own_pulls": own, "induced_pulls": ind, "ratio_of_own_pulls": format_ratio(own, ind)})
    own = int(state.own.sum())
    ind = int(state.induced.sum())
    rows.append({"task": "TOTAL", "own_pulls": own, "induced_pulls": ind, "ratio_of_own_pulls": format_ratio(own, ind)})
    return rows


def arm_table(state: MultiBanditState) -> list[dict]:
    """Per-arm pulls next to estimated gap and variance."""
    var = state.variance()
    gap = np.zeros(state.n_arms)
    _kernels.gaps(state.mean, state.start, gap)
    rows = []
    for i in range(state.n_arms):
        c = state.candidates[state.arm_set[i]]
        rows.append(
            {
                "bandit": int(state.arm_bandit[i]),
                "arm": int(state.arm_k[i]),
                "set": c.set.label,
                "kind": c.kind,
                "pulls": int(state.pulls[i]),
                "own_pulls": int(state.own[i]),
                "induced_pulls": int(state.induced[i]),
                "mean": repr(float(state.mean[i])),
                "variance": repr(float(var[i])),
                "gap": repr(float(gap[i])),
            }
        )
    return rows


def stage3_arms(
    candidates,
    M: int,
    *,
    include_base_cases: bool = False,
    bandits=None,
) -> tuple[list[Candidate], list[str]]:
    """Candidate list for Stage 3, optionally with base cases, covering every bandit.

    Returns the arms and log messages for any task whose singleton and full set
    had to be added to reach two arms.
    """
    by_set = {c.set: c for c in candidates}
    if include_base_cases:
        for s, fams in base_case_sets(M).items():
            c = by_set.get(s)
            by_set[s] = Candidate(s, c.provenance if c else (), tuple(fams))
    notes = []
    full = TaskSet.full(M)
    for m in sorted(range(M) if bandits is None else bandits):
        have = sum(1 for s in by_set if m in s)
        if have >= 2:
            continue
        for s, fam in ((TaskSet.single(m), Scenario.STL), (full, Scenario.FMTL)):
            if s not in by_set:
                by_set[s] = Candidate(s, (), (fam,))
        notes.append(f"task {m} had {have} arm(s); added its singleton and the full set")
    return [by_set[s] for s in sorted(by_set)], notes


def write_jsonl(fh):
    def sink(rec: PullRecord) -> None:
        fh.write(json.dumps(rec.to_json(), separators=(",", ":")) + "\n")

    return sink


def default_cadence(budget: int) -> int:
    return max(1, budget // 1000)


__all__ = [
    "ArmRef",
    "BudgetExhausted",
    "GapEConfig",
    "MultiBanditState",
    "PullRecord",
    "RoundMetrics",
    "apply_pull",
    "complexity_estimate",
    "format_ratio",
    "gap_estimate",
    "init",
    "metrics_snapshot",
    "recommend",
    "run",
    "select_pull",
]
