"""Stage 1: base-case sampling and the twelve pairwise transfer graphs.

An edge (p, q) of a positive graph says training q together with p beats
training q alone; an edge of a negative graph says q does better when p is
left out of the full set than when everything is trained together.
"""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import stats
from .core import MetricKind, TaskSet, base_case_sets
from .environment import Evaluation, write_replay
from .errors import IncompleteStage1, ParseError

log = logging.getLogger(__name__)


class Polarity(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @property
    def short(self) -> str:
        return "P" if self is Polarity.POSITIVE else "N"


class GraphTest(str, enum.Enum):
    DIFF = "diff"
    TTEST = "ttest"
    NEMENYI = "nemenyi"


class SampleMatrix:
    """Per-split rewards of every base-case set, paired by split index.

    ``blocks[s]`` has shape (n_splits, |s|, 2): split, member (ascending), metric.
    """

    def __init__(self, M: int, n_splits: int, blocks: dict[TaskSet, np.ndarray]):
        self.M = M
        self.n_splits = n_splits
        self.blocks = blocks
        for s, b in blocks.items():
            if b.shape != (n_splits, len(s), 2):
                raise IncompleteStage1(f"set {s.label}: sample block shape {b.shape}, expected {(n_splits, len(s), 2)}")

    def samples(self, s: TaskSet, task: int, metric: MetricKind | str) -> np.ndarray:
        try:
            block = self.blocks[s]
        except KeyError:
            raise IncompleteStage1(f"no Stage-1 samples for set {s.label}") from None
        if task not in s:
            raise IncompleteStage1(f"task {task} not in set {s.label}")
        return block[:, s.members.index(task), MetricKind(metric).column]

    def evaluations(self):
        for s in sorted(self.blocks):
            block = self.blocks[s]
            for k in range(self.n_splits):
                yield Evaluation(s, k, block[k])

    def to_csv(self, path: str | Path) -> None:
        write_replay(path, self.evaluations())

    def task_std(self) -> list[dict]:
        """Per-task, per-scenario sample standard deviations (ddof=1)."""
        rows = []
        fams = base_case_sets(self.M)
        for s in sorted(self.blocks):
            block = self.blocks[s]
            sd = block.std(axis=0, ddof=1)
            for i, t in enumerate(s):
                rows.append(
                    {
                        "task": t,
                        "set": s.label,
                        "scenarios": "+".join(f.value for f in fams.get(s, [])),
                        "aupr_std": float(sd[i, 0]),
                        "auroc_std": float(sd[i, 1]),
                    }
                )
        rows.sort(key=lambda r: (r["task"], TaskSet.parse(r["set"])))
        return rows


def run_stage1(env, M: int, n_splits: int, workers: int = 1) -> SampleMatrix:
    """Evaluate every base-case set on splits ``0..n_splits-1``."""
    if n_splits < 2:
        raise IncompleteStage1("Stage 1 needs n_splits >= 2")
    sets = sorted(base_case_sets(M))

    def collect(s: TaskSet) -> np.ndarray:
        block = np.empty((n_splits, len(s), 2))
        for k in range(n_splits):
            # environment errors already name the offending set
            block[k] = env.evaluate(s, k).values
        return block

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = dict(zip(sets, pool.map(collect, sets)))
    else:
        blocks = {s: collect(s) for s in sets}
    log.info("stage 1: %d sets x %d splits evaluated", len(sets), n_splits)
    return SampleMatrix(M, n_splits, blocks)


@dataclass(frozen=True, eq=False)
class TransferGraph:
    polarity: Polarity
    metric: MetricKind
    test: GraphTest
    adjacency: np.ndarray  # bool, M x M, [p, q] = p transfers onto q
    weight: np.ndarray  # mean paired difference, defined for every p != q

    @property
    def M(self) -> int:
        return self.adjacency.shape[0]

    @property
    def name(self) -> str:
        return f"{self.polarity.short}_{self.metric.value}_{self.test.value}"

    def edges(self) -> list[tuple[int, int]]:
        return [(int(p), int(q)) for p, q in zip(*np.nonzero(self.adjacency))]

    def predecessors(self, q: int) -> list[int]:
        return [int(p) for p in np.nonzero(self.adjacency[:, q])[0]]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "polarity": self.polarity.value,
            "metric": self.metric.value,
            "test": self.test.value,
            "M": self.M,
            "edges": [list(e) for e in self.edges()],
            "adjacency": self.adjacency.astype(int).tolist(),
            "weight": self.weight.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> TransferGraph:
        adj = np.array(doc["adjacency"], dtype=bool)
        w = np.array(doc["weight"], dtype=float)
        g = cls(Polarity(doc["polarity"]), MetricKind(doc["metric"]), GraphTest(doc["test"]), adj, w)
        _check_graph(g)
        return g

    def to_dot(self) -> str:
        lines = [f'digraph "{self.name}" {{']
        lines += [f"  {q};" for q in range(self.M)]
        for p, q in self.edges():
            lines.append(f'  {p} -> {q} [label="{self.weight[p, q]:.4g}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _check_graph(g: TransferGraph) -> None:
    M = g.adjacency.shape[0]
    if g.adjacency.shape != (M, M) or g.weight.shape != (M, M):
        raise ValueError(f"graph {g.name}: adjacency/weight must be square and equal-sized")
    if np.any(np.diag(g.adjacency)):
        raise ValueError(f"graph {g.name}: self-loop present")


def _comparison(M: int, q: int, p: int, polarity: Polarity) -> tuple[TaskSet, TaskSet]:
    """(treatment, baseline) sets whose rewards on q decide the (p, q) edge."""
    if polarity is Polarity.POSITIVE:
        return TaskSet((1 << p) | (1 << q)), TaskSet.single(q)
    full = TaskSet.full(M)
    return full.remove(p), full


def _mean_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(a.mean() - b.mean())


def _empty(M: int):
    return np.zeros((M, M), dtype=bool), np.zeros((M, M))


def build_graph_diff(samples: SampleMatrix, metric, polarity) -> TransferGraph:
    metric, polarity = MetricKind(metric), Polarity(polarity)
    M = samples.M
    adj, w = _empty(M)
    for q in range(M):
        for p in range(M):
            if p == q:
                continue
            treat, base = _comparison(M, q, p, polarity)
            d = _mean_diff(samples.samples(treat, q, metric), samples.samples(base, q, metric))
            w[p, q] = d
            adj[p, q] = d > 0.0
    return TransferGraph(polarity, metric, GraphTest.DIFF, adj, w)


def build_graph_ttest(
    samples: SampleMatrix,
    metric,
    polarity,
    alpha: float = 0.05,
    *,
    welch: bool = False,
    paired: bool = False,
    bonferroni: bool = False,
) -> TransferGraph:
    metric, polarity = MetricKind(metric), Polarity(polarity)
    M = samples.M
    if bonferroni:
        alpha = alpha / (M * (M - 1))
    adj, w = _empty(M)
    for q in range(M):
        for p in range(M):
            if p == q:
                continue
            treat, base = _comparison(M, q, p, polarity)
            a = samples.samples(treat, q, metric)
            b = samples.samples(base, q, metric)
            w[p, q] = _mean_diff(a, b)
            adj[p, q] = stats.t_test_one_sided(a, b, alpha, welch=welch, paired=paired).significant
    return TransferGraph(polarity, metric, GraphTest.TTEST, adj, w)


def nemenyi_columns(M: int, q: int) -> list[TaskSet]:
    """The 2M scenario columns for target q: STL, pairs, FMTL, leave-one-outs."""
    full = TaskSet.full(M)
    others = [p for p in range(M) if p != q]
    cols = [TaskSet.single(q)]
    cols += [TaskSet((1 << p) | (1 << q)) for p in others]
    cols.append(full)
    cols += [full.remove(p) for p in others]
    return cols


def build_graph_nemenyi(
    samples: SampleMatrix,
    metric,
    polarity,
    alpha: float = 0.05,
    *,
    friedman_alpha: float | None = None,
    tie_correction: bool = False,
) -> TransferGraph:
    """Friedman omnibus per target, then Nemenyi on the 2M scenario columns.

    Positive edge (p, q): the pair column {p, q} ranks significantly above STL {q}.
    Negative edge (p, q): the leave-p-out column ranks significantly above the full set.
    """
    metric, polarity = MetricKind(metric), Polarity(polarity)
    M = samples.M
    friedman_alpha = alpha if friedman_alpha is None else friedman_alpha
    adj, w = _empty(M)
    for q in range(M):
        cols = nemenyi_columns(M, q)
        index = {s: j for j, s in enumerate(cols)}
        blocks = np.column_stack([samples.samples(s, q, metric) for s in cols])
        for p in range(M):
            if p != q:
                treat, base = _comparison(M, q, p, polarity)
                w[p, q] = _mean_diff(blocks[:, index[treat]], blocks[:, index[base]])
        if not stats.friedman_test(blocks, friedman_alpha, tie_correction=tie_correction).significant:
            continue
        nem = stats.nemenyi_posthoc(blocks, alpha)
        for p in range(M):
            if p != q:
                treat, base = _comparison(M, q, p, polarity)
                adj[p, q] = nem.better(index[treat], index[base])
    return TransferGraph(polarity, metric, GraphTest.NEMENYI, adj, w)


def build_all_graphs(
    samples: SampleMatrix,
    *,
    ttest_alpha: float = 0.05,
    nemenyi_alpha: float = 0.05,
    friedman_alpha: float | None = None,
    welch: bool = False,
    paired: bool = False,
    bonferroni: bool = False,
    tie_correction: bool = False,
) -> list[TransferGraph]:
    """All twelve graphs, ordered by test, then metric, then polarity."""
    graphs = []
    for test in GraphTest:
        for metric in MetricKind:
            for pol in Polarity:
                if test is GraphTest.DIFF:
                    g = build_graph_diff(samples, metric, pol)
                elif test is GraphTest.TTEST:
                    g = build_graph_ttest(samples, metric, pol, ttest_alpha, welch=welch, paired=paired, bonferroni=bonferroni)
                else:
                    g = build_graph_nemenyi(
                        samples, metric, pol, nemenyi_alpha, friedman_alpha=friedman_alpha, tie_correction=tie_correction
                    )
                graphs.append(g)
    return graphs


def save_graphs(graphs, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for g in graphs:
        p = directory / f"{g.name}.json"
        p.write_text(json.dumps(g.to_json(), indent=1) + "\n", encoding="utf-8")
        (directory / f"{g.name}.dot").write_text(g.to_dot(), encoding="utf-8")
        paths.append(p)
    return paths


def load_graphs(directory: str | Path) -> list[TransferGraph]:
    out = []
    for p in sorted(Path(directory).glob("*.json")):
        try:
            out.append(TransferGraph.from_json(json.loads(p.read_text(encoding="utf-8"))))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"{p}: malformed graph file ({exc})") from None
    return out

