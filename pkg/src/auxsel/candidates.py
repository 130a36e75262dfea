"""Stage 2: graph searches turning transfer graphs into candidate auxiliary sets.

Each search collects tasks ``found`` around a root task ``m``. For positive
graphs the candidate is ``{m} | found``; for negative graphs the found tasks
(except ``m``) are removed from the full task set.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import MetricKind, Scenario, TaskSet, taskset_from_list
from .errors import DomainError, ParseError
from .transfer_graphs import GraphTest, Polarity, TransferGraph


class Search(str, enum.Enum):
    NEIGHBOURS = "Neighbours"
    TRANSITIVE = "Transitive"
    FILTERED_TRANSITIVE = "FilteredTransitive"
    CLIQUE = "Clique"


_ORDER = {
    e: i
    for enum_cls in (MetricKind, Polarity, GraphTest, Search)
    for i, e in enumerate(enum_cls)
}


@dataclass(frozen=True, order=False)
class Provenance:
    metric: MetricKind
    polarity: Polarity
    test: GraphTest
    search: Search
    root: int

    def sort_key(self) -> tuple:
        return (_ORDER[self.metric], _ORDER[self.polarity], _ORDER[self.test], _ORDER[self.search], self.root)

    def to_json(self) -> dict:
        return {
            "metric": self.metric.value,
            "polarity": self.polarity.value,
            "test": self.test.value,
            "search": self.search.value,
            "root": self.root,
        }

    @classmethod
    def from_json(cls, d: dict) -> Provenance:
        return cls(MetricKind(d["metric"]), Polarity(d["polarity"]), GraphTest(d["test"]), Search(d["search"]), int(d["root"]))


@dataclass(frozen=True)
class Candidate:
    """A candidate task set with every (graph, search, root) that produced it.

    ``base_families`` marks sets that entered as base-case arms (or were added
    to cover a task) rather than through a graph search.
    """

    set: TaskSet
    provenance: tuple[Provenance, ...] = ()
    base_families: tuple[Scenario, ...] = field(default=())

    def __post_init__(self):
        if not self.provenance and not self.base_families:
            raise DomainError(f"candidate {self.set!r} has no provenance")
        for p in self.provenance:
            if p.root not in self.set:
                raise DomainError(f"candidate {self.set!r} lacks its root {p.root}")

    @property
    def kind(self) -> str:
        """Type label used when tallying pulls by candidate type."""
        if self.provenance:
            return self.provenance[0].search.value
        return self.base_families[0].value

    def to_json(self) -> dict:
        d = {"set": self.set.to_json(), "provenance": [p.to_json() for p in self.provenance]}
        if self.base_families:
            d["base_families"] = [f.value for f in self.base_families]
        return d

    @classmethod
    def from_json(cls, d: dict, M: int = 64) -> Candidate:
        return cls(
            taskset_from_list(d["set"], M),
            tuple(Provenance.from_json(p) for p in d.get("provenance", [])),
            tuple(Scenario(f) for f in d.get("base_families", [])),
        )


def _combine(found: int, m: int, polarity: Polarity, M: int) -> TaskSet:
    if polarity is Polarity.POSITIVE:
        return TaskSet(found | (1 << m))
    return TaskSet(((1 << M) - 1) & ~(found & ~(1 << m)))


def _ancestors(adj: np.ndarray, m: int) -> int:
    M = adj.shape[0]
    preds = [int(sum(1 << int(p) for p in np.nonzero(adj[:, q])[0])) for q in range(M)]
    seen = 0
    frontier = preds[m]
    while frontier:
        low = frontier & -frontier
        frontier ^= low
        if seen & low:
            continue
        seen |= low
        frontier |= preds[low.bit_length() - 1] & ~seen
    return seen & ~(1 << m)


def search_neighbours(g: TransferGraph, m: int) -> TaskSet:
    found = 0
    for p in g.predecessors(m):
        found |= 1 << p
    return _combine(found, m, g.polarity, g.M)


def search_transitive(g: TransferGraph, m: int) -> TaskSet:
    return _combine(_ancestors(g.adjacency, m), m, g.polarity, g.M)


def spanning_filter(g: TransferGraph) -> np.ndarray:
    """Directed edges surviving a maximum-weight spanning forest of the undirected projection.

    Undirected weight is the largest |weight| over the directed edges present;
    equal weights are taken in (min endpoint, max endpoint) order.
    """
    adj, w = g.adjacency, g.weight
    M = g.M
    edges = []
    for p in range(M):
        for q in range(p + 1, M):
            present = [abs(w[a, b]) for a, b in ((p, q), (q, p)) if adj[a, b]]
            if present:
                edges.append((-max(present), p, q))
    edges.sort()
    parent = list(range(M))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    keep = np.zeros((M, M), dtype=bool)
    for _, p, q in edges:
        rp, rq = find(p), find(q)
        if rp != rq:
            parent[rp] = rq
            keep[p, q] = keep[q, p] = True
    return adj & keep


def search_filtered_transitive(g: TransferGraph, m: int) -> TaskSet:
    return _combine(_ancestors(spanning_filter(g), m), m, g.polarity, g.M)


def max_clique_containing(core: np.ndarray, m: int) -> int:
    """Bitmask of the largest clique of the undirected graph ``core`` containing ``m``.

    Among maximum cliques the one with the lexicographically smallest sorted
    member list wins: vertices are branched on in ascending order and only
    strictly larger cliques replace the incumbent.
    """
    M = core.shape[0]
    nbr = [sum(1 << int(j) for j in np.nonzero(core[i])[0] if j != i) for i in range(M)]
    best = [1 << m, 1]

    def expand(clique: int, size: int, cand: int) -> None:
        if size > best[1]:
            best[0], best[1] = clique, size
        while cand:
            if size + cand.bit_count() <= best[1]:
                return
            low = cand & -cand
            v = low.bit_length() - 1
            cand ^= low
            expand(clique | low, size + 1, cand & nbr[v])

    expand(1 << m, 1, nbr[m])
    return best[0]


def search_clique(g: TransferGraph, m: int) -> TaskSet:
    core = g.adjacency & g.adjacency.T
    found = max_clique_containing(core, m) & ~(1 << m)
    return _combine(found, m, g.polarity, g.M)


SEARCHES = {
    Search.NEIGHBOURS: search_neighbours,
    Search.TRANSITIVE: search_transitive,
    Search.FILTERED_TRANSITIVE: search_filtered_transitive,
    Search.CLIQUE: search_clique,
}


@dataclass(frozen=True)
class Generation:
    candidates: list[Candidate]
    raw_count: int


def generate_arms(graphs, M: int) -> Generation:
    """Run every search from every root on every graph, then merge equal sets."""
    graphs = list(graphs)
    keys = {(g.metric, g.polarity, g.test) for g in graphs}
    if len(graphs) != 12 or len(keys) != 12:
        raise DomainError("generate_arms needs the 12 distinct (metric, polarity, test) graphs")
    for g in graphs:
        if g.M != M:
            raise DomainError(f"graph {g.name} has M={g.M}, expected {M}")
    found: dict[TaskSet, list[Provenance]] = {}
    raw = 0
    for g in graphs:
        for search, fn in SEARCHES.items():
            for m in range(M):
                s = fn(g, m)
                raw += 1
                found.setdefault(s, []).append(Provenance(g.metric, g.polarity, g.test, search, m))
    cands = [Candidate(s, tuple(sorted(provs, key=Provenance.sort_key))) for s, provs in found.items()]
    cands.sort(key=lambda c: c.set.members)
    return Generation(cands, raw)


def candidates_to_json(cands, M: int, raw_count: int | None = None) -> dict:
    doc = {"M": M, "count": len(cands), "candidates": [c.to_json() for c in cands]}
    if raw_count is not None:
        doc["raw_count"] = raw_count
    return doc


def save_candidates(path: str | Path, cands, M: int, raw_count: int | None = None) -> None:
    Path(path).write_text(json.dumps(candidates_to_json(cands, M, raw_count), indent=1) + "\n", encoding="utf-8")


def load_candidates(path: str | Path) -> tuple[list[Candidate], int]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        M = int(doc["M"])
        return [Candidate.from_json(c, M) for c in doc["candidates"]], M
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed candidate file ({exc})") from None


def size_histogram(cands) -> dict[int, int]:
    return dict(sorted(Counter(len(c.set) for c in cands).items()))


def target_views(cands, M: int) -> dict:
    """Per target task: membership matrix (auxiliary task x candidate) and a trie
    over the candidates' auxiliary members in ascending order."""
    out = {}
    for m in range(M):
        sets = [c.set for c in cands if m in c.set]
        matrix = [[int(t in s) for s in sets] for t in range(M) if t != m]
        trie: dict = {}
        for s in sets:
            node = trie
            for t in s:
                if t != m:
                    node = node.setdefault(str(t), {})
            node["$"] = {}
        out[str(m)] = {
            "sets": [s.to_json() for s in sets],
            "rows": [t for t in range(M) if t != m],
            "matrix": matrix,
            "trie": trie,
        }
    return out
