"""Desk-scale acceptance criteria, one test each.

Each test records a short detail string; the terminal summary prints one
PASS/FAIL line per criterion. Run alone with ``pytest tests/test_acceptance.py``.
"""

import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

import oracles
from auxsel import multibandit as mb
from auxsel import stats
from auxsel.candidates import candidates_to_json, generate_arms, load_candidates, save_candidates, search_neighbours, search_transitive
from auxsel.cli import main, read_csv
from auxsel.core import TaskSet
from auxsel.environment import SimulatedEnvironment, SyntheticModel
from auxsel.oracle import exact_best_arms
from auxsel.transfer_graphs import Polarity, build_graph_diff, run_stage1
from conftest import all_subset_candidates, one_effect_model, plain_candidates
from test_candidates import random_graphs
from test_stats import t_fixture_grid

FIXTURES = Path(__file__).parent / "fixtures"
S = TaskSet.parse


def detail(record_property, text: str) -> None:
    record_property("detail", text)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    """One ``run-all`` on the M=6 fixture with the invariant checker enabled."""
    root = tmp_path_factory.mktemp("accept")
    cfg = root / "config.json"
    cfg.write_text(
        json.dumps(
            {
                "M": 6,
                "environment": {"kind": "synthetic", "path": str(FIXTURES / "m6_model.json")},
                "budget": 20000,
                "seed": 11,
                "check_invariants": True,
            }
        )
    )
    assert main(["run-all", "--config", str(cfg), "--out", str(root / "a")]) == 0
    return cfg, root


@pytest.mark.slow
@pytest.mark.criterion(1, "oracle identification at M=6 vs uniform allocation")
def test_criterion_1_oracle_identification(m6_model, record_property):
    cands = all_subset_candidates(6)
    report = exact_best_arms(m6_model)
    min_gap = min(min(bt.gaps) for bt in report.bandits.values())
    errors = {"gape": 0, "uniform": 0}
    t0 = time.perf_counter()
    for seed in range(50):
        env = SimulatedEnvironment(m6_model, seed)
        for policy in errors:
            state = mb.init(cands, 6, 20000, split_offset=50)
            recs = mb.run(state, env, policy=policy)
            errors[policy] += any(report.regret(m, s)[1] for m, s in recs.items())
    elapsed = time.perf_counter() - t0
    gape, unif = errors["gape"] / 50, errors["uniform"] / 50
    detail(record_property, f"min true gap {min_gap:.4f}; error GapE {gape:.0%}, uniform {unif:.0%}; {elapsed:.1f} s")
    assert min_gap >= 0.05
    assert elapsed < 60
    assert gape <= 0.20
    assert gape < unif, "multi-bandit error is not strictly below the uniform baseline"


@pytest.mark.criterion(2, "semi-overlap bookkeeping with the invariant checker")
def test_criterion_2_bookkeeping(full_run, record_property):
    _, root = full_run
    summary = json.loads((root / "a" / "stage3" / "summary.json").read_text())
    arms = read_csv(root / "a" / "stage3" / "arm_stats.csv")
    by_set = {}
    for a in arms:
        by_set.setdefault(a["set"], set()).add(int(a["pulls"]))
    shared = sum(1 for a in arms if Counter(x["set"] for x in arms)[a["set"]] > 1)
    detail(record_property, f"{summary['invariant_violations']} violations; {shared} of {len(arms)} arms share a set")
    assert summary["invariant_violations"] == 0
    assert all(len(v) == 1 for v in by_set.values())


@pytest.mark.criterion(3, "conservation recomputed from the round log")
def test_criterion_3_conservation(full_run, record_property):
    _, root = full_run
    stage3 = root / "a" / "stage3"
    rounds = [json.loads(line) for line in (stage3 / "rounds.jsonl").read_text().splitlines()]
    summary = json.loads((stage3 / "summary.json").read_text())
    own, total = Counter(), Counter()
    for r in rounds:
        own[(r["bandit"], r["arm"])] += 1
        for m, k, _ in r["fanout"]:
            total[(m, k)] += 1
    delivered = sum(len(r["fanout"]) for r in rounds)
    arms = read_csv(stage3 / "arm_stats.csv")
    table = {(int(a["bandit"]), int(a["arm"])): a for a in arms}
    detail(record_property, f"{len(rounds)} rounds, {delivered} samples delivered")
    assert [r["t"] for r in rounds] == list(range(1, 20001))
    assert sum(own.values()) == 20000 == sum(int(a["own_pulls"]) for a in arms)
    assert delivered == summary["delivered_samples"] == sum(int(a["pulls"]) for a in arms)
    for key, a in table.items():
        assert int(a["own_pulls"]) == own[key]
        assert int(a["pulls"]) == total[key]
        assert int(a["induced_pulls"]) == total[key] - own[key]
    tally = read_csv(stage3 / "pulls_table.csv")[-1]
    assert int(tally["own_pulls"]) == 20000
    assert int(tally["own_pulls"]) + int(tally["induced_pulls"]) == delivered


@pytest.mark.criterion(4, "own-pull ratio strings")
def test_criterion_4_ratio_strings(record_property):
    got = (mb.format_ratio(12630, 60273), mb.format_ratio(150000, 1385315))
    detail(record_property, f"{got[0]}, {got[1]}")
    assert got == ("20.95%", "10.83%")


@pytest.mark.criterion(5, "t-test, Friedman and Nemenyi correctness")
def test_criterion_5_statistics(record_property):
    worst = 0.0
    for a, b in t_fixture_grid():
        t, df = oracles.pooled_t(a, b)
        worst = max(worst, abs(stats.t_test_one_sided(a, b).p_value - oracles.t_upper_tail(t, df)))
    assert stats.friedman_test(np.tile([0.1, 0.2, 0.3], (10, 1))).statistic == 20.0
    assert stats.friedman_test([[1, 2, 3], [1, 3, 2], [2, 1, 3], [1, 1, 2]]).statistic == 3.875
    expected = 3.9326732110 * math.sqrt(44 * 45 / (6 * 500))
    cd_err = abs(stats.nemenyi_critical_difference(44, 500, 0.05) - expected)
    detail(record_property, f"max p-value error {worst:.1e}, CD error {cd_err:.1e}")
    assert worst < 1e-8
    assert cd_err < 1e-10


@pytest.mark.criterion(6, "candidate-generation properties on 100 random M=8 graph sets")
def test_criterion_6_candidates(tmp_path, record_property):
    M = 8
    n_cands = 0
    for seed in range(100):
        graphs = random_graphs(M, seed)
        gen = generate_arms(graphs, M)
        n_cands += len(gen.candidates)
        for c in gen.candidates:
            for p in c.provenance:
                assert p.root in c.set
        assert sum(len(c.provenance) for c in gen.candidates) == gen.raw_count
        for g in graphs:
            for m in range(M):
                s1, s2 = search_neighbours(g, m), search_transitive(g, m)
                assert m in s1 and m in s2
                assert s1.issubset(s2) if g.polarity is Polarity.POSITIVE else s2.issubset(s1)
        # dedup is idempotent: reloading and re-saving changes nothing
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_candidates(a, gen.candidates, M, gen.raw_count)
        cands, _ = load_candidates(a)
        assert len({c.set for c in cands}) == len(cands)
        save_candidates(b, cands, M, gen.raw_count)
        assert a.read_bytes() == b.read_bytes()
        again = generate_arms(graphs, M)
        assert candidates_to_json(again.candidates, M, again.raw_count) == json.loads(a.read_text())
    detail(record_property, f"{n_cands} candidates over 100 graph sets")


@pytest.mark.criterion(7, "single two-arm bandit with gap 0.3")
def test_criterion_7_two_arm_bandit(record_property):
    transfer = np.zeros((2, 2))
    transfer[1, 0] = math.atanh(0.3)
    model = SyntheticModel(base=[0.4, 0.5], transfer=transfer, noise_concentration=150.0)
    cands = plain_candidates("0", "0-1")
    report = exact_best_arms(model, cands, bandits=[0])
    assert report.truth(0).gaps[0] == pytest.approx(0.3, abs=1e-12)
    correct = 0
    for seed in range(100):
        state = mb.init(cands, 2, 200, bandits=[0])
        recs = mb.run(state, SimulatedEnvironment(model, seed))
        correct += recs[0] == S("0-1")
    detail(record_property, f"{correct}/100 correct")
    assert correct >= 95


@pytest.mark.criterion(8, "noise-free recovery of a single positive or negative effect")
def test_criterion_8_edge_recovery(record_property):
    rng = np.random.default_rng(8)
    hits = 0
    for seed in range(20):
        p, q = rng.choice(4, size=2, replace=False)
        pos = run_stage1(SimulatedEnvironment(one_effect_model(4, p, q, 0.1), seed), 4, 5)
        neg = run_stage1(SimulatedEnvironment(one_effect_model(4, p, q, -0.1), seed), 4, 5)
        ok = (
            build_graph_diff(pos, "AUPR", "positive").edges() == [(p, q)]
            and build_graph_diff(neg, "AUPR", "negative").edges() == [(p, q)]
        )
        hits += ok
    detail(record_property, f"{hits}/20 seeds recovered both edges")
    assert hits == 20


@pytest.mark.criterion(9, "plug-in complexity equals the true complexity")
def test_criterion_9_complexity(record_property):
    transfer = np.zeros((3, 3))
    transfer[1, 0], transfer[2, 0] = 0.12, -0.05
    model = SyntheticModel(base=[0.55, 0.5, 0.5], transfer=transfer)
    cands = plain_candidates("0", "0-1", "0-2", "0-1-2")
    report = exact_best_arms(model, cands, bandits=[0])
    bt = report.truth(0)
    state = mb.init(cands, 3, 1000, bandits=[0])
    state.mean[:] = bt.means
    state.pulls[:] = 10
    state.m2[:] = np.array(bt.variances) * 9  # unbiased variance divides by pulls - 1
    state.t = 2 * len(state.sets)
    plug_in = mb.complexity_estimate(state)
    rel = abs(plug_in - report.complexity) / report.complexity
    detail(record_property, f"relative difference {rel:.1e}")
    assert min(bt.gaps) > state.config.eps_gap
    assert rel <= 1e-12


@pytest.mark.criterion(10, "run-all is byte-identical across invocations")
def test_criterion_10_determinism(full_run, record_property):
    cfg, root = full_run
    assert main(["run-all", "--config", str(cfg), "--out", str(root / "b")]) == 0
    a_files = sorted(p.relative_to(root / "a") for p in (root / "a").rglob("*") if p.is_file())
    b_files = sorted(p.relative_to(root / "b") for p in (root / "b").rglob("*") if p.is_file())
    assert a_files == b_files
    differ = [p for p in a_files if (root / "a" / p).read_bytes() != (root / "b" / p).read_bytes()]
    detail(record_property, f"{len(a_files)} files compared, {len(differ)} differ")
    assert not differ
