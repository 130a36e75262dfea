import json
import math
import threading

import numpy as np
import pytest

from auxsel.core import MetricKind, TaskSet
from auxsel.environment import (
    BetaNoise,
    Evaluation,
    SimulatedEnvironment,
    SyntheticModel,
    load_model,
    load_replay,
    load_table,
    write_replay,
)
from auxsel.errors import DomainError, MissingEntry, ParseError, ReplayExhausted, ValidationError

S = TaskSet.parse


def flat_model(M=3, **kw):
    return SyntheticModel(base=np.full(M, 0.5), transfer=np.zeros((M, M)), **kw)


def test_noise_collapse_at_huge_concentration():
    model = SyntheticModel(base=[0.3, 0.6], transfer=np.zeros((2, 2)), noise_concentration=1e9)
    env = SimulatedEnvironment(model, seed=11)
    for split in range(20):
        assert abs(env.evaluate(S("1"), split).reward(1) - 0.6) < 1e-3


def test_zero_transfer_gives_base_everywhere():
    model = SyntheticModel(base=[0.2, 0.4, 0.7], transfer=np.zeros((3, 3)))
    for mask in range(1, 8):
        s = TaskSet(mask)
        for m in s:
            assert model.true_mean(m, s) == pytest.approx([0.2, 0.4, 0.7][m], abs=0)


def test_single_effect_formula():
    transfer = np.zeros((3, 3))
    transfer[1, 0] = 0.2
    model = SyntheticModel(base=[0.5, 0.5, 0.5], transfer=transfer, saturation=1.0)
    assert model.true_mean(0, S("0-1")) == pytest.approx(0.5 + math.tanh(0.2), abs=1e-15)
    assert model.true_mean(0, S("0-1")) == pytest.approx(0.69737, abs=1e-5)
    # the reverse direction is untouched
    assert model.true_mean(1, S("0-1")) == 0.5


def test_saturation():
    transfer = np.zeros((2, 2))
    transfer[1, 0] = 10.0
    model = SyntheticModel(base=[0.1, 0.5], transfer=transfer, saturation=0.3)
    assert model.true_mean(0, S("0-1")) - 0.1 == pytest.approx(0.3 * math.tanh(10 / 0.3), abs=1e-15)
    assert model.true_mean(0, S("0-1")) == pytest.approx(0.4, abs=1e-12)


def test_clamp():
    transfer = np.zeros((2, 2))
    transfer[1, 0] = 5.0
    model = SyntheticModel(base=[0.9, 0.5], transfer=transfer, saturation=0.3)
    assert model.true_mean(0, S("0-1")) == 1 - 1e-6


def test_diagonal_ignored():
    model = SyntheticModel(base=[0.5, 0.5], transfer=[[0.3, 0.0], [0.0, 0.3]])
    assert model.true_mean(0, S("0")) == 0.5
    assert model.transfer[0, 0] == 0.0


def test_auroc_offset():
    model = flat_model(metric_offset=0.07)
    assert model.true_mean(1, S("1-2"), MetricKind.AUROC) == pytest.approx(0.57)


def test_true_mean_requires_membership():
    with pytest.raises(DomainError):
        flat_model().true_mean(0, S("1-2"))


def test_empty_set_rejected():
    with pytest.raises(DomainError):
        SimulatedEnvironment(flat_model()).evaluate(TaskSet(0), 0)


def test_deterministic_and_order_free(m6_model):
    env_a = SimulatedEnvironment(m6_model, seed=3)
    env_b = SimulatedEnvironment(m6_model, seed=3)
    pairs = [(S("0-2-4"), 9), (S("1"), 0), (S("0-1-2-3-4-5"), 17)]
    first = [env_a.evaluate(s, k).values for s, k in pairs]
    second = [env_b.evaluate(s, k).values for s, k in reversed(pairs)][::-1]
    for x, y in zip(first, second):
        assert np.array_equal(x, y)
    assert not np.array_equal(env_a.evaluate(S("1"), 0).values, SimulatedEnvironment(m6_model, 4).evaluate(S("1"), 0).values)


def test_concurrent_evaluations_match_sequential(m6_model):
    env = SimulatedEnvironment(m6_model, seed=5)
    jobs = [(TaskSet(mask), split) for mask in range(1, 64) for split in range(4)]
    expected = {j: env.evaluate(*j).values for j in jobs}
    got = {}

    def work(chunk):
        for j in chunk:
            got[j] = env.evaluate(*j).values

    threads = [threading.Thread(target=work, args=(jobs[i::4],)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(got[j], expected[j]) for j in jobs)


def test_mean_consistency(m6_model):
    env = SimulatedEnvironment(m6_model, seed=8)
    s = S("0-3")
    n = 100_000
    x = np.array([env.evaluate(s, k).values[:, 0] for k in range(n)])
    for i, task in enumerate(s):
        mu = m6_model.true_mean(task, s)
        assert abs(x[:, i].mean() - mu) < 3 * math.sqrt(mu * (1 - mu) / 151) / math.sqrt(n)


def test_variance_and_metric_correlation():
    model = SyntheticModel(base=[0.4, 0.6], transfer=np.zeros((2, 2)), noise_concentration=150, metric_mixing=0.6)
    env = SimulatedEnvironment(model, seed=2)
    v = np.array([env.evaluate(S("0"), k).values[0] for k in range(40_000)])
    assert v[:, 0].var() == pytest.approx(env.reward_variance(0, S("0")), rel=0.03)
    assert np.corrcoef(v.T)[0, 1] == pytest.approx(0.6, abs=0.02)


def test_split_correlation_one_gives_common_numbers():
    model = SyntheticModel(base=[0.5, 0.5, 0.5], transfer=np.zeros((3, 3)), split_correlation=1.0)
    env = SimulatedEnvironment(model, seed=1)
    for k in range(10):
        assert env.evaluate(S("0"), k).reward(0) == env.evaluate(S("0-1-2"), k).reward(0)


def test_split_correlation_zero_independent_across_sets():
    env = SimulatedEnvironment(flat_model(), seed=1)
    a = [env.evaluate(S("0"), k).reward(0) for k in range(2000)]
    b = [env.evaluate(S("0-1"), k).reward(0) for k in range(2000)]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.08


@pytest.mark.parametrize("kappa", [0.5, 5.0, 150.0, 1e6])
def test_rewards_bounded(kappa):
    model = SyntheticModel(base=[0.001, 0.999, 0.5], transfer=np.zeros((3, 3)), noise_concentration=kappa)
    env = SimulatedEnvironment(model, seed=0)
    for k in range(300):
        v = env.evaluate(S("0-1-2"), k).values
        assert v.min() >= 0.0 and v.max() <= 1.0


def test_evaluation_rejects_out_of_range():
    with pytest.raises(ValidationError):
        Evaluation(S("0"), 0, np.array([[0.5, 1.2]]))
    with pytest.raises(ValidationError):
        Evaluation(S("0-1"), 0, np.array([[0.5, 0.5]]))


def test_noise_params_validated():
    with pytest.raises(DomainError):
        BetaNoise(concentration=0)
    with pytest.raises(ValidationError):
        flat_model(metric_mixing=1.5)


# ---------------------------------------------------------------- model JSON


def test_model_json_round_trip(tmp_path, m6_model):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(m6_model.to_json()))
    back = load_model(p)
    assert np.array_equal(back.transfer, m6_model.transfer) and back.to_json() == m6_model.to_json()


def test_model_json_unknown_and_missing_keys():
    doc = flat_model().to_json()
    with pytest.raises(ValidationError, match="unknown"):
        SyntheticModel.from_json({**doc, "temperature": 1})
    del doc["saturation"]
    with pytest.raises(ValidationError, match="saturation"):
        SyntheticModel.from_json(doc)


def test_model_json_without_optional_key():
    doc = flat_model().to_json()
    del doc["split_correlation"]
    assert SyntheticModel.from_json(doc).split_correlation == 0.0


def test_model_shape_checks():
    with pytest.raises(ValidationError):
        SyntheticModel(base=[0.5, 0.5], transfer=np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        SyntheticModel(base=[1.5], transfer=[[0.0]])


# ---------------------------------------------------------------- replay


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_replay_single_record(tmp_path):
    p = tmp_path / "r.csv"
    write_lines(p, ["set,split,task,aupr,auroc", "0-3,4,0,0.25,0.5", "0-3,4,3,0.75,0.125"])
    env = load_replay(p)
    ev = env.evaluate(S("0-3"), 4)
    np.testing.assert_array_equal(ev.values, [[0.25, 0.5], [0.75, 0.125]])
    assert env.coverage() == {S("0-3"): [4]}
    assert env.M == 4


def test_replay_miss_names_the_set(tmp_path):
    p = tmp_path / "r.csv"
    write_lines(p, ["set,split,task,aupr,auroc", "1,0,1,0.5,0.5"])
    with pytest.raises(ReplayExhausted, match="set 1 at split 3"):
        load_replay(p).evaluate(S("1"), 3)


def test_replay_round_trip(tmp_path, m6_model):
    env = SimulatedEnvironment(m6_model, seed=9)
    evs = [env.evaluate(TaskSet(mask), k) for mask in (1, 6, 63) for k in range(3)]
    p = tmp_path / "r.csv"
    write_replay(p, evs)
    back = load_replay(p, 6)
    for ev in evs:
        assert np.array_equal(back.evaluate(ev.trained_set, ev.split).values, ev.values)
    assert p.read_bytes().count(b"\r") == 0


@pytest.mark.parametrize(
    "line,exc,lineno",
    [
        ("0-1,0,0,abc,0.5", ParseError, 3),
        ("0-1,x,0,0.5,0.5", ParseError, 3),
        ("1-0,0,0,0.5,0.5", ParseError, 3),
        ("0-1,0,0,0.5", ParseError, 3),
        ("0-1,0,0,1.5,0.5", ValidationError, 3),
        ("0-1,0,2,0.5,0.5", ValidationError, 3),
    ],
)
def test_replay_bad_rows(tmp_path, line, exc, lineno):
    p = tmp_path / "r.csv"
    write_lines(p, ["set,split,task,aupr,auroc", "0-1,0,1,0.5,0.5", line])
    with pytest.raises(exc, match=f"line {lineno}"):
        load_replay(p)


def test_replay_duplicate_record(tmp_path):
    p = tmp_path / "r.csv"
    write_lines(p, ["set,split,task,aupr,auroc", "0,0,0,0.5,0.5", "0,0,0,0.6,0.5"])
    with pytest.raises(ValidationError, match="duplicate"):
        load_replay(p)


def test_replay_incomplete_set(tmp_path):
    p = tmp_path / "r.csv"
    write_lines(p, ["set,split,task,aupr,auroc", "0-1,0,0,0.5,0.5"])
    with pytest.raises(ValidationError, match="do not cover"):
        load_replay(p)


def test_replay_bad_header(tmp_path):
    p = tmp_path / "r.csv"
    write_lines(p, ["set,task,split,aupr,auroc"])
    with pytest.raises(ParseError, match="line 1"):
        load_replay(p)


# ---------------------------------------------------------------- table


def test_table_mode(tmp_path):
    p = tmp_path / "t.csv"
    write_lines(p, ["set,task,aupr,auroc", "0,0,0.4,0.5", "0-1,0,0.6,0.7", "0-1,1,0.3,0.35"])
    model = load_table(p, BetaNoise(1e9), 2)
    env = SimulatedEnvironment(model, seed=1)
    assert env.kind == "table"
    assert env.evaluate(S("0-1"), 0).reward(0) == pytest.approx(0.6, abs=1e-3)
    assert model.true_mean(1, S("0-1"), "AUROC") == 0.35
    with pytest.raises(MissingEntry):
        env.evaluate(S("1"), 0)
