"""Command-line entry point: ``auxsel {stage1,stage2,stage3,oracle,run-all}``.

Every output is a pure function of the config and the seed: no timestamps,
no absolute paths, CSV with LF line endings.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import multibandit as mb
from .candidates import generate_arms, load_candidates, save_candidates, size_histogram, target_views
from .config import RunConfig, load_config
from .core import TaskSet, base_case_sets
from .environment import BetaNoise, ReplayEnvironment, SimulatedEnvironment, SyntheticModel, load_model, load_replay, load_table
from .errors import AuxselError, CapabilityError, ConfigError, DomainError, EnvironmentFailure, ParseError, ValidationError
from .oracle import exact_best_arms, true_simple_regret
from .transfer_graphs import build_all_graphs, load_graphs, run_stage1, save_graphs

log = logging.getLogger("auxsel")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def build_environment(cfg: RunConfig):
    spec = cfg.environment
    if spec.kind == "replay":
        return load_replay(cfg.resolve(spec.path), cfg.M)
    if spec.kind == "table":
        noise = BetaNoise(spec.noise_concentration, spec.metric_mixing, spec.split_correlation)
        return SimulatedEnvironment(load_table(cfg.resolve(spec.path), noise, cfg.M), cfg.seed)
    model = load_model(cfg.resolve(spec.path)) if spec.path else SyntheticModel.from_json(spec.model)
    if model.M != cfg.M:
        raise ConfigError(f"synthetic model has M={model.M} but config says M={cfg.M}")
    return SimulatedEnvironment(model, cfg.seed)


class MissingCoverage(EnvironmentFailure):
    def __init__(self, pairs):
        self.pairs = pairs
        listing = "\n".join(f"  set {s.label} split {k}" for s, k in pairs)
        super().__init__(f"replay lacks {len(pairs)} (set, split) pair(s):\n{listing}")


def _stage_dir(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.output_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- stage 1


def cmd_stage1(cfg: RunConfig, env=None) -> None:
    env = env or build_environment(cfg)
    if isinstance(env, ReplayEnvironment):
        need = [(s, k) for s in sorted(base_case_sets(cfg.M)) for k in range(cfg.n_splits)]
        missing = env.missing(need)
        if missing:
            raise MissingCoverage(missing)
    out = _stage_dir(cfg, "stage1")
    samples = run_stage1(env, cfg.M, cfg.n_splits, cfg.workers)
    samples.to_csv(out / "samples.csv")
    graphs = build_all_graphs(
        samples,
        ttest_alpha=cfg.alphas.ttest,
        nemenyi_alpha=cfg.alphas.nemenyi,
        friedman_alpha=cfg.alphas.friedman,
        welch=cfg.welch,
        paired=cfg.paired_t,
        bonferroni=cfg.bonferroni,
        tie_correction=cfg.tie_correction,
    )
    save_graphs(graphs, out / "graphs")
    rows = samples.task_std()
    write_csv(out / "task_std.csv", ["task", "set", "scenarios", "aupr_std", "auroc_std"], _repr_floats(rows))
    write_json(
        out / "summary.json",
        {
            "M": cfg.M,
            "n_splits": cfg.n_splits,
            "base_case_sets": len(samples.blocks),
            "evaluations": len(samples.blocks) * cfg.n_splits,
            "edge_counts": {g.name: len(g.edges()) for g in graphs},
        },
    )
    log.info("stage 1 done: %d graphs", len(graphs))


def _repr_floats(rows):
    return [{k: repr(v) if isinstance(v, float) else v for k, v in r.items()} for r in rows]


# ---------------------------------------------------------------- stage 2


def cmd_stage2(cfg: RunConfig) -> None:
    gdir = Path(cfg.output_dir) / "stage1" / "graphs"
    if not gdir.is_dir():
        raise ConfigError(f"no Stage-1 graphs under {gdir}; run stage1 first")
    graphs = load_graphs(gdir)
    try:
        gen = generate_arms(graphs, cfg.M)
    except DomainError as exc:
        raise ParseError(f"{gdir}: {exc}") from None
    out = _stage_dir(cfg, "stage2")
    save_candidates(out / "candidates.json", gen.candidates, cfg.M, gen.raw_count)
    hist = size_histogram(gen.candidates)
    write_csv(out / "candidate_sizes.csv", ["size", "count"], [{"size": k, "count": v} for k, v in hist.items()])
    write_json(out / "target_views.json", target_views(gen.candidates, cfg.M))
    log.info("stage 2 done: %d raw, %d unique candidates", gen.raw_count, len(gen.candidates))


# ---------------------------------------------------------------- stage 3


def _stage3_arms(cfg: RunConfig):
    path = Path(cfg.output_dir) / "stage2" / "candidates.json"
    if not path.is_file():
        raise ConfigError(f"no candidate file at {path}; run stage2 first")
    cands, M = load_candidates(path)
    if M != cfg.M:
        raise ConfigError(f"candidate file has M={M} but config says M={cfg.M}")
    arms, notes = mb.stage3_arms(cands, cfg.M, include_base_cases=cfg.include_base_case_arms, bandits=cfg.bandits)
    for n in notes:
        log.warning(n)
    return arms, notes


def _oracle_for(cfg: RunConfig, env, arms):
    if isinstance(env, ReplayEnvironment):
        return None
    return exact_best_arms(env.model, arms, cfg.metric, bandits=cfg.bandits, b=cfg.gape.b)


def cmd_stage3(cfg: RunConfig, env=None) -> None:
    env = env or build_environment(cfg)
    arms, notes = _stage3_arms(cfg)
    gape = mb.GapEConfig(cfg.gape.c, cfg.gape.eps_gap, cfg.gape.b, cfg.unbiased_variance, cfg.check_invariants)
    state = mb.init(arms, cfg.M, cfg.budget, cfg.metric, gape, bandits=cfg.bandits, split_offset=cfg.split_offset)
    oracle = _oracle_for(cfg, env, arms)
    out = _stage_dir(cfg, "stage3")
    snaps: list[mb.RoundMetrics] = []
    init_rounds = 2 * len(state.sets)
    at_init: list = []
    with open(out / "rounds.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        write = mb.write_jsonl(fh)

        def sink(rec: mb.PullRecord) -> None:
            write(rec)
            if rec.t == init_rounds:
                at_init[:] = [state.own.copy(), state.induced.copy()]

        recs = mb.run(state, env, sink=sink, snapshot_every=cfg.cadence, on_snapshot=snaps.append, oracle=oracle)
    init_own, init_induced = at_init

    write_csv(out / "metrics.csv", mb.SNAPSHOT_COLUMNS, [r for s in snaps for r in s.rows()])
    write_csv(out / "recommendations.csv", REC_COLUMNS, _recommendation_rows(state, recs, oracle))
    write_csv(out / "pulls_table.csv", PULL_COLUMNS, mb.pull_table(state))
    state_post = _post_init_view(state, init_own, init_induced)
    write_csv(out / "pulls_table_post_init.csv", PULL_COLUMNS, mb.pull_table(state_post))
    final = snaps[-1]
    write_csv(
        out / "pulls_by_type.csv",
        ["bandit", "kind", "own_pulls_per_set", "induced_pulls_per_set"],
        [
            {"bandit": b.bandit, "kind": k, "own_pulls_per_set": repr(o), "induced_pulls_per_set": repr(i)}
            for b in final.bandits
            for k, (o, i) in b.by_type.items()
        ],
    )
    write_csv(out / "arm_stats.csv", ARM_COLUMNS, mb.arm_table(state))
    write_json(
        out / "summary.json",
        {
            "budget": state.budget,
            "unique_sets": len(state.sets),
            "arms": state.n_arms,
            "bandits": state.bandits,
            "initialization_rounds": init_rounds,
            "delivered_samples": state.delivered,
            "invariant_violations": state.invariant_violations,
            "any_error": final.error,
            "notes": notes,
        },
    )
    if state.invariant_violations:
        raise ValidationError(f"{state.invariant_violations} bookkeeping invariant violation(s) during stage 3")
    log.info("stage 3 done: %d rounds, %d samples delivered", state.t, state.delivered)


REC_COLUMNS = ["bandit", "arm", "set", "set_size", "kind", "empirical_mean", "pulls", "true_mean", "simple_regret", "error"]
PULL_COLUMNS = ["task", "own_pulls", "induced_pulls", "ratio_of_own_pulls"]
ARM_COLUMNS = ["bandit", "arm", "set", "kind", "pulls", "own_pulls", "induced_pulls", "mean", "variance", "gap"]


class _TallyView:
    # duck-typed stand-in for pull_table: tallies after initialization only
    def __init__(self, state, own, induced):
        self.bandits = state.bandits
        self.arms_of = state.arms_of
        self.own = own
        self.induced = induced


def _post_init_view(state, init_own, init_induced) -> _TallyView:
    return _TallyView(state, state.own - init_own, state.induced - init_induced)


def _recommendation_rows(state, recs, oracle) -> list[dict]:
    rows = []
    for m in state.bandits:
        s = recs[m]
        flat = next(i for i in state.arms_of(m) if state.sets[state.arm_set[i]] == s)
        row = {
            "bandit": m,
            "arm": int(state.arm_k[flat]),
            "set": s.label,
            "set_size": len(s),
            "kind": state.candidates[state.arm_set[flat]].kind,
            "empirical_mean": repr(float(state.mean[flat])),
            "pulls": int(state.pulls[flat]),
            "true_mean": "",
            "simple_regret": "",
            "error": "",
        }
        if oracle is not None:
            regret, err = oracle.regret(m, s)
            row.update(true_mean=repr(oracle.mean_of(m, s)), simple_regret=repr(regret), error=int(err))
        rows.append(row)
    return rows


# ---------------------------------------------------------------- oracle


def cmd_oracle(cfg: RunConfig, env=None, recommendations: Path | None = None) -> None:
    if cfg.environment.kind == "replay":
        raise CapabilityError("the oracle needs true means; replay environments have none")
    env = env or build_environment(cfg)
    cand_path = Path(cfg.output_dir) / "stage2" / "candidates.json"
    arms = _stage3_arms(cfg)[0] if cand_path.is_file() else None
    report = exact_best_arms(env.model, arms, cfg.metric, bandits=cfg.bandits, b=cfg.gape.b)
    out = _stage_dir(cfg, "oracle")
    report.save(out / "oracle_report.json")
    rec_path = recommendations or Path(cfg.output_dir) / "stage3" / "recommendations.csv"
    if recommendations is not None or rec_path.is_file():
        recs = _read_recommendations(rec_path)
        result = true_simple_regret(report, recs)
        write_csv(
            out / "regret.csv",
            ["bandit", "set", "simple_regret", "error"],
            [{"bandit": m, "set": recs[m].label, "simple_regret": repr(r), "error": int(e)} for m, (r, e) in result.items()],
        )
    log.info("oracle done: %d bandits", len(report.bandits))


def _read_recommendations(path: Path) -> dict[int, TaskSet]:
    try:
        return {int(r["bandit"]): TaskSet.parse(r["set"]) for r in read_csv(path)}
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: malformed recommendations ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read recommendations {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- run-all


def cmd_run_all(cfg: RunConfig) -> None:
    env = build_environment(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = cfg.to_json()
    doc.pop("output_dir")
    write_json(out / "config.json", doc)
    cmd_stage1(cfg, env)
    cmd_stage2(cfg)
    cmd_stage3(cfg, env)
    if not isinstance(env, ReplayEnvironment):
        cmd_oracle(cfg, env)


COMMANDS = {
    "stage1": cmd_stage1,
    "stage2": cmd_stage2,
    "stage3": cmd_stage3,
    "oracle": cmd_oracle,
    "run-all": cmd_run_all,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="auxsel", description="Auxiliary task set selection with transfer graphs and a multi-bandit.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int, help="override the Stage-1 worker count")
    p.add_argument("--recommendations", help="oracle only: recommendations CSV to score")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        changes = {k: v for k, v in (("seed", args.seed), ("output_dir", args.out), ("workers", args.workers)) if v is not None}
        if changes:
            cfg = cfg.replace(**changes)
        if args.command == "oracle":
            cmd_oracle(cfg, recommendations=Path(args.recommendations) if args.recommendations else None)
        else:
            COMMANDS[args.command](cfg)
    except (ConfigError, ParseError, ValidationError) as exc:
        print(f"auxsel: error: {exc}", file=sys.stderr)
        return 2
    except AuxselError as exc:
        print(f"auxsel: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
