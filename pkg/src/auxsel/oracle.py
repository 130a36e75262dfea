"""Brute-force ground truth for small synthetic or table-backed instances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .core import MetricKind, TaskSet, all_subsets_containing
from .errors import CapabilityError, DomainError

POWER_SET_MAX_M = 16
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BanditTruth:
    bandit: int
    arms: list[TaskSet]
    means: list[float]
    variances: list[float]
    gaps: list[float]
    best_arm: int
    best_mean: float
    degenerate: bool  # every arm has the same true mean
    power_set_best: TaskSet | None = None
    power_set_best_mean: float | None = None

    @property
    def best_set(self) -> TaskSet:
        return self.arms[self.best_arm]


@dataclass(frozen=True)
class OracleReport:
    metric: MetricKind
    bandits: dict[int, BanditTruth]
    complexity: float  # variance-aware complexity over all arms, raw gaps (no floor)
    b: float = 1.0

    @property
    def degenerate(self) -> bool:
        return all(bt.degenerate for bt in self.bandits.values())

    def truth(self, m: int) -> BanditTruth:
        try:
            return self.bandits[m]
        except KeyError:
            raise DomainError(f"no bandit for task {m} in the oracle report") from None

    def mean_of(self, m: int, s: TaskSet) -> float:
        bt = self.truth(m)
        try:
            return bt.means[bt.arms.index(s)]
        except ValueError:
            raise DomainError(f"set {s!r} is not an arm of bandit {m}") from None

    def regret(self, m: int, s: TaskSet) -> tuple[float, bool]:
        """(simple regret, error flag) of recommending ``s`` to bandit ``m``.

        Sets within 1e-12 of the best true mean count as correct.
        """
        mu = self.mean_of(m, s)
        best = self.truth(m).best_mean
        return best - mu, mu < best - TIE_TOL

    def to_json(self) -> dict:
        out = {
            "metric": self.metric.value,
            "complexity": _json_float(self.complexity),
            "degenerate": self.degenerate,
            "bandits": [],
        }
        for m, bt in sorted(self.bandits.items()):
            out["bandits"].append(
                {
                    "bandit": m,
                    "best_arm": bt.best_arm,
                    "best_set": bt.best_set.to_json(),
                    "best_mean": bt.best_mean,
                    "degenerate": bt.degenerate,
                    "power_set_best": None if bt.power_set_best is None else bt.power_set_best.to_json(),
                    "power_set_best_mean": bt.power_set_best_mean,
                    "arms": [
                        {"set": s.to_json(), "mean": mu, "variance": v, "gap": g}
                        for s, mu, v, g in zip(bt.arms, bt.means, bt.variances, bt.gaps)
                    ],
                }
            )
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")


def _json_float(x: float):
    return x if math.isfinite(x) else str(x)


def _gaps(means: list[float]) -> list[float]:
    out = []
    for k, mu in enumerate(means):
        others = [x for j, x in enumerate(means) if j != k]
        out.append(abs(max(others) - mu))
    return out


def true_complexity(gaps, variances, b: float = 1.0) -> float:
    """Variance-aware complexity from true gaps and variances; infinite when some gap is zero."""
    h = 0.0
    for g, v in zip(gaps, variances):
        if g <= 0.0:
            return math.inf
        h += ((math.sqrt(v) + math.sqrt(v + 16.0 / 3.0 * b * g)) / g) ** 2
    return h


def _best_index(means: list[float]) -> int:
    top = max(means)
    return min(k for k, mu in enumerate(means) if mu == top)


def exact_best_arms(
    model,
    candidates=None,
    metric: MetricKind | str = MetricKind.AUPR,
    *,
    bandits=None,
    b: float = 1.0,
) -> OracleReport:
    """True best arm, gaps and complexity per bandit.

    ``model`` needs ``M``, ``true_mean(task, set, metric)`` and a ``noise`` with
    ``variance(mu)``. With ``candidates`` the arms of bandit m are the candidate
    sets containing m (candidate-list mode); without, they are all 2^(M-1)
    subsets containing m (power-set mode, M <= 16). The best subset over the
    full power set is reported whenever M <= 16.
    """
    metric = MetricKind(metric)
    M = model.M
    power_ok = M <= POWER_SET_MAX_M
    if candidates is None and not power_ok:
        raise CapabilityError(
            f"power-set mode enumerates 2^(M-1) sets per task and supports M <= {POWER_SET_MAX_M} (got M={M}); "
            "pass a candidate list instead"
        )
    sets = None if candidates is None else sorted({getattr(c, "set", c) for c in candidates})
    tasks = sorted(range(M) if bandits is None else {int(m) for m in bandits})
    out: dict[int, BanditTruth] = {}
    for m in tasks:
        arms = all_subsets_containing(m, M) if sets is None else [s for s in sets if m in s]
        if len(arms) < 2:
            raise DomainError(f"bandit {m} has {len(arms)} arm(s); need at least 2")
        means = [model.true_mean(m, s, metric) for s in arms]
        variances = [float(model.noise.variance(mu)) for mu in means]
        k = _best_index(means)
        ps_best = ps_mean = None
        if power_ok:
            if sets is None:
                ps_best, ps_mean = arms[k], means[k]
            else:
                full = all_subsets_containing(m, M)
                full_means = [model.true_mean(m, s, metric) for s in full]
                j = _best_index(full_means)
                ps_best, ps_mean = full[j], full_means[j]
        out[m] = BanditTruth(
            bandit=m,
            arms=arms,
            means=means,
            variances=variances,
            gaps=_gaps(means),
            best_arm=k,
            best_mean=means[k],
            degenerate=max(means) - min(means) <= TIE_TOL,
            power_set_best=ps_best,
            power_set_best_mean=ps_mean,
        )
    h = true_complexity([g for bt in out.values() for g in bt.gaps], [v for bt in out.values() for v in bt.variances], b)
    return OracleReport(metric, out, h, b)


def true_simple_regret(report: OracleReport, recommendations: dict[int, TaskSet]) -> dict[int, tuple[float, bool]]:
    """Per bandit (regret, error flag); recommendations must cover every bandit."""
    missing = sorted(set(report.bandits) - set(recommendations))
    if missing:
        raise DomainError(f"recommendations missing for bandits {missing}")
    return {m: report.regret(m, recommendations[m]) for m in sorted(report.bandits)}
