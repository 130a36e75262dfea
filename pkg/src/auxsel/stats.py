"""Sample moments and the hypothesis tests used to build transfer graphs.

Special functions come from :mod:`scipy.special`; everything above them
(statistics, ranking conventions, critical differences) is computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import rankdata

from ._nemenyi_table import Q_ALPHA
from .errors import DomainError


@dataclass(frozen=True)
class SampleStats:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        """Unbiased variance, ``m2 / (count - 1)``."""
        if self.count < 2:
            raise DomainError("variance needs at least two samples")
        return self.m2 / (self.count - 1)


def update_stats(s: SampleStats, x: float) -> SampleStats:
    # Welford recurrence
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"non-finite sample {x}")
    n = s.count + 1
    delta = x - s.mean
    mean = s.mean + delta / n
    return SampleStats(n, mean, s.m2 + delta * (x - mean))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    alpha: float

    __test__ = False  # not a pytest class

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def regularized_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b)."""
    return float(special.betainc(a, b, x))


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a)."""
    return float(special.gammaincc(a, x))


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    half_tail = 0.5 * regularized_beta(df / 2.0, 0.5, df / (df + t * t))
    return half_tail if t > 0 else 1.0 - half_tail


def chi2_sf(x: float, dof: float) -> float:
    if x <= 0:
        return 1.0
    return regularized_upper_gamma(dof / 2.0, x / 2.0)


def t_test_one_sided(a, b, alpha: float = 0.05, *, welch: bool = False, paired: bool = False) -> TestResult:
    """Test H0: mean(a) <= mean(b); small p-values mean ``a`` is larger.

    Defaults to the pooled-variance two-sample Student test. ``welch`` switches
    to unequal variances, ``paired`` to the one-sample test on ``a - b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DomainError("t-test needs at least two samples per group")
    if paired:
        if a.size != b.size:
            raise DomainError("paired t-test needs equal-length samples")
        d = a - b
        diff = d.mean()
        se = math.sqrt(d.var(ddof=1) / d.size)
        df = d.size - 1.0
    else:
        na, nb = a.size, b.size
        va, vb = a.var(ddof=1), b.var(ddof=1)
        diff = a.mean() - b.mean()
        if welch:
            qa, qb = va / na, vb / nb
            se = math.sqrt(qa + qb)
            df = (qa + qb) ** 2 / (qa**2 / (na - 1) + qb**2 / (nb - 1)) if se > 0 else na + nb - 2.0
        else:
            pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
            se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
            df = na + nb - 2.0
    if se == 0.0:
        if diff == 0.0:
            return TestResult(0.0, 1.0, alpha)
        stat = math.copysign(math.inf, diff)
    else:
        stat = diff / se
    return TestResult(float(stat), t_sf(stat, df), alpha)


def _blocks(blocks) -> np.ndarray:
    x = np.asarray(blocks, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise DomainError(f"need a (blocks >= 2) x (treatments >= 2) matrix, got shape {x.shape}")
    return x


def average_ranks(blocks) -> np.ndarray:
    """Mean within-block rank per treatment; larger values get larger ranks, ties averaged."""
    x = _blocks(blocks)
    return rankdata(x, method="average", axis=1).mean(axis=0)


def friedman_test(blocks, alpha: float = 0.05, *, tie_correction: bool = False) -> TestResult:
    """Friedman chi-square test; rows are blocks (splits), columns treatments."""
    x = _blocks(blocks)
    n, k = x.shape
    ranks = rankdata(x, method="average", axis=1)
    r = ranks.mean(axis=0)
    stat = 12.0 * n / (k * (k + 1)) * float(np.sum(r**2)) - 3.0 * n * (k + 1)
    if tie_correction:
        ties = 0.0
        for row in x:
            _, counts = np.unique(row, return_counts=True)
            ties += float(np.sum(counts**3 - counts))
        denom = 1.0 - ties / (n * (k**3 - k))
        stat = stat / denom if denom > 0 else 0.0
    stat = max(stat, 0.0)  # rounding can leave -1e-13 on identical columns
    return TestResult(stat, chi2_sf(stat, k - 1), alpha)


def nemenyi_critical_difference(k: int, n_blocks: int, alpha: float = 0.05) -> float:
    if alpha not in Q_ALPHA:
        raise DomainError(f"alpha={alpha} not tabulated; supported: {sorted(Q_ALPHA)}")
    table = Q_ALPHA[alpha]
    if k not in table:
        raise DomainError(f"k={k} outside tabulated range 2..{max(table)}")
    return table[k] * math.sqrt(k * (k + 1) / (6.0 * n_blocks))


@dataclass(frozen=True)
class NemenyiResult:
    avg_ranks: np.ndarray
    critical_difference: float
    significant: np.ndarray  # k x k symmetric boolean

    def better(self, i: int, j: int) -> bool:
        """Treatment ``i`` ranks significantly higher than ``j``."""
        return bool(self.significant[i, j] and self.avg_ranks[i] > self.avg_ranks[j])


def nemenyi_posthoc(blocks, alpha: float = 0.05) -> NemenyiResult:
    x = _blocks(blocks)
    n, k = x.shape
    cd = nemenyi_critical_difference(k, n, alpha)
    r = average_ranks(x)
    sig = np.abs(r[:, None] - r[None, :]) > cd
    return NemenyiResult(r, cd, sig)
