"""Compiled inner loops: Philox draws, Beta noise, and the multi-bandit step.

Arms are stored flat, grouped by bandit: bandit ``j`` owns arms
``start[j]:start[j+1]``. All bandits have at least two arms.

Functions that call the scipy special functions through ctypes cannot be
cached on disk by numba and compile on first use.
"""

import ctypes
import math

import numpy as np
from numba import njit
from numba.extending import get_cython_function_address

_betaincinv = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double, ctypes.c_double, ctypes.c_double, ctypes.c_int)(
    get_cython_function_address("scipy.special.cython_special", "__pyx_fuse_0betaincinv")
)
_ndtri = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double, ctypes.c_int)(
    get_cython_function_address("scipy.special.cython_special", "ndtri")
)

# Philox4x64-10 constants (Random123)
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_FOUR = np.uint64(4)
_INV53 = 1.0 / 9007199254740992.0

TAG_OWN = 1
TAG_SHARED = 2


@njit(cache=True)
def _mulhilo(a, b):
    a_lo = a & _LO
    a_hi = a >> _S32
    b_lo = b & _LO
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    mid = (p0 >> _S32) + (p1 & _LO) + (p2 & _LO)
    hi = a_hi * b_hi + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True)
def uniform_at(j, c1, c2, c3, k0, k1):
    """j-th double of the stream numpy's ``Philox(counter=[0, c1, c2, c3]).random()`` yields."""
    blk = philox_block(np.uint64(j) // _FOUR + _ONE, c1, c2, c3, k0, k1)
    lane = j % 4
    x = blk[0] if lane == 0 else blk[1] if lane == 1 else blk[2] if lane == 2 else blk[3]
    return float(x >> _S11) * _INV53


@njit
def _normal_at(j, c1, c2, c3, k0, k1):
    u = uniform_at(j, c1, c2, c3, k0, k1)
    return _ndtri((u * 9007199254740992.0 + 0.5) * _INV53, 0)


@njit
def beta_rewards(k0, k1, split, mask, tasks, n, means, kappa, mixing, split_corr, out):
    """Beta(mu*kappa, (1-mu)*kappa) rewards for the first ``n`` members, both metrics.

    Latent normals per member: an own pair keyed by (split, set) and, when
    ``split_corr > 0``, a shared pair keyed by (split, task). The AUROC latent is
    mixed with the AUPR latent, then both go through the Beta quantile.
    """
    s = np.uint64(split)
    m = np.uint64(mask)
    a = math.sqrt(split_corr)
    b = math.sqrt(1.0 - split_corr)
    w2 = math.sqrt(1.0 - mixing * mixing)
    for i in range(n):
        z0 = _normal_at(2 * i, s, m, np.uint64(TAG_OWN), k0, k1)
        z1 = _normal_at(2 * i + 1, s, m, np.uint64(TAG_OWN), k0, k1)
        if split_corr > 0.0:
            t = tasks[i]
            z0 = a * _normal_at(2 * t, s, np.uint64(0), np.uint64(TAG_SHARED), k0, k1) + b * z0
            z1 = a * _normal_at(2 * t + 1, s, np.uint64(0), np.uint64(TAG_SHARED), k0, k1) + b * z1
        z1 = mixing * z0 + w2 * z1
        for c in range(2):
            mu = means[i, c]
            z = z0 if c == 0 else z1
            u = 0.5 * math.erfc(-z / math.sqrt(2.0))
            out[i, c] = _betaincinv(mu * kappa, (1.0 - mu) * kappa, u, 0)


@njit(cache=True)
def variances(m2, pulls, unbiased, out):
    for i in range(pulls.shape[0]):
        d = pulls[i] - 1.0 if unbiased else pulls[i]
        out[i] = m2[i] / d if d > 0 else 0.0


@njit(cache=True)
def gaps(mean, start, out):
    """|max over other arms of the same bandit - own mean|."""
    for j in range(start.shape[0] - 1):
        lo, hi = start[j], start[j + 1]
        top = lo
        for i in range(lo + 1, hi):
            if mean[i] > mean[top]:
                top = i
        second = -np.inf
        for i in range(lo, hi):
            if i != top and mean[i] > second:
                second = mean[i]
        best = mean[top]
        for i in range(lo, hi):
            out[i] = abs(best - mean[i]) if i != top else abs(second - best)


@njit(cache=True)
def complexity(gap, var, eps_gap, b):
    h = 0.0
    c = 16.0 / 3.0 * b
    for i in range(gap.shape[0]):
        g = max(gap[i], eps_gap)
        s = math.sqrt(var[i])
        x = (s + math.sqrt(var[i] + c * g)) / g
        h += x * x
    return h


@njit(cache=True)
def b_index(gap, var, pulls, a, b, out):
    for i in range(gap.shape[0]):
        t = pulls[i]
        out[i] = -gap[i] + math.sqrt(2.0 * a * var[i] / t) + 7.0 * a * b / (3.0 * t)


@njit(cache=True)
def select(mean, m2, pulls, start, budget, c, eps_gap, b, unbiased, gap, var, index):
    """Fill gap/var/index scratch arrays; return (chosen arm, complexity, a).

    Ties on the index go to the arm with fewer pulls, then the lower flat
    position (lower bandit, then lower arm index).
    """
    variances(m2, pulls, unbiased, var)
    gaps(mean, start, gap)
    h = complexity(gap, var, eps_gap, b)
    a = c * budget / h
    b_index(gap, var, pulls, a, b, index)
    best = 0
    for i in range(1, index.shape[0]):
        if index[i] > index[best] or (index[i] == index[best] and pulls[i] < pulls[best]):
            best = i
    return best, h, a


@njit(cache=True)
def apply_rewards(arms, rewards, initiator, pulls, mean, m2, own, induced):
    for j in range(arms.shape[0]):
        i = arms[j]
        x = rewards[j]
        n = pulls[i] + 1.0
        delta = x - mean[i]
        mean[i] += delta / n
        m2[i] += delta * (x - mean[i])
        pulls[i] = n
        if i == initiator:
            own[i] += 1
        else:
            induced[i] += 1


@njit
def run_simulated(
    t0,
    t_stop,
    budget,
    uniform,
    # bandit state
    mean,
    m2,
    pulls,
    own,
    induced,
    start,
    arm_set,
    set_evals,
    # fan-out
    fan_ptr,
    fan_arms,
    fan_pos,
    # environment tables per unique set
    set_masks,
    set_tasks,
    set_len,
    set_means,
    k0,
    k1,
    split_offset,
    kappa,
    mixing,
    split_corr,
    metric_col,
    # index constants
    c,
    eps_gap,
    b,
    unbiased,
):
    """Play rounds ``t0 .. t_stop-1`` against a simulated environment.

    Rounds below ``2 * n_sets`` (and every round when ``uniform``) cycle
    through the sets; the others use the GapE-V index. Returns delivered samples.
    """
    U = set_masks.shape[0]
    A = mean.shape[0]
    gap = np.empty(A)
    var = np.empty(A)
    index = np.empty(A)
    vals = np.empty((set_tasks.shape[1], 2))
    rew = np.empty(set_tasks.shape[1])
    delivered = 0
    for t in range(t0, t_stop):
        if uniform or t < 2 * U:
            u = t % U
            initiator = fan_arms[fan_ptr[u]]
        else:
            initiator, _, _ = select(mean, m2, pulls, start, budget, c, eps_gap, b, unbiased, gap, var, index)
            u = arm_set[initiator]
        n = set_len[u]
        beta_rewards(k0, k1, split_offset + t, set_masks[u], set_tasks[u], n, set_means[u], kappa, mixing, split_corr, vals)
        lo, hi = fan_ptr[u], fan_ptr[u + 1]
        for j in range(lo, hi):
            rew[j - lo] = vals[fan_pos[j], metric_col]
        apply_rewards(fan_arms[lo:hi], rew[: hi - lo], initiator, pulls, mean, m2, own, induced)
        set_evals[u] += 1
        delivered += hi - lo
    return delivered
