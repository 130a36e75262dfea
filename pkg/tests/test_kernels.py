import numpy as np
import pytest

from auxsel import _kernels as K
from auxsel.core import RngStream


@pytest.mark.parametrize("seed,stream,coords", [(0, 0, (0, 0, 0)), (12345, 0x656E76, (7, 99, 1)), (2**64 - 1, 3, (2**63, 5, 2))])
def test_philox_matches_numpy(seed, stream, coords):
    rs = RngStream(seed, stream)
    expected = rs.generator(*coords).random(11)
    k0, k1 = rs.key
    got = [K.uniform_at(j, *(np.uint64(c) for c in coords), np.uint64(k0), np.uint64(k1)) for j in range(11)]
    np.testing.assert_array_equal(got, expected)


def test_gaps_per_bandit():
    mean = np.array([0.5, 0.7, 0.9, 0.3, 0.3])
    out = np.empty(5)
    K.gaps(mean, np.array([0, 3, 5]), out)
    np.testing.assert_allclose(out, [0.4, 0.2, 0.2, 0.0, 0.0], atol=1e-15)


def test_select_prefers_fewer_pulls_then_lower_position():
    # identical arms: equal index except through pulls
    mean = np.full(4, 0.5)
    m2 = np.full(4, 0.1)
    pulls = np.array([5.0, 4.0, 4.0, 5.0])
    scratch = [np.empty(4) for _ in range(3)]
    m2 = m2 * (pulls - 1)  # same variance everywhere
    best, _, _ = K.select(mean, m2, pulls, np.array([0, 2, 4]), 100.0, 0.5, 1e-3, 1.0, True, *scratch)
    assert best == 1
    pulls[:] = 4.0
    m2 = np.full(4, 0.3)
    best, _, _ = K.select(mean, m2, pulls, np.array([0, 2, 4]), 100.0, 0.5, 1e-3, 1.0, True, *scratch)
    assert best == 0
