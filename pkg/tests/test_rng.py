import numpy as np
import pytest
from scipy import stats

from momentsens.rng import BLOCK, normal_rows, uniform_rows


def test_rows_do_not_depend_on_length():
    long = normal_rows(3, BLOCK + 500, 2)
    short = normal_rows(3, 700, 2)
    np.testing.assert_array_equal(long[:700], short)


@pytest.mark.parametrize("n_jobs", [None, 1, 2, 4])
def test_thread_count_is_irrelevant(n_jobs):
    n = 3 * BLOCK + 17
    ref = uniform_rows(11, n, 3, stream=2)
    np.testing.assert_array_equal(uniform_rows(11, n, 3, stream=2, n_jobs=n_jobs), ref)


def test_streams_and_seeds_differ():
    a = normal_rows(0, 1000, 1)
    assert not np.array_equal(a, normal_rows(0, 1000, 1, stream=1))
    assert not np.array_equal(a, normal_rows(1, 1000, 1))


def test_distributions():
    z = normal_rows(5, 200_000, 2)
    u = uniform_rows(5, 200_000, 1)[:, 0]
    assert stats.kstest(z[:, 0], "norm").pvalue > 1e-3
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    assert abs(np.corrcoef(z.T)[0, 1]) < 0.01
    assert u.min() >= 0 and u.max() < 1
