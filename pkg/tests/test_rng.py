import numpy as np
import pytest
from scipy import stats

from bvmlab.rng import NOISE, POSTERIOR, make_rng, substream


class TestSubstreams:
    def test_deterministic(self):
        a = substream(11, 0, 3, NOISE).random(64)
        b = substream(11, 0, 3, NOISE).random(64)
        np.testing.assert_array_equal(a, b)

    def test_keys_give_distinct_streams(self):
        keys = [(0, 0, NOISE), (0, 1, NOISE), (1, 0, NOISE), (0, 0, POSTERIOR)]
        draws = [substream(11, *k).random(32) for k in keys]
        for i in range(len(draws)):
            for j in range(i + 1, len(draws)):
                assert not np.array_equal(draws[i], draws[j])
        assert not np.array_equal(substream(11, 0).random(8), substream(12, 0).random(8))

    def test_substreams_uncorrelated(self):
        a = substream(3, 0, 0, NOISE).standard_normal(20000)
        b = substream(3, 0, 1, NOISE).standard_normal(20000)
        # |r| below 4 standard errors
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20000)
        assert stats.kstest(a, "norm").pvalue > 1e-3

    def test_make_rng_forms(self):
        g = np.random.default_rng(0)
        assert make_rng(g) is g
        np.testing.assert_array_equal(make_rng((5, 1, 2)).random(4), substream(5, 1, 2).random(4))
        np.testing.assert_array_equal(make_rng(5).random(4), substream(5).random(4))
        np.testing.assert_array_equal(make_rng(np.int64(5)).random(4), substream(5).random(4))
        ss = np.random.SeedSequence(9)
        assert make_rng(ss).random() == make_rng(np.random.SeedSequence(9)).random()
        with pytest.raises(ValueError):
            make_rng(())
