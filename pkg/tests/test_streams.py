import math

import numpy as np
import pytest
from scipy import stats

from tcsde.errors import ParameterError
from tcsde.streams import (
    RngStream,
    StableIncrementSpec,
    Substream,
    gaussian_increments,
    path_streams,
    sample_stable_increment,
    stable_increments,
    standard_stable,
)


def test_gaussian_empty():
    s = RngStream(1, 0, Substream.BROWNIAN)
    assert gaussian_increments(s, 0, 0.1).shape == (0, 1)


def test_gaussian_mean_within_clt_bound():
    s = RngStream(99, 3, Substream.BROWNIAN)
    x = gaussian_increments(s, 100_000, 0.01, dim=2)
    bound = 4 * 0.1 / math.sqrt(100_000)
    assert np.all(np.abs(x.mean(axis=0)) < bound)
    assert np.allclose(x.var(axis=0), 0.01, rtol=0.02)


def test_gaussian_bitwise_deterministic():
    a = gaussian_increments(RngStream(7, 11, Substream.BROWNIAN), 500, 0.25, 3)
    b = gaussian_increments(RngStream(7, 11, Substream.BROWNIAN), 500, 0.25, 3)
    assert a.tobytes() == b.tobytes()


def test_gaussian_prefix_property():
    long = gaussian_increments(RngStream(7, 0, Substream.BROWNIAN), 1000, 1.0)
    short = gaussian_increments(RngStream(7, 0, Substream.BROWNIAN), 10, 1.0)
    assert np.array_equal(long[:10], short)


def test_gaussian_rejects_bad_step():
    with pytest.raises(ParameterError):
        gaussian_increments(RngStream(1, 0, 0), 5, 0.0)
    with pytest.raises(ParameterError):
        gaussian_increments(RngStream(1, 0, 0), 5, -1.0)


def test_substreams_and_paths_differ():
    bm, sub = path_streams(5, 0)
    assert bm != sub
    x = bm.generator.random(8)
    y = sub.generator.random(8)
    z = RngStream(5, 1, Substream.BROWNIAN).generator.random(8)
    assert not np.array_equal(x, y)
    assert not np.array_equal(x, z)


def test_fresh_restarts_stream():
    s = RngStream(3, 2, Substream.SUBORDINATOR)
    first = s.generator.random(4)
    again = s.fresh().generator.random(4)
    assert np.array_equal(first, again)


def test_negative_path_index_rejected():
    with pytest.raises(ParameterError):
        RngStream(1, -1, Substream.BROWNIAN)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
def test_stable_spec_rejects_alpha(alpha):
    with pytest.raises(ParameterError):
        StableIncrementSpec(alpha, 1.0)


def test_stable_spec_rejects_step():
    with pytest.raises(ParameterError):
        StableIncrementSpec(0.9, 0.0)


def test_stable_laplace_unit_step():
    x = stable_increments(RngStream(2024, 0, Substream.SUBORDINATOR), StableIncrementSpec(0.9, 1.0), 100_000)
    v = np.exp(-x)
    se = v.std(ddof=1) / math.sqrt(v.size)
    assert abs(v.mean() - math.exp(-1.0)) < 3 * se


@pytest.mark.parametrize("h", [1e-4, 2.0**-8, 0.5, 3.0])
def test_stable_strictly_positive(h):
    x = stable_increments(RngStream(8, 0, Substream.SUBORDINATOR), StableIncrementSpec(0.9, h), 20_000)
    assert np.all(x > 0)


def test_stable_self_similarity_ks():
    h = 2.0**-4
    a = stable_increments(RngStream(21, 0, Substream.SUBORDINATOR), StableIncrementSpec(0.9, h), 10_000)
    b = h ** (1 / 0.9) * stable_increments(
        RngStream(21, 1, Substream.SUBORDINATOR), StableIncrementSpec(0.9, 1.0), 10_000
    )
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_stable_prefix_independent_of_count():
    a = standard_stable(RngStream(4, 0, 1), 0.7, 3000)
    b = standard_stable(RngStream(4, 0, 1), 0.7, 10)
    assert np.array_equal(a[:10], b)


def test_sample_stable_increment_matches_block_head():
    spec = StableIncrementSpec(0.9, 0.1)
    one = sample_stable_increment(RngStream(4, 0, 1), spec)
    many = stable_increments(RngStream(4, 0, 1), spec, 5)
    assert one == many[0] and one > 0


def test_small_alpha_heavy_but_finite():
    x = standard_stable(RngStream(4, 0, 1), 0.3, 5000)
    assert np.all(np.isfinite(x)) and np.all(x > 0)
