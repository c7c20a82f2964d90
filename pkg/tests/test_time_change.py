import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tcsde.errors import ExtensionError, ParameterError
from tcsde.streams import RngStream, Substream
from tcsde.time_change import (
    InverseTimeChange,
    SubordinatorPath,
    generate_path,
    inverse_on_grid,
    invert,
    subsample,
)


def sub_stream(seed, idx=0):
    return RngStream(seed, idx, Substream.SUBORDINATOR)


@pytest.mark.parametrize("seed", range(5))
def test_path_strictly_increasing_from_zero(seed):
    p = generate_path(sub_stream(seed), 0.9, 2.0**-8, 1.0)
    assert p.values[0] == 0.0
    assert np.all(np.diff(p.values) > 0)


@pytest.mark.parametrize("seed", range(5))
def test_termination_rule(seed):
    h = 2.0**-8
    p = generate_path(sub_stream(seed), 0.9, h, 1.0)
    n = p.terminal_index
    assert p.values[n] <= 1.0 < p.values[n + 1]
    assert p.values.size == n + 2


def test_median_n_grows_as_h_shrinks():
    coarse = [generate_path(sub_stream(s), 0.9, 2.0**-4, 1.0).terminal_index for s in range(100)]
    n_fine = [generate_path(sub_stream(s), 0.9, 2.0**-8, 1.0).terminal_index for s in range(100)]
    assert np.median(n_fine) > np.median(coarse)


def test_generate_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        generate_path(sub_stream(0), 0.9, 1.0, 1.0)
    with pytest.raises(ParameterError):
        generate_path(sub_stream(0), 0.9, 0.1, 0.0)
    with pytest.raises(ParameterError):
        generate_path(sub_stream(0), 1.2, 0.1, 1.0)


def test_invert_worked_example():
    p = SubordinatorPath(0.5, [0.0, 0.4, 1.3], 0.9, 1.0)
    inv = invert(p)
    assert inv(1.0) == 0.5
    assert inv(0.0) == 0.0
    assert inv.terminal_level == 0.5


def test_tie_at_jump_point_is_left_closed():
    p = SubordinatorPath(0.5, [0.0, 0.4, 1.3], 0.9, 1.0)
    inv = invert(p)
    assert inv(0.4) == 0.5
    assert inv(np.nextafter(0.4, 0.0)) == 0.0


def test_query_outside_range():
    inv = invert(SubordinatorPath(0.5, [0.0, 0.4, 1.3], 0.9, 1.0))
    with pytest.raises(ParameterError):
        inv(1.01)
    with pytest.raises(ParameterError):
        inv(-0.1)


def test_invert_requires_termination():
    with pytest.raises(ExtensionError):
        invert(SubordinatorPath(0.5, [0.0, 0.4, 0.9], 0.9, 1.0))


def test_inverse_monotone_unit_jumps():
    p = generate_path(sub_stream(17), 0.9, 2.0**-6, 1.0)
    inv = invert(p)
    t, e = inverse_on_grid(inv, 5001)
    assert np.all(np.diff(e) >= 0)
    levels = np.unique(e)
    assert np.allclose(np.diff(levels) / inv.step, np.round(np.diff(levels) / inv.step))
    # jumps of E_h between consecutive jump times are exactly h
    at_jumps = inv(inv.jump_times)
    assert np.array_equal(np.diff(np.concatenate(([0.0], at_jumps))), np.full(at_jumps.size, inv.step))
    assert inv(1.0) == inv.terminal_level


def test_subsample_identity():
    p = generate_path(sub_stream(3), 0.9, 2.0**-6, 1.0)
    assert subsample(p, 1) is p


def test_subsample_aggregation_example():
    a, b, c, d = 0.1, 0.2, 0.3, 0.7
    p = SubordinatorPath(0.25, [0, a, a + b, a + b + c, a + b + c + d], 0.9, 1.0)
    q = subsample(p, 2)
    assert q.step == 0.5
    assert np.array_equal(q.values, [0, a + b, a + b + c + d])


def test_subsample_extension_error():
    p = SubordinatorPath(0.25, [0, 0.2, 0.5, 0.9, 1.2], 0.9, 1.0)
    with pytest.raises(ExtensionError):
        subsample(p, 3)


@pytest.mark.parametrize("k", [2, 4, 16, 64])
def test_subsample_values_are_fine_values(k):
    p = generate_path(sub_stream(5), 0.9, 2.0**-10, 1.0, multiple_of=64)
    q = subsample(p, k)
    assert np.array_equal(q.values, p.values[::k][: q.values.size])
    assert q.terminated


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), log_k=st.integers(1, 6), T=st.floats(0.2, 3.0))
def test_sandwich_property(seed, log_k, T):
    h0 = 2.0**-10
    k = 2**log_k
    h = k * h0
    fine = generate_path(sub_stream(seed), 0.9, h0, T, multiple_of=k)
    e0 = invert(fine)
    eh = invert(subsample(fine, k))
    t = np.linspace(0.0, T, 400)
    t = np.concatenate((t, e0.jump_times, eh.jump_times))
    a, b = e0(t), eh(t)
    assert np.all(a - h <= b) and np.all(b <= a + h0)


def test_inverse_dataclass_direct():
    inv = InverseTimeChange(0.1, 1.0, [0.0, 0.3, 0.7])
    assert inv.terminal_index == 2
    assert inv(0.5) == pytest.approx(0.1)
