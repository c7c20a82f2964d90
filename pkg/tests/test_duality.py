import numpy as np
import pytest

from tcsde.duality import (
    coarsen_increments,
    coupled_inputs,
    quadratic_variation,
    sample_path_rows,
    solve_path,
    solve_tcsde,
)
from tcsde.errors import NumericalError, ParameterError
from tcsde.models import builtin_quintic, builtin_stiff_2d, builtin_zero
from tcsde.streams import RngStream, Substream, gaussian_increments


@pytest.mark.parametrize("scheme", ["em", "bem", "pem"])
def test_k1_fine_and_coarse_identical(scheme):
    m = builtin_quintic()
    fine, coarse = solve_tcsde(m, scheme, 1.0, 2.0**-8, 1, 2024, 3)
    assert fine.dual_trajectory.tobytes() == coarse.dual_trajectory.tobytes()
    assert fine.inverse.values.tobytes() == coarse.inverse.values.tobytes()


@pytest.mark.parametrize("k", [1, 4, 32])
def test_zero_model_constant(k):
    m = builtin_zero(initial=(0.7,))
    fine, coarse = solve_tcsde(m, "bem", 1.0, 2.0**-10, k, 1)
    assert fine.terminal_value.tolist() == [0.7] == coarse.terminal_value.tolist()


def test_coarse_factor_must_be_power_of_two():
    with pytest.raises(ParameterError):
        solve_tcsde(builtin_quintic(), "bem", 1.0, 2.0**-10, 3, 1)


def test_increment_coupling_exact():
    inp = coupled_inputs(5, 0, alpha=0.9, fine_step=2.0**-10, horizon=1.0, factors=[8], dim_noise=2)
    fine = inp.fine_increments
    coarse = inp.increments(8)
    for j in range(coarse.shape[0]):
        acc = fine[8 * j].copy()
        for i in range(1, 8):
            acc = acc + fine[8 * j + i]
        assert coarse[j].tobytes() == acc.tobytes()


def test_fine_increments_are_the_brownian_stream():
    inp = coupled_inputs(5, 2, alpha=0.9, fine_step=2.0**-9, horizon=1.0, factors=[4], dim_noise=1)
    ref = gaussian_increments(RngStream(5, 2, Substream.BROWNIAN), len(inp.fine_increments), 2.0**-9)
    assert np.array_equal(ref, inp.fine_increments)


def test_brownian_covers_both_resolutions():
    for seed in range(20):
        inp = coupled_inputs(seed, 0, alpha=0.9, fine_step=2.0**-10, horizon=1.0, factors=[64], dim_noise=1)
        assert len(inp.fine_increments) >= max(inp.steps(1), 64 * inp.steps(64)) + 64


def test_coarsen_helper():
    x = np.arange(12.0).reshape(6, 2)
    assert np.array_equal(coarsen_increments(x, 2, 3), x[0::2] + x[1::2])


def test_composition_matches_dual_trajectory():
    res = solve_path(builtin_stiff_2d(), "bem", 1.0, 2.0**-7, 11)
    t = np.linspace(0, 1, 777)
    vals = res.value_at(t)
    idx = np.round(res.inverse(t) / res.step).astype(int)
    assert np.array_equal(vals, res.dual_trajectory[idx])
    assert np.array_equal(res.value_at(1.0), res.terminal_value)


def test_rows_change_only_at_jump_times():
    res = solve_path(builtin_quintic(), "pem", 1.0, 2.0**-6, 4)
    grid = np.linspace(0, 1, 4001)
    rows = np.array(sample_path_rows(res, grid))
    jumps = res.inverse.jump_times
    for i in np.nonzero(np.any(np.diff(rows[:, 1:], axis=0) != 0, axis=1))[0]:
        a, b = grid[i], grid[i + 1]
        assert np.any((jumps > a) & (jumps <= b))


def test_sample_rows_trivial_cases():
    res = solve_path(builtin_zero(initial=(2.0,)), "em", 1.0, 2.0**-5, 0)
    rows = sample_path_rows(res, np.linspace(0, 1, 11))
    assert all(r[1] == 2.0 for r in rows)
    assert sample_path_rows(res, [0.0]) == [(0.0, 2.0)]
    with pytest.raises(ParameterError):
        sample_path_rows(res, [1.5])


def test_intervals_cover_horizon():
    res = solve_path(builtin_quintic(), "bem", 1.0, 2.0**-5, 9)
    iv = res.intervals()
    assert iv[0][0] == 0.0 and iv[-1][1] == 1.0
    assert all(a < b or (a == b == 1.0) for a, b, _ in iv)
    assert np.array_equal(iv[-1][2], res.terminal_value)


@pytest.mark.parametrize("seed", range(10))
def test_quadratic_variation_dampening(seed):
    res = solve_path(builtin_stiff_2d(), "bem", 1.0, 2.0**-8, seed)
    grid = np.linspace(0, 1, 3001)
    x = res.value_at(grid)
    assert quadratic_variation(x) <= quadratic_variation(res.dual_trajectory) + 1e-15


def test_error_carries_resolution():
    m = builtin_quintic().with_overrides(initial=np.array([50.0]))
    with pytest.raises(NumericalError) as info:
        solve_tcsde(m, "em", 3.0, 2.0**-2, 2, 0)
    assert info.value.resolution[0] in ("fine", "coarse")
    assert "resolution" in str(info.value)
