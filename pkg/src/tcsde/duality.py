"""Compose dual-SDE trajectories with the discretized inverse subordinator.

The time-changed solution is approximated by ``X_h(t) = Y_h(E_h(t))``.  For
error estimation the same randomness drives every resolution: one fine
subordinator path (coarsened by subsampling) and one fine Brownian increment
sequence (coarsened by summing blocks of ``k`` increments left to right).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterError
from .integrators import SchemeStep, integrate_dual_with_stats, make_scheme
from .models import ModelSpec
from .streams import gaussian_increments, path_streams
from .time_change import InverseTimeChange, SubordinatorPath, generate_path, invert, subsample

DEFAULT_ALPHA = 0.9


def coarsen_increments(fine: np.ndarray, k: int, n_coarse: int) -> np.ndarray:
    """Sum consecutive blocks of ``k`` fine increments, left to right."""
    if k == 1:
        return fine[:n_coarse].copy()
    head = fine[: n_coarse * k]
    acc = head[0::k].copy()
    for j in range(1, k):
        acc += head[j::k]
    return acc


def is_power_of_two(k: int) -> bool:
    return k >= 1 and k & (k - 1) == 0


@dataclass
class CoupledInputs:
    """Shared randomness of one path across several resolutions ``k * h0``."""

    fine_path: SubordinatorPath
    fine_increments: np.ndarray
    inverses: dict[int, InverseTimeChange]

    def steps(self, k: int) -> int:
        return self.inverses[k].terminal_index

    def increments(self, k: int) -> np.ndarray:
        return coarsen_increments(self.fine_increments, k, self.steps(k))


def coupled_inputs(
    master_seed: int,
    path_index: int,
    *,
    alpha: float,
    fine_step: float,
    horizon: float,
    factors,
    dim_noise: int,
) -> CoupledInputs:
    factors = sorted({1, *(int(k) for k in factors)})
    if not all(is_power_of_two(k) for k in factors):
        raise ParameterError(f"coarse factors must be powers of two, got {factors}")
    k_max = factors[-1]
    bm_stream, sub_stream = path_streams(master_seed, path_index)
    fine = generate_path(sub_stream, alpha, fine_step, horizon, multiple_of=k_max)
    inverses = {k: invert(subsample(fine, k)) for k in factors}
    # cover every resolution's terminal level plus one coarse block
    need = max(inv.terminal_index * k for k, inv in inverses.items()) + k_max
    dw = gaussian_increments(bm_stream, need, fine_step, dim_noise)
    return CoupledInputs(fine, dw, inverses)


@dataclass
class TcsdePathResult:
    horizon: float
    step: float
    inverse: InverseTimeChange
    dual_trajectory: np.ndarray
    newton_iterations: int
    max_abs_state: float

    @property
    def terminal_value(self) -> np.ndarray:
        return self.dual_trajectory[self.inverse.terminal_index]

    def value_at(self, t) -> np.ndarray:
        """``X_h(t) = Y_h(E_h(t))``; vectorized over ``t``."""
        return self.dual_trajectory[self.inverse.index(t)]

    def intervals(self) -> list[tuple[float, float, np.ndarray]]:
        """``(start, end, state)`` for each constancy interval of ``X_h`` in ``[0, T]``."""
        starts = self.inverse.values
        ends = np.append(starts[1:], self.horizon)
        return [(float(a), float(b), self.dual_trajectory[n]) for n, (a, b) in enumerate(zip(starts, ends))]


def _solve_one(model, scheme: SchemeStep, inverse: InverseTimeChange, dw: np.ndarray, label: str):
    try:
        traj, stats = integrate_dual_with_stats(model, scheme, inverse.terminal_level, dw)
    except NumericalError as exc:
        exc.resolution = (label, scheme.h)
        exc.args = (f"[{label} resolution h={scheme.h:g}] {exc.args[0]}",) + exc.args[1:]
        raise
    return TcsdePathResult(
        horizon=inverse.horizon,
        step=scheme.h,
        inverse=inverse,
        dual_trajectory=traj,
        newton_iterations=int(stats.newton_iterations[0]),
        max_abs_state=float(stats.max_norm[0]),
    )


def solve_tcsde(
    model: ModelSpec,
    scheme: str,
    horizon: float,
    fine_step: float,
    coarse_factor: int,
    master_seed: int,
    path_index: int = 0,
    *,
    alpha: float = DEFAULT_ALPHA,
    **scheme_options,
) -> tuple[TcsdePathResult, TcsdePathResult]:
    """Solve one coupled path at steps ``h0`` and ``k * h0``.

    Returns ``(fine, coarse)``; with ``k = 1`` both are computed from identical
    inputs and agree bit for bit.
    """
    if not is_power_of_two(coarse_factor):
        raise ParameterError(f"coarse_factor must be a power of two, got {coarse_factor}")
    h = coarse_factor * fine_step
    fine_scheme = make_scheme(scheme, model, fine_step, **scheme_options)
    coarse_scheme = make_scheme(scheme, model, h, **scheme_options)
    inputs = coupled_inputs(
        master_seed, path_index, alpha=alpha, fine_step=fine_step, horizon=horizon,
        factors=[coarse_factor], dim_noise=model.dim_noise,
    )
    fine = _solve_one(model, fine_scheme, inputs.inverses[1], inputs.increments(1), "fine")
    coarse = _solve_one(model, coarse_scheme, inputs.inverses[coarse_factor], inputs.increments(coarse_factor), "coarse")
    return fine, coarse


def solve_path(
    model: ModelSpec,
    scheme: str,
    horizon: float,
    step: float,
    master_seed: int,
    path_index: int = 0,
    *,
    alpha: float = DEFAULT_ALPHA,
    **scheme_options,
) -> TcsdePathResult:
    """Solve one path at a single resolution ``step``."""
    sch = make_scheme(scheme, model, step, **scheme_options)
    inputs = coupled_inputs(
        master_seed, path_index, alpha=alpha, fine_step=step, horizon=horizon,
        factors=[1], dim_noise=model.dim_noise,
    )
    return _solve_one(model, sch, inputs.inverses[1], inputs.increments(1), "single")


def sample_path_rows(result: TcsdePathResult, grid) -> list[tuple[float, ...]]:
    """Left-constant samples ``(t, X_1, ..., X_d)`` of the composed path."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > result.horizon):
        raise ParameterError("grid must lie within [0, T]")
    states = result.value_at(grid)
    return [(float(t), *map(float, x)) for t, x in zip(grid, states)]


def quadratic_variation(states: np.ndarray) -> float:
    inc = np.diff(states, axis=0)
    return float(np.sum(inc * inc))
