"""Subordinator grid paths and the discretized inverse subordinator.

A path stores ``D(0) = 0, D(h), D(2h), ...`` and is extended until it first
exceeds the horizon ``T``.  Its inverse is the step function

    E_h(t) = (min{n : D(nh) > t} - 1) * h,

i.e. ``E_h(t) = n*h`` on ``[D(nh), D((n+1)h))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExtensionError, ParameterError
from .streams import STABLE_BLOCK, RngStream, StableIncrementSpec, standard_stable


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SubordinatorPath:
    step: float
    values: np.ndarray
    alpha: float
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or self.values.size == 0 or self.values[0] != 0.0:
            raise ParameterError("subordinator values must be a 1-d array starting at 0")

    @property
    def terminated(self) -> bool:
        return bool(self.values[-1] > self.horizon)

    @property
    def terminal_index(self) -> int:
        """N with ``D(Nh) <= T < D((N+1)h)``."""
        if not self.terminated:
            raise ExtensionError("path does not exceed its horizon")
        return int(np.searchsorted(self.values, self.horizon, side="right")) - 1

    def times(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)


def generate_path(
    stream: RngStream,
    alpha: float,
    h: float,
    horizon: float,
    multiple_of: int = 1,
) -> SubordinatorPath:
    """Simulate ``D`` on the grid ``{0, h, 2h, ...}`` until it passes ``horizon``.

    With ``multiple_of = k`` the path is extended to the first index that is a
    multiple of ``k`` and whose value exceeds the horizon, which guarantees
    that ``subsample(path, j)`` terminates for every divisor ``j`` of ``k``.
    """
    if not (0.0 < h < 1.0):
        raise ParameterError(f"h must lie in (0, 1), got {h}")
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise ParameterError(f"horizon T must be positive, got {horizon}")
    if multiple_of < 1:
        raise ParameterError(f"multiple_of must be >= 1, got {multiple_of}")
    spec = StableIncrementSpec(alpha, h)
    scale = spec.scale

    chunks = [np.zeros(1)]
    last = 0.0
    length = 1
    while True:
        inc = scale * standard_stable(stream, alpha, STABLE_BLOCK)
        block = np.cumsum(np.concatenate(([last], inc)))[1:]
        chunks.append(block)
        length += block.size
        last = float(block[-1])
        if last > horizon:
            values = np.concatenate(chunks)
            first = int(np.searchsorted(values, horizon, side="right"))
            end = -(-first // multiple_of) * multiple_of
            if end < length:
                return SubordinatorPath(h, values[: end + 1], alpha, horizon)


def subsample(path: SubordinatorPath, k: int) -> SubordinatorPath:
    """Coarsen a path to step ``k*h`` by keeping every ``k``-th value."""
    if k < 1:
        raise ParameterError(f"subsampling factor must be >= 1, got {k}")
    if k == 1:
        return path
    usable = (path.values.size - 1) // k * k
    coarse = path.values[: usable + 1 : k]
    if not coarse[-1] > path.horizon:
        raise ExtensionError(
            f"coarse path with factor {k} does not pass T={path.horizon}; "
            "generate the fine path with multiple_of a multiple of k"
        )
    return SubordinatorPath(path.step * k, coarse, path.alpha, path.horizon)


@dataclass(frozen=True, eq=False)
class InverseTimeChange:
    """The step function ``E_h`` on ``[0, horizon]``.

    ``values`` holds ``D(0), ..., D(Nh)``, all within ``[0, horizon]``; the
    jump times are ``values[1:]``.
    """

    step: float
    horizon: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def jump_times(self) -> np.ndarray:
        return self.values[1:]

    @property
    def terminal_index(self) -> int:
        return self.values.size - 1

    @property
    def terminal_level(self) -> float:
        return self.terminal_index * self.step

    def index(self, t) -> np.ndarray | int:
        """``E_h(t) / h`` as an integer (array)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.horizon):
            raise ParameterError(f"query time outside [0, {self.horizon}]")
        n = np.searchsorted(self.values, t_arr, side="right") - 1
        return int(n) if n.ndim == 0 else n

    def __call__(self, t):
        n = self.index(t)
        return n * self.step


def invert(path: SubordinatorPath, horizon: float | None = None) -> InverseTimeChange:
    T = path.horizon if horizon is None else float(horizon)
    if not path.values[-1] > T:
        raise ExtensionError(f"path ends at {path.values[-1]} which does not exceed T={T}")
    n_terminal = int(np.searchsorted(path.values, T, side="right")) - 1
    return InverseTimeChange(path.step, T, path.values[: n_terminal + 1])


def inverse_on_grid(inv: InverseTimeChange, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``E_h`` on a uniform grid of ``n_points`` over ``[0, T]``."""
    t = np.linspace(0.0, inv.horizon, n_points)
    return t, inv(t)
