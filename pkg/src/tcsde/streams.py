"""Reproducible random streams for Brownian and subordinator increments.

Every stream is keyed by ``(master_seed, path_index, label)``.  The key is fed
into :class:`numpy.random.SeedSequence` as ``entropy=master_seed`` and
``spawn_key=(path_index, label_code)`` and drives a counter-based Philox
generator, so the output depends only on the key and never on which thread
or process consumes it.

Gaussian variates use numpy's ziggurat sampler (``Generator.standard_normal``).
Stable variates use Kanter's representation of the one-sided stable law with
Laplace transform ``exp(-s**alpha)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

# Subordinator draws are consumed in fixed blocks so that a longer path always
# extends a shorter one drawn from the same stream.
STABLE_BLOCK = 1024


class Substream(enum.IntEnum):
    BROWNIAN = 0
    SUBORDINATOR = 1


@dataclass(eq=False)
class RngStream:
    """A keyed random stream.

    Two streams built from the same key produce the same sequence for the same
    sequence of calls.  Instances hold generator state, so a single instance
    must not be shared between threads; build one per (path, substream).
    """

    master_seed: int
    path_index: int
    label: Substream
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.path_index < 0:
            raise ParameterError(f"path_index must be non-negative, got {self.path_index}")
        self.label = Substream(self.label)
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed) & 0xFFFF_FFFF_FFFF_FFFF,
            spawn_key=(int(self.path_index), int(self.label)),
        )
        self._gen = np.random.Generator(np.random.Philox(seq))

    @property
    def key(self) -> tuple[int, int, int]:
        return (int(self.master_seed), int(self.path_index), int(self.label))

    def __eq__(self, other):
        return isinstance(other, RngStream) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def fresh(self) -> "RngStream":
        """Return a new stream with the same key, positioned at the start."""
        return RngStream(self.master_seed, self.path_index, self.label)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def path_streams(master_seed: int, path_index: int) -> tuple[RngStream, RngStream]:
    """The (brownian, subordinator) stream pair for one Monte Carlo path."""
    return (
        RngStream(master_seed, path_index, Substream.BROWNIAN),
        RngStream(master_seed, path_index, Substream.SUBORDINATOR),
    )


@dataclass(frozen=True)
class StableIncrementSpec:
    """Law of ``D(step)`` for the stable subordinator with ``psi(s) = s**alpha``."""

    alpha: float
    step: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.step > 0.0 and math.isfinite(self.step)):
            raise ParameterError(f"step must be positive, got {self.step}")

    @property
    def scale(self) -> float:
        # D(h) has the law of h**(1/alpha) * D(1)
        return self.step ** (1.0 / self.alpha)


def gaussian_increments(stream: RngStream, count: int, step: float, dim: int = 1) -> np.ndarray:
    """Draw ``count`` i.i.d. N(0, step * I_dim) vectors, shape ``(count, dim)``."""
    if count < 0:
        raise ParameterError(f"count must be non-negative, got {count}")
    if not (step > 0.0 and math.isfinite(step)):
        raise ParameterError(f"step must be positive, got {step}")
    if dim < 1:
        raise ParameterError(f"dim must be at least 1, got {dim}")
    z = stream.generator.standard_normal((count, dim))
    return math.sqrt(step) * z


def _kanter(u: np.ndarray, w: np.ndarray, alpha: float) -> np.ndarray:
    # u in (0, pi], w ~ Exp(1); result has Laplace transform exp(-s**alpha)
    a = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
    b = (np.sin((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
    return a * b


def standard_stable(stream: RngStream, alpha: float, count: int) -> np.ndarray:
    """Draw ``count`` variates of ``D(1)``.

    Draws happen in blocks of :data:`STABLE_BLOCK` (uniforms first, then
    exponentials), so the first ``n`` values never depend on ``count``.
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    n_blocks = -(-count // STABLE_BLOCK)
    out = np.empty(n_blocks * STABLE_BLOCK)
    gen = stream.generator
    for i in range(n_blocks):
        u = math.pi * (1.0 - gen.random(STABLE_BLOCK))
        w = gen.standard_exponential(STABLE_BLOCK)
        out[i * STABLE_BLOCK:(i + 1) * STABLE_BLOCK] = _kanter(u, w, alpha)
    return out[:count]


def stable_increments(stream: RngStream, spec: StableIncrementSpec, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. copies of ``D(spec.step)``."""
    return spec.scale * standard_stable(stream, spec.alpha, count)


def sample_stable_increment(stream: RngStream, spec: StableIncrementSpec) -> float:
    """One realization of ``D(spec.step)``; strictly positive.

    Consumes one whole block of the stream.
    """
    return float(stable_increments(stream, spec, 1)[0])
