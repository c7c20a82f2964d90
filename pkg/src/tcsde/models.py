"""Dual-SDE coefficient sets and numerical probes of the growth assumptions.

Coefficient functions are batched: ``drift(t, x)`` maps ``x`` of shape
``(..., d)`` to ``(..., d)`` and ``diffusion(t, x)`` maps it to
``(..., d, m)``.  Built-in models use plain elementwise arithmetic only, so a
row's result never depends on the other rows in the batch.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError

Coefficient = Callable[[float, np.ndarray], np.ndarray]

ASSUMPTIONS = ("A1", "A2", "A3", "A4")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A dual SDE ``dY = b(t, Y) dt + g(t, Y) dW`` with regularity metadata.

    ``gamma``, ``one_sided_lipschitz`` (K1), ``monotonicity_eta`` (eta),
    ``moment_order`` (p*) and ``growth_constant`` (K) are the constants of the
    polynomial-growth, monotonicity, coercivity and time-regularity bounds.
    """

    name: str
    dim_state: int
    dim_noise: int
    drift: Coefficient
    diffusion: Coefficient
    initial: np.ndarray
    gamma: float
    one_sided_lipschitz: float
    monotonicity_eta: float
    moment_order: float
    growth_constant: float
    drift_jacobian: Coefficient | None = None
    # exact(t, w, y0) -> Y(t) given W(t) = w; only for closed-form models
    exact: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None
    params: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        x0 = np.array(self.initial, dtype=float).reshape(self.dim_state)
        x0.setflags(write=False)
        object.__setattr__(self, "initial", x0)
        if not self.gamma > 1.0:
            raise ParameterError(f"gamma must exceed 1, got {self.gamma}")

    @property
    def bem_eligible(self) -> bool:
        return self.monotonicity_eta > 2 and self.moment_order >= 4 * self.gamma - 2

    @property
    def pem_eligible(self) -> bool:
        return self.monotonicity_eta > 3 and self.moment_order >= 6 * self.gamma - 4

    @property
    def projection_exponent(self) -> float:
        return 1.0 / (2.0 * (self.gamma - 1.0))

    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        """Drift Jacobian, shape ``(..., d, d)``; forward differences if none is given."""
        if self.drift_jacobian is not None:
            return self.drift_jacobian(t, x)
        x = np.asarray(x, dtype=float)
        d = self.dim_state
        delta = 1e-7 * (1.0 + np.sqrt(np.sum(x * x, axis=-1)))
        base = self.drift(t, x)
        jac = np.empty(x.shape + (d,))
        for j in range(d):
            xp = x.copy()
            xp[..., j] += delta
            jac[..., :, j] = (self.drift(t, xp) - base) / delta[..., None]
        return jac

    def with_overrides(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)


# --- built-in models -------------------------------------------------------


def _quintic_k1(eta: float) -> float:
    # sup over x, y of the monotonicity quotient; attained on the diagonal x = y,
    # where it reduces to max_u 2u - 10u^4 + 2(eta-1)u^2
    roots = np.roots([-40.0, 0.0, 4.0 * (eta - 1.0), 2.0])
    roots = roots[np.abs(roots.imag) < 1e-12].real
    best = max(2 * u - 10 * u**4 + 2 * (eta - 1) * u * u for u in roots)
    return float(best) * (1 + 1e-9) + 1e-12


def builtin_quintic(eta: float = 4.0, moment_order: float = 26.0) -> ModelSpec:
    """``dY = (Y^2 - 2Y^5) dt + Y^2 dW``, ``Y(0) = 1``."""
    if eta <= 1:
        raise ParameterError("eta must exceed 1 for the quintic model")

    def drift(t, x):
        x2 = x * x
        return x2 - 2.0 * (x2 * x2 * x)

    def diffusion(t, x):
        return (x * x)[..., None]

    def jac(t, x):
        x2 = x * x
        return (2.0 * x - 10.0 * (x2 * x2))[..., None]

    return ModelSpec(
        name="quintic",
        dim_state=1,
        dim_noise=1,
        drift=drift,
        diffusion=diffusion,
        initial=np.array([1.0]),
        gamma=5.0,
        one_sided_lipschitz=_quintic_k1(eta),
        monotonicity_eta=eta,
        moment_order=moment_order,
        growth_constant=20.0,
        drift_jacobian=jac,
        params={"eta": eta, "moment_order": moment_order},
    )


def stiff_matrix(alpha_stiff: float) -> np.ndarray:
    a = alpha_stiff
    return 0.5 * np.array([[1.0 + a, 1.0 - a], [1.0 + a, 1.0 + a]])


def builtin_stiff_2d(
    alpha_stiff: float = 200.0,
    beta: float = 0.5,
    eta: float = 4.0,
    moment_order: float = 14.0,
    initial=(0.5, 1.0),
) -> ModelSpec:
    """``dY = (f(Y) - A Y) dt + beta diag(Y) dW`` with ``f(x) = x - x^3``."""
    if alpha_stiff <= 0:
        raise ParameterError(f"alpha_stiff must be positive, got {alpha_stiff}")
    A = stiff_matrix(alpha_stiff)
    a11, a12, a21, a22 = (float(v) for v in A.ravel())
    lam_min = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
    norm_a = float(np.linalg.norm(A, 2))
    b2 = beta * beta

    def drift(t, x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        out = np.empty_like(x)
        out[..., 0] = x1 - x1 * x1 * x1 - (a11 * x1 + a12 * x2)
        out[..., 1] = x2 - x2 * x2 * x2 - (a21 * x1 + a22 * x2)
        return out

    def diffusion(t, x):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = beta * x[..., 0]
        out[..., 1, 1] = beta * x[..., 1]
        return out

    def jac(t, x):
        out = np.empty(x.shape + (2,))
        out[..., 0, 0] = 1.0 - 3.0 * x[..., 0] * x[..., 0] - a11
        out[..., 0, 1] = -a12
        out[..., 1, 0] = -a21
        out[..., 1, 1] = 1.0 - 3.0 * x[..., 1] * x[..., 1] - a22
        return out

    # the cubic part is monotone, so only the linear part and the noise count
    k1 = 1.0 - lam_min + 0.5 * (eta - 1.0) * b2
    k = max(1.0 + norm_a, 1.5, 1.0 - lam_min + 0.5 * (moment_order - 1.0) * b2)
    return ModelSpec(
        name="stiff2d",
        dim_state=2,
        dim_noise=2,
        drift=drift,
        diffusion=diffusion,
        initial=np.array(initial, dtype=float),
        gamma=3.0,
        one_sided_lipschitz=k1,
        monotonicity_eta=eta,
        moment_order=moment_order,
        growth_constant=k,
        drift_jacobian=jac,
        params={"alpha_stiff": alpha_stiff, "beta": beta, "eta": eta, "moment_order": moment_order},
    )


def builtin_linear(
    a_coef: float,
    b_coef: float,
    initial: float = 1.0,
    eta: float = 4.0,
    moment_order: float = 8.0,
) -> ModelSpec:
    """Geometric Brownian motion ``dY = a Y dt + b Y dW`` with its exact solution."""

    def drift(t, x):
        return a_coef * x

    def diffusion(t, x):
        return (b_coef * x)[..., None]

    def jac(t, x):
        return np.full(x.shape + (1,), a_coef)

    def exact(t, w, y0):
        return np.asarray(y0) * np.exp((a_coef - 0.5 * b_coef * b_coef) * t + b_coef * np.asarray(w))

    k1 = a_coef + 0.5 * (eta - 1.0) * b_coef * b_coef
    k = max(abs(a_coef), a_coef + 0.5 * (moment_order - 1.0) * b_coef * b_coef, 1.0)
    return ModelSpec(
        name="linear",
        dim_state=1,
        dim_noise=1,
        drift=drift,
        diffusion=diffusion,
        initial=np.array([initial]),
        gamma=2.0,
        one_sided_lipschitz=k1,
        monotonicity_eta=eta,
        moment_order=moment_order,
        growth_constant=k,
        drift_jacobian=jac,
        exact=exact,
        params={"a": a_coef, "b": b_coef, "eta": eta, "moment_order": moment_order},
    )


def builtin_zero(initial=(1.0,), dim_noise: int = 1) -> ModelSpec:
    """Constant dynamics ``b = 0, g = 0``."""
    x0 = np.atleast_1d(np.asarray(initial, dtype=float))
    d = x0.size

    def drift(t, x):
        return np.zeros_like(x)

    def diffusion(t, x):
        return np.zeros(x.shape + (dim_noise,))

    def jac(t, x):
        return np.zeros(x.shape + (d,))

    return ModelSpec(
        name="zero",
        dim_state=d,
        dim_noise=dim_noise,
        drift=drift,
        diffusion=diffusion,
        initial=x0,
        gamma=2.0,
        one_sided_lipschitz=0.0,
        monotonicity_eta=4.0,
        moment_order=8.0,
        growth_constant=1.0,
        drift_jacobian=jac,
    )


MODEL_NAMES = ("quintic", "stiff2d", "linear")


def build_model(name: str, **overrides) -> ModelSpec:
    """Look up a built-in model by CLI name; ``overrides`` are passed through."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if name == "quintic":
        return builtin_quintic(**overrides)
    if name == "stiff2d":
        return builtin_stiff_2d(**overrides)
    if name == "linear":
        overrides.setdefault("a_coef", 0.5)
        overrides.setdefault("b_coef", 1.0)
        return builtin_linear(**overrides)
    if name == "zero":
        return builtin_zero(**overrides)
    raise ParameterError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


# --- assumption probes -----------------------------------------------------


@dataclass(frozen=True)
class AssumptionProbeReport:
    """Outcome of sampling one assumption inequality.

    ``worst_ratio <= 1`` exactly when the inequality held on every sample.
    ``fitted_constant`` is the smallest constant that would have made every
    sample pass (K for A1/A3/A4, K1 for A2).
    """

    assumption: str
    sampled_pairs: int
    worst_ratio: float
    fitted_constant: float
    declared_constant: float
    passed: bool


def _norm(v, axes):
    return np.sqrt(np.sum(v * v, axis=axes))


def probe_assumption(
    model: ModelSpec,
    assumption: str,
    box: float,
    n_samples: int,
    rng: np.random.Generator | int | None = None,
    *,
    time_box: float = 10.0,
    tolerance: float = 1e-9,
) -> AssumptionProbeReport:
    """Sample ``(x, y, t)`` uniformly from ``[-box, box]^d x [0, time_box]`` and
    report the worst violation of one assumption at the model's constants.

    Sampling can only refute a global inequality, so a pass is advisory.
    """
    if assumption not in ASSUMPTIONS:
        raise ParameterError(f"unknown assumption {assumption!r}")
    if n_samples < 1:
        raise ParameterError("n_samples must be >= 1")
    if not (box > 0 and math.isfinite(box)):
        raise ParameterError("box must be a positive finite half-width")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    d = model.dim_state
    x = rng.uniform(-box, box, (n_samples, d))
    y = rng.uniform(-box, box, (n_samples, d))
    t = rng.uniform(0.0, time_box, n_samples)
    s = rng.uniform(0.0, time_box, n_samples)
    gam = model.gamma
    K = model.growth_constant

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        nx = _norm(x, -1)
        ny = _norm(y, -1)
        if assumption == "A1":
            diff = _norm(x - y, -1)
            bx = _rowwise(model.drift, t, x)
            by = _rowwise(model.drift, t, y)
            lhs = _norm(bx - by, -1)
            weight = (1.0 + nx ** (gam - 1) + ny ** (gam - 1)) * diff
            quotient = lhs / weight
            declared = K
            ratio = lhs / (K * weight)
        elif assumption == "A2":
            dxy = x - y
            diff2 = np.sum(dxy * dxy, axis=-1)
            bx = _rowwise(model.drift, t, x)
            by = _rowwise(model.drift, t, y)
            gx = _rowwise(model.diffusion, t, x)
            gy = _rowwise(model.diffusion, t, y)
            dg = gx - gy
            lhs = np.sum((bx - by) * dxy, axis=-1) + 0.5 * (model.monotonicity_eta - 1.0) * np.sum(
                dg * dg, axis=(-2, -1)
            )
            quotient = lhs / diff2
            declared = model.one_sided_lipschitz
            ratio = 1.0 + (quotient - declared) / max(1.0, abs(declared))
        elif assumption == "A3":
            bx = _rowwise(model.drift, t, x)
            gx = _rowwise(model.diffusion, t, x)
            lhs = np.sum(bx * x, axis=-1) + 0.5 * (model.moment_order - 1.0) * np.sum(gx * gx, axis=(-2, -1))
            weight = 1.0 + nx * nx
            quotient = lhs / weight
            declared = K
            ratio = lhs / (K * weight)
        else:
            db = _rowwise(model.drift, t, x) - _rowwise(model.drift, s, x)
            dg = _rowwise(model.diffusion, t, x) - _rowwise(model.diffusion, s, x)
            lhs = np.maximum(_norm(db, -1), _norm(dg, (-2, -1)))
            weight = (1.0 + nx**gam) * np.sqrt(np.abs(t - s))
            quotient = lhs / weight
            declared = K
            ratio = lhs / (K * weight)

    ratio = ratio[np.isfinite(quotient) | np.isinf(ratio)]
    quotient = quotient[np.isfinite(quotient)]
    worst = float(np.max(ratio)) if ratio.size else 0.0
    fitted = float(np.max(quotient)) if quotient.size else 0.0
    return AssumptionProbeReport(
        assumption=assumption,
        sampled_pairs=n_samples,
        worst_ratio=worst,
        fitted_constant=fitted,
        declared_constant=float(declared),
        passed=bool(worst <= 1.0 + tolerance),
    )


def _rowwise(fn: Coefficient, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.stack([fn(float(ti), xi) for ti, xi in zip(t, x)])
