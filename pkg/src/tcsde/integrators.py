"""One-step schemes for the dual SDE: explicit Euler, backward Euler, projected Euler.

All schemes have the form ``y_{n+1} = y_n + Psi(y_n, t_n, h, dW_n)``.

The ``*_batch`` kernels advance many independent paths at once.  Every
operation inside them is elementwise per row (Newton updates are frozen per
row once that row has converged), so a path's result is bit-identical whether
it is integrated alone or inside any batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, NewtonConvergenceError, ParameterError, SchemeGateError
from .models import ModelSpec

SCHEMES = ("em", "bem", "pem")

DEFAULT_NEWTON_TOL = 1e-12
DEFAULT_NEWTON_MAX_ITER = 50
DEFAULT_RHO = 0.9


@dataclass(frozen=True)
class SchemeStep:
    kind: str
    h: float
    newton_tol: float = DEFAULT_NEWTON_TOL
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER
    rho: float = DEFAULT_RHO
    projection_exponent: float | None = None

    @property
    def radius(self) -> float:
        """PEM projection radius ``h**(-alpha)``."""
        return self.h ** (-self.projection_exponent)


def max_bem_step(model: ModelSpec, rho: float = DEFAULT_RHO) -> float:
    """Largest h with ``2 h K1 <= rho`` and ``h <= 1``."""
    k1 = model.one_sided_lipschitz
    return 1.0 if k1 <= 0 else min(1.0, rho / (2.0 * k1))


def make_scheme(
    kind: str,
    model: ModelSpec,
    h: float,
    *,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER,
    rho: float = DEFAULT_RHO,
) -> SchemeStep:
    """Build a scheme for ``model`` at step ``h``, enforcing its admissibility gates."""
    kind = kind.lower()
    if kind not in SCHEMES:
        raise ParameterError(f"unknown scheme {kind!r}; choose from {', '.join(SCHEMES)}")
    if not (0.0 < h <= 1.0):
        raise ParameterError(f"step h must lie in (0, 1], got {h}")
    if kind == "bem":
        if not (0.0 < rho < 1.0):
            raise ParameterError(f"rho must lie in (0, 1), got {rho}")
        if newton_tol <= 0 or newton_max_iter < 1:
            raise ParameterError("newton_tol must be positive and newton_max_iter >= 1")
        if not model.bem_eligible:
            raise ParameterError(
                f"model {model.name!r} is not BEM-eligible: need eta > 2 and p* >= 4*gamma - 2"
            )
        h_max = max_bem_step(model, rho)
        if h > h_max:
            raise SchemeGateError(
                f"BEM step h={h} violates 2*h*K1 <= rho (K1={model.one_sided_lipschitz:.6g}, "
                f"rho={rho}); maximal admissible h is {h_max:.6g}",
                max_step=h_max,
            )
        return SchemeStep("bem", h, newton_tol, newton_max_iter, rho)
    if kind == "pem":
        if not model.pem_eligible:
            raise ParameterError(
                f"model {model.name!r} is not PEM-eligible: need eta > 3 and p* >= 6*gamma - 4"
            )
        return SchemeStep("pem", h, projection_exponent=model.projection_exponent)
    return SchemeStep("em", h)


@dataclass(frozen=True)
class StepOutcome:
    next_state: np.ndarray
    newton_iterations: int
    residual_norm: float


# --- batched kernels -------------------------------------------------------


def _row_norm(v: np.ndarray) -> np.ndarray:
    acc = v[..., 0] * v[..., 0]
    for j in range(1, v.shape[-1]):
        acc = acc + v[..., j] * v[..., j]
    return np.sqrt(acc)


def noise_term(g: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """``g @ dW`` for batched ``g`` of shape (P, d, m) and ``dW`` of shape (P, m)."""
    acc = g[..., 0] * dw[..., None, 0]
    for j in range(1, g.shape[-1]):
        acc = acc + g[..., j] * dw[..., None, j]
    return acc


def _solve(m: np.ndarray, r: np.ndarray) -> np.ndarray:
    d = r.shape[-1]
    if d == 1:
        return r / m[..., 0]
    if d == 2:
        a, b = m[..., 0, 0], m[..., 0, 1]
        c, e = m[..., 1, 0], m[..., 1, 1]
        det = a * e - b * c
        out = np.empty_like(r)
        out[..., 0] = (e * r[..., 0] - b * r[..., 1]) / det
        out[..., 1] = (a * r[..., 1] - c * r[..., 0]) / det
        return out
    return np.linalg.solve(m, r[..., None])[..., 0]


def em_batch(model, t, y, h, dw):
    return y + h * model.drift(t, y) + noise_term(model.diffusion(t, y), dw)


def project_batch(x: np.ndarray, radius: float) -> np.ndarray:
    nrm = _row_norm(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(nrm > radius, radius / nrm, 1.0)
    return x * factor[..., None]


def pem_batch(model, t, y, h, dw, radius):
    return em_batch(model, t, project_batch(y, radius), h, dw)


def bem_batch(model, t, y, h, dw, tol, max_iter):
    """Solve ``x - h b(t+h, x) = y + g(t, y) dW`` row by row with Newton's method.

    Returns ``(x, iterations, residual_norm, converged)``.
    """
    t_next = t + h
    rhs = y + noise_term(model.diffusion(t, y), dw)
    x = rhs + h * model.drift(t, y)
    d = y.shape[-1]
    eye = np.eye(d)
    residual = x - h * model.drift(t_next, x) - rhs
    rnorm = np.full(y.shape[0], np.inf)
    iters = np.zeros(y.shape[0], dtype=np.int64)
    todo = np.ones(y.shape[0], dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(todo)[0]
        if idx.size == 0:
            break
        xs = x[idx]
        jac = eye - h * model.jacobian(t_next, xs)
        xs = xs - _solve(jac, residual[idx])
        rs = xs - h * model.drift(t_next, xs) - rhs[idx]
        x[idx] = xs
        residual[idx] = rs
        iters[idx] += 1
        rn = _row_norm(rs)
        rnorm[idx] = rn
        finite = np.isfinite(rn)
        todo[idx] = finite & ~(rn <= tol)
        # rows that went non-finite are abandoned
        if not finite.all():
            rnorm[idx[~finite]] = np.inf
    converged = rnorm <= tol
    return x, iters, rnorm, converged


# --- single-step public API -----------------------------------------------


def _as_state(model: ModelSpec, y) -> np.ndarray:
    return np.asarray(y, dtype=float).reshape(1, model.dim_state)


def _as_noise(model: ModelSpec, dw) -> np.ndarray:
    return np.asarray(dw, dtype=float).reshape(1, model.dim_noise)


def em_step(model: ModelSpec, t_n: float, y_n, h: float, dW) -> StepOutcome:
    with np.errstate(over="ignore", invalid="ignore"):
        y = em_batch(model, t_n, _as_state(model, y_n), h, _as_noise(model, dW))[0]
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"explicit Euler step produced a non-finite state at t={t_n}")
    return StepOutcome(y, 0, 0.0)


def bem_step(
    model: ModelSpec,
    t_n: float,
    y_n,
    h: float,
    dW,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER,
) -> StepOutcome:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        x, iters, rnorm, ok = bem_batch(
            model, t_n, _as_state(model, y_n), h, _as_noise(model, dW), newton_tol, newton_max_iter
        )
    if not ok[0]:
        raise NewtonConvergenceError(
            f"Newton did not reach tolerance {newton_tol:g} in {newton_max_iter} iterations "
            f"(residual {rnorm[0]:.3g}) at t={t_n}",
            last_iterate=x[0],
            residual=float(rnorm[0]),
        )
    return StepOutcome(x[0], int(iters[0]), float(rnorm[0]))


def pem_project(x, h: float, alpha: float) -> np.ndarray:
    """Shrink ``x`` onto the ball of radius ``h**(-alpha)`` if it lies outside."""
    if not (0.0 < h <= 1.0):
        raise ParameterError(f"h must lie in (0, 1], got {h}")
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    x = np.asarray(x, dtype=float)
    return project_batch(x.reshape(1, -1), h ** (-alpha)).reshape(x.shape)


def pem_step(model: ModelSpec, t_n: float, y_n, h: float, dW, alpha: float | None = None) -> StepOutcome:
    alpha = model.projection_exponent if alpha is None else alpha
    with np.errstate(over="ignore", invalid="ignore"):
        y = pem_batch(model, t_n, _as_state(model, y_n), h, _as_noise(model, dW), h ** (-alpha))[0]
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"projected Euler step produced a non-finite state at t={t_n}")
    return StepOutcome(y, 0, 0.0)


# --- trajectories ----------------------------------------------------------


@dataclass
class BatchResult:
    terminal: np.ndarray          # (P, d) state after each row's own step count
    failed: np.ndarray            # (P,) bool
    fail_step: np.ndarray         # (P,) int, -1 when the row succeeded
    newton_iterations: np.ndarray  # (P,) total Newton iterations
    max_norm: np.ndarray          # (P,) max |Y| along the trajectory
    trajectories: np.ndarray | None = None  # (P, L+1, d) when requested


def integrate_batch(
    model: ModelSpec,
    scheme: SchemeStep,
    increments: np.ndarray,
    n_steps: np.ndarray,
    *,
    initial: np.ndarray | None = None,
    keep_trajectories: bool = False,
) -> BatchResult:
    """Integrate P independent paths; row ``p`` takes ``n_steps[p]`` steps.

    ``increments`` has shape ``(P, L, m)`` with ``L >= max(n_steps)``.
    Failed rows (non-finite state or Newton failure) are frozen and flagged.
    """
    increments = np.asarray(increments, dtype=float)
    n_steps = np.asarray(n_steps, dtype=np.int64)
    P = n_steps.size
    d = model.dim_state
    if increments.ndim != 3 or increments.shape[0] != P or increments.shape[2] != model.dim_noise:
        raise ParameterError(f"increments must have shape (P, L, {model.dim_noise})")
    L = int(n_steps.max()) if P else 0
    if increments.shape[1] < L:
        raise ParameterError("not enough increments for the requested step counts")

    order = np.argsort(-n_steps, kind="stable")
    steps_sorted = n_steps[order]
    dw_sorted = increments[order]
    y = np.empty((P, d))
    y[:] = model.initial if initial is None else np.asarray(initial, dtype=float)[order]
    alive = np.ones(P, dtype=bool)
    fail_step = np.full(P, -1, dtype=np.int64)
    iters = np.zeros(P, dtype=np.int64)
    max_norm = _row_norm(y)
    traj = None
    if keep_trajectories:
        traj = np.full((P, L + 1, d), np.nan)
        traj[:, 0] = y

    h = scheme.h
    radius = scheme.radius if scheme.kind == "pem" else None
    # active rows at step n are the prefix with steps_sorted > n
    counts = np.searchsorted(-steps_sorted, -np.arange(L), side="left")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for n in range(L):
            c = int(counts[n])
            rows = np.nonzero(alive[:c])[0] if not alive[:c].all() else slice(0, c)
            yc = y[rows]
            dw = dw_sorted[rows, n]
            t = n * h
            if scheme.kind == "em":
                yn = em_batch(model, t, yc, h, dw)
                ok = np.all(np.isfinite(yn), axis=-1)
            elif scheme.kind == "pem":
                yn = pem_batch(model, t, yc, h, dw, radius)
                ok = np.all(np.isfinite(yn), axis=-1)
            else:
                yn, it, _, ok = bem_batch(model, t, yc, h, dw, scheme.newton_tol, scheme.newton_max_iter)
                iters[rows] += it
            y[rows] = yn
            nrm = _row_norm(yn)
            max_norm[rows] = np.maximum(max_norm[rows], nrm)
            if traj is not None:
                traj[rows, n + 1] = yn
            if not ok.all():
                bad = np.arange(P)[rows][~ok]
                alive[bad] = False
                fail_step[bad] = n

    inv = np.empty(P, dtype=np.int64)
    inv[order] = np.arange(P)
    return BatchResult(
        terminal=y[inv],
        failed=~alive[inv],
        fail_step=fail_step[inv],
        newton_iterations=iters[inv],
        max_norm=max_norm[inv],
        trajectories=None if traj is None else traj[inv],
    )


def integrate_dual(
    model: ModelSpec,
    scheme: SchemeStep,
    horizon: float,
    increments,
    initial=None,
) -> np.ndarray:
    """Integrate one path on ``{0, h, ..., horizon}``; returns shape ``(n+1, d)``.

    ``horizon`` must be an integer multiple of ``scheme.h``.  Step failures
    are re-raised with the failing step index attached.
    """
    traj, _ = integrate_dual_with_stats(model, scheme, horizon, increments, initial)
    return traj


def steps_for_horizon(horizon: float, h: float) -> int:
    n = round(horizon / h)
    if horizon < 0 or not math.isclose(n * h, horizon, rel_tol=0.0, abs_tol=1e-9 * max(1.0, horizon)):
        raise ParameterError(f"horizon {horizon} is not a non-negative multiple of h={h}")
    return int(n)


def integrate_dual_with_stats(model, scheme, horizon, increments, initial=None):
    n = steps_for_horizon(horizon, scheme.h)
    dw = np.asarray(increments, dtype=float).reshape(-1, model.dim_noise)
    if dw.shape[0] < n:
        raise ParameterError(f"need {n} increments, got {dw.shape[0]}")
    y0 = None if initial is None else np.asarray(initial, dtype=float).reshape(1, model.dim_state)
    res = integrate_batch(
        model, scheme, dw[None, :max(n, 1)] if n else np.zeros((1, 0, model.dim_noise)),
        np.array([n]), initial=y0, keep_trajectories=True,
    )
    traj = res.trajectories[0, : n + 1]
    if res.failed[0]:
        step = int(res.fail_step[0])
        if scheme.kind == "bem":
            raise NewtonConvergenceError(
                f"Newton failed at step {step} (t={step * scheme.h:.6g})",
                last_iterate=traj[step + 1], residual=float("nan"), step_index=step,
            )
        raise DivergenceError(f"{scheme.kind.upper()} diverged at step {step} (t={step * scheme.h:.6g})", step)
    return traj, res
