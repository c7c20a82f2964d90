"""Strong-error estimation against a fine-step reference and log-log rate fits.

For every path the reference ``X_{h0}(T)`` and each coarse ``X_h(T)`` share one
subordinator path and one Brownian increment sequence.  The reference uses the
same scheme as the approximation it is compared to.

Paths are processed in fixed chunks, possibly on several threads.  Per-path
results do not depend on the chunking and all sums use ``math.fsum``, so the
reported numbers are identical for any thread count.
"""

from __future__ import annotations

import dataclasses
import math
import time
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .duality import DEFAULT_ALPHA, coupled_inputs, is_power_of_two
from .errors import DegenerateFitError, ExperimentError, ParameterError
from .integrators import (
    DEFAULT_NEWTON_MAX_ITER,
    DEFAULT_NEWTON_TOL,
    DEFAULT_RHO,
    integrate_batch,
    make_scheme,
)
from .models import ModelSpec, build_model
from .output import atomic_write_text, write_csv

CHUNK_SIZE = 100
MAX_FAILURE_FRACTION = 0.10
ERROR_METRICS = ("rms", "sqrt-mae")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "quintic"
    model_overrides: dict = field(default_factory=dict)
    schemes: tuple[str, ...] = ("bem", "pem")
    horizon: float = 1.0
    fine_step: float = 2.0**-13
    steps: tuple[float, ...] = (2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9)
    n_paths: int = 300
    master_seed: int = 2024
    alpha: float = DEFAULT_ALPHA
    error_metric: str = "rms"
    newton_tol: float = DEFAULT_NEWTON_TOL
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER
    rho: float = DEFAULT_RHO
    path_offset: int = 0
    # subsets of ``steps`` fitted separately; empty means one fit over all steps
    ladders: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(s.lower() for s in self.schemes))
        object.__setattr__(self, "steps", tuple(float(h) for h in self.steps))
        object.__setattr__(self, "ladders", tuple(tuple(float(h) for h in lad) for lad in self.ladders))
        if self.n_paths < 2:
            raise ParameterError(f"n_paths must be at least 2, got {self.n_paths}")
        if not (0.0 < self.fine_step < 1.0):
            raise ParameterError(f"fine step must lie in (0, 1), got {self.fine_step}")
        if not self.steps:
            raise ParameterError("at least one coarse step is required")
        for h in self.steps:
            self.factor(h)
        for lad in self.ladders:
            if not set(lad) <= set(self.steps):
                raise ParameterError(f"ladder {lad} contains steps not in {self.steps}")
        if self.error_metric not in ERROR_METRICS:
            raise ParameterError(f"error metric must be one of {ERROR_METRICS}")
        if self.horizon <= 0:
            raise ParameterError("horizon T must be positive")

    def factor(self, h: float) -> int:
        ratio = h / self.fine_step
        k = int(round(ratio))
        if k < 1 or k != ratio or not is_power_of_two(k) or h > 1.0:
            raise ParameterError(f"step {h} is not a power-of-two multiple of h0={self.fine_step} within (0, 1]")
        return k

    def build_model(self) -> ModelSpec:
        return build_model(self.model, **self.model_overrides)

    @property
    def path_indices(self) -> range:
        return range(self.path_offset, self.path_offset + self.n_paths)

    def fit_ladders(self) -> tuple[tuple[float, ...], ...]:
        return self.ladders or (self.steps,)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schemes"] = list(self.schemes)
        d["steps"] = list(self.steps)
        d["ladders"] = [list(lad) for lad in self.ladders]
        return d


# --- simulation ------------------------------------------------------------


@dataclass
class SchemeTerminals:
    """Terminal values of every path for one scheme at every resolution."""

    scheme: str
    path_indices: np.ndarray
    terminal: dict[int, np.ndarray]   # factor -> (P, d)
    failed: dict[int, np.ndarray]     # factor -> (P,) bool
    newton_iterations: dict[int, np.ndarray]
    max_norm: dict[int, np.ndarray]


def _pad(arrays: list[np.ndarray], m: int) -> np.ndarray:
    length = max((a.shape[0] for a in arrays), default=0)
    out = np.zeros((len(arrays), max(length, 1), m))
    for i, a in enumerate(arrays):
        out[i, : a.shape[0]] = a
    return out


def _simulate_chunk(config: ExperimentConfig, model: ModelSpec, indices: list[int], factors: list[int]):
    inputs = [
        coupled_inputs(
            config.master_seed, p, alpha=config.alpha, fine_step=config.fine_step,
            horizon=config.horizon, factors=factors, dim_noise=model.dim_noise,
        )
        for p in indices
    ]
    out = {}
    for scheme_name in config.schemes:
        per_factor = {}
        for k in factors:
            scheme = make_scheme(
                scheme_name, model, k * config.fine_step,
                newton_tol=config.newton_tol, newton_max_iter=config.newton_max_iter, rho=config.rho,
            )
            n_steps = np.array([inp.steps(k) for inp in inputs])
            dw = _pad([inp.increments(k) for inp in inputs], model.dim_noise)
            per_factor[k] = integrate_batch(model, scheme, dw, n_steps)
        out[scheme_name] = per_factor
    return out


def simulate_terminals(
    config: ExperimentConfig, threads: int = 1, model: ModelSpec | None = None
) -> dict[str, SchemeTerminals]:
    """Simulate all paths of ``config``; ``model`` overrides the named model."""
    model = config.build_model() if model is None else model
    factors = sorted({1, *(config.factor(h) for h in config.steps)})
    # validate scheme gates up front so configuration errors surface before any work
    for s in config.schemes:
        for k in factors:
            make_scheme(s, model, k * config.fine_step, newton_tol=config.newton_tol,
                        newton_max_iter=config.newton_max_iter, rho=config.rho)
    indices = list(config.path_indices)
    chunks = [indices[i:i + CHUNK_SIZE] for i in range(0, len(indices), CHUNK_SIZE)]

    def work(chunk):
        return _simulate_chunk(config, model, chunk, factors)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    terminals = {}
    for s in config.schemes:
        terminals[s] = SchemeTerminals(
            scheme=s,
            path_indices=np.array(indices),
            terminal={k: np.concatenate([r[s][k].terminal for r in results]) for k in factors},
            failed={k: np.concatenate([r[s][k].failed for r in results]) for k in factors},
            newton_iterations={k: np.concatenate([r[s][k].newton_iterations for r in results]) for k in factors},
            max_norm={k: np.concatenate([r[s][k].max_norm for r in results]) for k in factors},
        )
    return terminals


# --- errors ------------------------------------------------------------------


@dataclass
class ErrorEstimate:
    scheme: str
    h: float
    l2_error: float
    n_paths: int
    n_failed: int
    failed_paths: list[int]
    # per-path |X_h0 - X_h|^2 (rms) or |X_h0 - X_h| (sqrt-mae), NaN where failed
    path_terms: np.ndarray
    metric: str = "rms"
    max_terminal_norm: float = 0.0
    newton_iterations: int = 0

    @property
    def usable(self) -> bool:
        return self.n_failed <= MAX_FAILURE_FRACTION * self.n_paths


def _path_terms(diff: np.ndarray, metric: str) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.sum(diff * diff, axis=-1)
    return sq if metric == "rms" else np.sqrt(sq)


def aggregate_error(terms: np.ndarray) -> float:
    """``sqrt(mean(terms))`` over finite terms, summed exactly."""
    ok = terms[np.isfinite(terms)]
    if ok.size == 0:
        return math.nan
    return math.sqrt(math.fsum(ok.tolist()) / ok.size)


def estimate_error(terminals: SchemeTerminals, k: int, fine_step: float, metric: str = "rms") -> ErrorEstimate:
    failed = terminals.failed[1] | terminals.failed[k]
    diff = terminals.terminal[1] - terminals.terminal[k]
    terms = _path_terms(diff, metric)
    terms = np.where(failed, np.nan, terms)
    ok = ~failed
    norms = np.sqrt(np.sum(terminals.terminal[k][ok] ** 2, axis=-1))
    return ErrorEstimate(
        scheme=terminals.scheme,
        h=k * fine_step,
        l2_error=aggregate_error(terms),
        n_paths=int(failed.size),
        n_failed=int(failed.sum()),
        failed_paths=[int(p) for p in terminals.path_indices[failed]],
        path_terms=terms,
        metric=metric,
        max_terminal_norm=float(norms.max()) if norms.size else math.nan,
        newton_iterations=int(terminals.newton_iterations[k].sum()),
    )


def pool_errors(parts: list[ErrorEstimate]) -> float:
    """Combine estimates computed on disjoint path sets into one error."""
    return aggregate_error(np.concatenate([p.path_terms for p in parts]))


def _check_failures(est: ErrorEstimate) -> None:
    if not est.usable:
        raise ExperimentError(
            f"{est.scheme.upper()} at h={est.h:g}: {est.n_failed} of {est.n_paths} paths failed "
            f"(paths {est.failed_paths[:10]}{'...' if len(est.failed_paths) > 10 else ''})"
        )


def strong_error(
    model: str | ModelSpec,
    scheme: str,
    horizon: float,
    fine_step: float,
    h: float,
    n_paths: int,
    seed: int,
    *,
    path_offset: int = 0,
    metric: str = "rms",
    threads: int = 1,
    model_overrides: dict | None = None,
    **options,
) -> tuple[float, ErrorEstimate]:
    """Strong error between the ``h0``- and ``h``-approximations at time T.

    ``model`` is a built-in name, or a ModelSpec (run in-process).
    """
    config_kw = dict(
        schemes=(scheme,), horizon=horizon, fine_step=fine_step, steps=(h,), n_paths=n_paths,
        master_seed=seed, path_offset=path_offset, error_metric=metric, **options,
    )
    spec = model if isinstance(model, ModelSpec) else None
    name = model.name if spec is not None else model
    config = ExperimentConfig(model=name, model_overrides=model_overrides or {}, **config_kw)
    terminals = simulate_terminals(config, threads=threads, model=spec)[scheme.lower()]
    est = estimate_error(terminals, config.factor(h), fine_step, metric)
    _check_failures(est)
    return est.l2_error, est


def exact_error(
    model: ModelSpec,
    scheme: str,
    horizon: float,
    fine_step: float,
    h: float,
    n_paths: int,
    seed: int,
    *,
    alpha: float = DEFAULT_ALPHA,
    path_offset: int = 0,
    **options,
) -> tuple[float, np.ndarray]:
    """RMS distance of ``X_h(T)`` from the closed-form solution at ``E_h(T)``.

    The closed form is evaluated on the same Brownian path the scheme sees:
    ``W(E_h(T))`` is the sum of the coarse increments actually used.  Returns
    ``(error, per_path_squared_errors)``.
    """
    if model.exact is None:
        raise ParameterError(f"model {model.name!r} has no closed-form solution")
    k = round(h / fine_step)
    if not is_power_of_two(k) or k * fine_step != h:
        raise ParameterError(f"h={h} is not a power-of-two multiple of h0={fine_step}")
    sch = make_scheme(scheme, model, h, **options)
    inputs = [
        coupled_inputs(seed, p, alpha=alpha, fine_step=fine_step, horizon=horizon,
                       factors=[k], dim_noise=model.dim_noise)
        for p in range(path_offset, path_offset + n_paths)
    ]
    n_steps = np.array([inp.steps(k) for inp in inputs])
    incs = [inp.increments(k) for inp in inputs]
    res = integrate_batch(model, sch, _pad(incs, model.dim_noise), n_steps)
    if res.failed.any():
        raise ExperimentError(f"{int(res.failed.sum())} paths failed against the closed form")
    terms = np.empty(n_paths)
    for i, (inp, dw) in enumerate(zip(inputs, incs)):
        level = inp.inverses[k].terminal_level
        w = np.array([math.fsum(dw[:, j].tolist()) for j in range(dw.shape[1])]) if len(dw) else np.zeros(model.dim_noise)
        diff = res.terminal[i] - model.exact(level, w, model.initial)
        terms[i] = float(diff @ diff)
    return aggregate_error(terms), terms


# --- rate fitting ----------------------------------------------------------


def fit_rate(points) -> tuple[float, float]:
    """OLS fit of ``log2(e)`` against ``log2(h)``.

    Returns ``(slope, residual)`` where residual is the root-mean-square of
    the regression residuals in log2 space.
    """
    pts = [(float(h), float(e)) for h, e in points]
    if len(pts) < 2:
        raise DegenerateFitError("need at least two (h, error) points")
    if any(not (e > 0 and math.isfinite(e)) for _, e in pts):
        raise DegenerateFitError("all errors must be positive and finite")
    if any(h <= 0 for h, _ in pts):
        raise DegenerateFitError("step sizes must be positive")
    x = np.log2([h for h, _ in pts])
    y = np.log2([e for _, e in pts])
    xm = math.fsum(x) / x.size
    ym = math.fsum(y) / y.size
    sxx = math.fsum((x - xm) ** 2)
    if sxx == 0:
        raise DegenerateFitError("step sizes must not all be equal")
    slope = math.fsum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    return slope, math.sqrt(math.fsum(resid**2) / resid.size)


# --- experiments -----------------------------------------------------------


@dataclass
class RateFit:
    scheme: str
    ladder: tuple[float, ...]
    slope: float | None
    residual: float | None
    note: str = ""


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    errors: list[ErrorEstimate]
    rates: list[RateFit]
    terminals: dict[str, SchemeTerminals]
    wall_clock: float

    def error(self, scheme: str, h: float) -> ErrorEstimate:
        for e in self.errors:
            if e.scheme == scheme and e.h == h:
                return e
        raise KeyError((scheme, h))

    def rate(self, scheme: str, ladder=None) -> RateFit:
        for r in self.rates:
            if r.scheme == scheme and (ladder is None or r.ladder == tuple(ladder)):
                return r
        raise KeyError((scheme, ladder))


def ladder_label(ladder) -> str:
    exps = [-math.log2(h) for h in ladder]
    if all(e.is_integer() for e in exps):
        return ";".join(f"2^-{int(e)}" for e in exps)
    return ";".join(f"{h:.17g}" for h in ladder)


def run_experiment(
    config: ExperimentConfig, threads: int = 1, model: ModelSpec | None = None
) -> ConvergenceReport:
    """Run every (scheme, step) pair of ``config`` and fit rates per ladder."""
    start = time.perf_counter()
    terminals = simulate_terminals(config, threads=threads, model=model)
    errors = []
    for s in config.schemes:
        for h in config.steps:
            est = estimate_error(terminals[s], config.factor(h), config.fine_step, config.error_metric)
            _check_failures(est)
            errors.append(est)
    rates = []
    for s in config.schemes:
        for ladder in config.fit_ladders():
            pts = [(h, e.l2_error) for h in ladder for e in errors if e.scheme == s and e.h == h and e.usable]
            pts = [(h, err) for h, err in pts if err > 0]
            try:
                slope, resid = fit_rate(pts)
                rates.append(RateFit(s, tuple(ladder), slope, resid))
            except DegenerateFitError as exc:
                rates.append(RateFit(s, tuple(ladder), None, None, f"undefined: {exc}"))
    return ConvergenceReport(config, errors, rates, terminals, time.perf_counter() - start)


# --- presets ---------------------------------------------------------------


def _dyadic(*exponents: int) -> tuple[float, ...]:
    return tuple(2.0**-e for e in exponents)


PRESETS = {
    "paper-ex1-desk": ExperimentConfig(
        model="quintic", schemes=("bem", "pem"), fine_step=2.0**-13,
        steps=_dyadic(6, 7, 8, 9), n_paths=300, master_seed=2024,
    ),
    "paper-ex2-stiff": ExperimentConfig(
        model="stiff2d", model_overrides={"alpha_stiff": 200.0, "beta": 0.5}, schemes=("bem", "pem"),
        fine_step=2.0**-13, steps=_dyadic(5, 6, 7, 8, 9, 10, 11), n_paths=300, master_seed=2024,
        ladders=(_dyadic(7, 8, 9, 10, 11), _dyadic(5, 6, 7, 8, 9)),
    ),
}

# finer reference steps for full-scale runs
PAPER_SCALE_FINE_STEP = {"paper-ex1-desk": 2.0**-15, "paper-ex2-stiff": 2.0**-16}


def preset(name: str, paper_scale: bool = False) -> ExperimentConfig:
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    config = PRESETS[name]
    if paper_scale:
        config = dataclasses.replace(config, fine_step=PAPER_SCALE_FINE_STEP[name])
    return config


# --- report files ------------------------------------------------------------


def write_report(report: ConvergenceReport, out_dir, echo: dict | None = None) -> list[Path]:
    """Write errors.csv, rates.csv, loglog.csv, terminal.csv and summary.txt.

    Nothing in these files depends on timing or thread count except
    summary.txt, which records the wall-clock time.
    """
    out = Path(out_dir)
    cfg = report.config.as_dict() if echo is None else echo
    written = []
    try:
        written.append(write_csv(
            out / "errors.csv",
            ["scheme", "h", "l2_error", "n_paths", "n_failed"],
            [(e.scheme, e.h, e.l2_error, e.n_paths, e.n_failed) for e in report.errors],
            cfg,
        ))
        written.append(write_csv(
            out / "rates.csv",
            ["scheme", "slope", "residual", "ladder"],
            [(r.scheme, "" if r.slope is None else r.slope, "" if r.residual is None else r.residual,
              ladder_label(r.ladder)) for r in report.rates],
            cfg,
        ))
        written.append(write_csv(
            out / "loglog.csv",
            ["scheme", "h", "log2_h", "log2_error", "log2_reference_half"],
            [(e.scheme, e.h, math.log2(e.h), math.log2(e.l2_error) if e.l2_error > 0 else "",
              0.5 * math.log2(e.h)) for e in report.errors],
            cfg,
        ))
        d = next(iter(report.terminals.values())).terminal[1].shape[1]
        cols = ["scheme", "h", "path_index", "failed"] + [f"x{i + 1}" for i in range(d)]
        rows = []
        for s, term in report.terminals.items():
            for k in sorted(term.terminal):
                h = k * report.config.fine_step
                for i, p in enumerate(term.path_indices):
                    rows.append((s, h, int(p), int(term.failed[k][i]), *map(float, term.terminal[k][i])))
        written.append(write_csv(out / "terminal.csv", cols, rows, cfg))
        summary = format_summary(report)
        atomic_write_text(out / "summary.txt", summary)
        written.append(out / "summary.txt")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def format_summary(report: ConvergenceReport) -> str:
    c = report.config
    lines = [
        f"model={c.model} T={c.horizon:g} h0={c.fine_step:g} paths={c.n_paths} "
        f"seed={c.master_seed} metric={c.error_metric}",
        "",
        f"{'scheme':<7}{'h':>14}{'L2 error':>16}{'failed':>8}",
    ]
    for e in report.errors:
        lines.append(f"{e.scheme:<7}{e.h:>14.6g}{e.l2_error:>16.6g}{e.n_failed:>8d}")
    lines.append("")
    for r in report.rates:
        if r.slope is None:
            lines.append(f"{r.scheme}: slope undefined over [{ladder_label(r.ladder)}] ({r.note})")
        else:
            lines.append(
                f"{r.scheme}: slope {r.slope:.4f} residual {r.residual:.4f} over [{ladder_label(r.ladder)}]"
            )
    lines.append(f"wall-clock {report.wall_clock:.2f}s")
    return "\n".join(lines) + "\n"
