"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import math

import numpy as np

from oracles import norm, projection_bound, quintic_bem_root
from tcsde.cli import main
from tcsde.convergence import exact_error, preset, run_experiment
from tcsde.integrators import bem_step, max_bem_step, pem_project
from tcsde.models import builtin_linear, builtin_quintic
from tcsde.streams import RngStream, StableIncrementSpec, Substream, stable_increments
from tcsde.time_change import generate_path, invert, subsample

SEED = 2024


def test_criterion_1_example_one_rates(acceptance):
    rep = run_experiment(preset("paper-ex1-desk"))
    fits = {s: rep.rate(s) for s in ("bem", "pem")}
    ok = all(f.slope is not None and 0.40 <= f.slope <= 0.65 and f.residual <= 0.15 for f in fits.values())
    detail = ", ".join(f"{s.upper()} slope {f.slope:.4f} residual {f.residual:.4f}" for s, f in fits.items())
    assert acceptance(1, "quintic rates in [0.40, 0.65], residual <= 0.15", ok, detail)


def test_criterion_2_stiff_comparison(acceptance):
    rep = run_experiment(preset("paper-ex2-stiff"))
    h = 2.0**-5
    ladder = tuple(2.0**-k for k in range(5, 10))
    e_pem = rep.error("pem", h).l2_error
    e_bem = rep.error("bem", h).l2_error
    fit = rep.rate("bem", ladder)
    ok_cmp = e_pem > e_bem
    ok_slope = fit.slope is not None and 0.35 <= fit.slope <= 0.70
    detail = (f"PEM err {e_pem:.4g} vs BEM err {e_bem:.4g} at h=2^-5 ({'ok' if ok_cmp else 'not exceeded'}); "
              f"BEM slope over 2^-5..2^-9 = {fit.slope:.4f} ({'in' if ok_slope else 'outside'} [0.35, 0.70])")
    assert acceptance(2, "stiff PEM > BEM at 2^-5 and BEM slope in band", ok_cmp and ok_slope, detail)


def test_criterion_3_laplace_transform(acceptance):
    alpha = 0.9
    worst = 0.0
    for i, t in enumerate((0.5, 1.0)):
        d = stable_increments(RngStream(SEED, i, Substream.SUBORDINATOR), StableIncrementSpec(alpha, t), 100_000)
        for s in (0.5, 1.0, 2.0):
            v = np.exp(-s * d)
            se = v.std(ddof=1) / math.sqrt(v.size)
            worst = max(worst, abs(v.mean() - math.exp(-t * s**alpha)) / se)
    assert acceptance(3, "Laplace transform within 3 SE", worst <= 3.0, f"worst deviation {worst:.3f} SE")


def test_criterion_4_sandwich(acceptance):
    h0, k, T = 2.0**-13, 64, 1.0
    h = k * h0
    grid = np.linspace(0.0, T, 100)
    violations = 0
    for seed in range(100):
        fine = generate_path(RngStream(seed, 0, Substream.SUBORDINATOR), 0.9, h0, T, multiple_of=k)
        e0 = invert(fine)(grid)
        eh = invert(subsample(fine, k))(grid)
        violations += int(np.sum((e0 - h > eh) | (eh > e0 + h0)))
    assert acceptance(4, "sandwich over 100 seeds x 100 times", violations == 0, f"{violations} violations")


def test_criterion_5_projection_bound(acceptance):
    rng = np.random.default_rng(SEED)
    violations = 0
    for _ in range(10_000):
        dim = int(rng.integers(1, 4))
        x = rng.normal(size=dim) * 10.0 ** rng.uniform(-3, 3)
        h = 1.0 - rng.random()  # in (0, 1]
        m = float(rng.choice([0.0, 0.5, 1.0, 1.5]))
        gamma = int(rng.choice([2, 3, 5]))
        xp = pem_project(x, h, 1.0 / (2 * (gamma - 1)))
        violations += norm(x - xp) > projection_bound(norm(x), h, m, gamma)
    assert acceptance(5, "projection bound on 10^4 draws", violations == 0, f"{violations} violations")


def test_criterion_6_bem_bisection_oracle(acceptance):
    m = builtin_quintic()
    hmax = max_bem_step(m)
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        y = rng.uniform(-2.0, 2.0)
        h = hmax * (1.0 - rng.random())
        dw = rng.normal(0.0, math.sqrt(h))
        x = bem_step(m, 0.0, [y], h, [dw]).next_state[0]
        worst = max(worst, abs(x - quintic_bem_root(y, h, dw)))
    assert acceptance(6, "BEM vs bisection on 10^3 draws", worst <= 1e-10, f"max difference {worst:.3e}")


def test_criterion_7_closed_form_oracle(acceptance):
    m = builtin_linear(0.5, 1.0)
    e6, _ = exact_error(m, "em", 1.0, 2.0**-13, 2.0**-6, 300, SEED)
    e8, _ = exact_error(m, "em", 1.0, 2.0**-13, 2.0**-8, 300, SEED)
    ratio = e6 / e8
    ok = 1.4 <= ratio <= 2.9
    detail = f"RMS(2^-6) {e6:.4f}, RMS(2^-8) {e8:.4f}, ratio {ratio:.3f}"
    assert acceptance(7, "linear EM vs closed form, ratio in [1.4, 2.9]", ok, detail)


def test_criterion_8_determinism(acceptance, tmp_path, capsys):
    outs = []
    for i, threads in enumerate(("1", "1", "8")):
        out = tmp_path / f"run{i}"
        assert main(["converge", "--preset", "paper-ex1-desk", "--threads", threads, "--out", str(out)]) == 0
        outs.append((out / "errors.csv").read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    assert acceptance(8, "errors.csv byte-identical (threads 1, 1, 8)", ok, "identical" if ok else "differs")
