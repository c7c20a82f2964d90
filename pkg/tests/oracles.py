"""Independent reference computations used by several test modules."""

import math


def bisect_root(f, lo, hi, tol=1e-15, max_iter=400):
    """Root of an increasing scalar function by bisection, bracket expanded as needed."""
    while f(lo) > 0:
        lo = 2 * lo - 1
    while f(hi) < 0:
        hi = 2 * hi + 1
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo < tol:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def quintic_bem_root(y, h, dw):
    """Solve x - h (x^2 - 2 x^5) = y + y^2 dw by bisection."""
    c = y + y * y * dw
    return bisect_root(lambda x: x - h * (x * x - 2 * x**5) - c, -2.0, 2.0)


def projection_bound(x_norm, h, m, gamma):
    return 2 * h**m * x_norm ** (1 + 2 * m * (gamma - 1))


def norm(v):
    return math.sqrt(sum(float(c) ** 2 for c in v))
