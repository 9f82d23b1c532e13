"""Closed-form and quadrature expectations for standard Brownian motion.

These are the oracles the Monte Carlo studies are compared against, and the
expected values of the grid estimators used for bias corrections.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special

SQRT_2PI = math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=256)
def mean_alpha2(x: float, t: float = 1.0) -> float:
    """``E alpha2_t(x) = int_0^t (t - u) p_u(x) du``."""
    x, t = abs(float(x)), float(t)
    if x == 0.0:
        return 4.0 / 3.0 * t**1.5 / SQRT_2PI
    # u = v^2 removes the u^{-1/2} factor
    f = lambda v: 2.0 * (t - v * v) * math.exp(-x * x / (2 * v * v)) / SQRT_2PI
    return integrate.quad(f, 0.0, math.sqrt(t), points=[min(x, math.sqrt(t) / 2)], epsabs=1e-14, limit=200)[0]


@lru_cache(maxsize=256)
def mean_counting_estimate(x: float, eps: float, n: int, t: float = 1.0) -> float:
    """Exact expectation of the windowed pair-count estimate of ``alpha2_t(x)`` on ``n`` steps.

    Pairs at lag ``k`` number ``n - k`` and have ``W_s - W_r ~ N(0, k D)``.
    """
    d = t / n
    k = np.arange(1, n, dtype=np.float64)
    sd = np.sqrt(k * d)
    p = special.ndtr((x + eps) / sd) - special.ndtr((x - eps) / sd)
    return float(d * d * np.dot(n - k, p) / (2 * eps))


def mean_square_integral(t: float = 1.0) -> float:
    """``E int (L^x_t)^2 dx = 2 E alpha2_t(0) = (8/3) t^{3/2} / sqrt(2 pi)``."""
    return 8.0 / 3.0 * t**1.5 / SQRT_2PI


def predicted_square_modulus(h: float, t: float = 1.0) -> float:
    """Leading terms ``4 h t - 8 h^2 sqrt(t) / sqrt(2 pi)`` of ``E int (L^{x+h}_t - L^x_t)^2 dx``."""
    return 4 * h * t - 8 * h * h * math.sqrt(t) / SQRT_2PI


def exact_square_modulus(h: float, t: float = 1.0) -> float:
    """``E int (L^{x+h}_t - L^x_t)^2 dx = 4 (E alpha2_t(0) - E alpha2_t(h))``."""
    return 4.0 * (mean_alpha2(0.0, t) - mean_alpha2(h, t))


def predicted_mean_statistic(h: float, t: float = 1.0) -> float:
    """``-8 sqrt(h t) / sqrt(2 pi)``, the leading mean of the CLT statistic."""
    return -8.0 * math.sqrt(h * t) / SQRT_2PI


def _call_excess(a, s):
    # E (X - a)^+ for X ~ N(0, s^2)
    return s * np.exp(-0.5 * (a / s) ** 2) / SQRT_2PI - a * special.ndtr(-a / s)


def _hat_mean(m, s):
    # E max(0, 1 - |X - m|)
    return _call_excess(m - 1, s) - 2 * _call_excess(m, s) + _call_excess(m + 1, s)


@lru_cache(maxsize=256)
def expected_binned_product(m: int, delta: float, n: int, t: float = 1.0) -> float:
    """``E delta sum_k L_k L_{k+m}`` for the left-point binned field of an ``n``-step path.

    Two samples at lag ``j`` land ``m`` bins apart with probability
    ``E hat(D / delta - m)`` when the bin phase of the earlier one is uniform
    (true up to the first ``~ delta^2 / D`` steps).
    """
    d = t / n
    k = np.arange(1, n, dtype=np.float64)
    s = np.sqrt(k * d) / delta
    pairs = float(np.dot(n - k, _hat_mean(m, s) + _hat_mean(-m, s)))
    if m == 0:
        pairs += n
    return d * d / delta * pairs


def expected_binned_modulus(h: float, delta: float, n: int, t: float = 1.0) -> float:
    """``E int (L^{x+h} - L^x)^2 dx`` for the binned field (bin width ``delta``, ``n`` steps)."""
    m = int(round(h / delta))
    return 2.0 * (expected_binned_product(0, delta, n, t) - expected_binned_product(m, delta, n, t))


def _hitting_weight(c: float, t: float) -> float:
    # int_0^t (t - u) P(N(0, u) > c) du
    if c == 0.0:
        return t * t / 4.0
    f = lambda u: (t - u) * special.ndtr(-c / math.sqrt(u)) if u > 0 else 0.0
    return integrate.quad(f, 0.0, t, epsabs=1e-14, epsrel=1e-10, limit=200)[0]


@lru_cache(maxsize=64)
def expected_bracket_mm(h: float, t: float = 1.0) -> float:
    """Exact ``E <M^h, M^h>_t``.

    With lags ``a = s - r`` and ``b = r - r'`` the time integral of
    ``p_a(x) p_b(z)`` over ``a + b <= u`` has Laplace transform
    ``exp(-(|x|+|z|) sqrt(2 lam)) / (2 lam)``, which is ``P(N(0,u) > |x|+|z|)``.
    That leaves a 2-D integral of ``K_h(x) K_h(y)`` against
    ``2 h^{-3} int_0^t (t-u) P(N(0,u) > |x| + |y-x|) du``.
    """
    if not h > 0 or not t > 0:
        raise ValueError("h and t must be positive")
    f = lambda y, x: _hitting_weight(abs(x) + abs(y - x), t)
    total = 0.0
    for xa, xb, sx in ((-h, 0.0, -1.0), (0.0, h, 1.0)):
        for ya, yb, sy in ((-h, 0.0, -1.0), (0.0, h, 1.0)):
            if xa == ya:  # kink of |y - x| on the diagonal
                v = integrate.dblquad(f, xa, xb, ya, lambda x: x, epsabs=1e-11)[0]
                v += integrate.dblquad(f, xa, xb, lambda x: x, yb, epsabs=1e-11)[0]
            else:
                v = integrate.dblquad(f, xa, xb, ya, yb, epsabs=1e-11)[0]
            total += sx * sy * v
    return 2.0 * total / h**3


@lru_cache(maxsize=16)
def _hitting_table(t: float, cmax: float):
    c = np.linspace(0.0, cmax, 2001)
    return interpolate.CubicSpline(c, [_hitting_weight(float(v), t) for v in c])


def _box_nodes(center, eps, k=12):
    # Gauss-Legendre nodes and weights for the average over [center - eps, center + eps], split at the kink 0
    lo, hi = center - eps, center + eps
    cuts = [lo, 0.0, hi] if lo < 0.0 < hi else [lo, hi]
    x, w = np.polynomial.legendre.leggauss(k)
    pts, wts = [], []
    for a, b in zip(cuts, cuts[1:]):
        pts.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wts.append(0.5 * (b - a) * w / (hi - lo))
    return np.concatenate(pts), np.concatenate(wts)


@lru_cache(maxsize=64)
def expected_a3_integral(h: float, eps: float | None = None, grid: int = 8, t: float = 1.0) -> float:
    """Exact ``E h^{-1} int int A3_t(h, x, y) dx dy`` under the ``grid x grid`` midpoint rule.

    ``E alpha3_t(a, b) = int_0^t (t - u) P(N(0, u) > |a| + |b|) du``: the two
    lags of ``r' < r < s`` convolve to the same hitting-time transform as in
    :func:`expected_bracket_mm`.  With ``eps`` the value is averaged over the
    ``[-eps, eps)^2`` counting window (continuous time).
    """
    from .intersection import _a3_offsets

    if not h > 0 or not t > 0:
        raise ValueError("h and t must be positive")
    e = 0.0 if eps is None else float(eps)
    g = _hitting_table(float(t), 2.0 * h + 2.0 * e + 1e-12)
    nodes = (np.arange(grid) + 0.5) / grid
    total = 0.0
    for x in nodes:
        for y in nodes:
            for a, b, sign in _a3_offsets(h, x, y):
                if e > 0:
                    pa, wa = _box_nodes(a, e)
                    pb, wb = _box_nodes(b, e)
                    v = wa @ g(np.abs(pa)[:, None] + np.abs(pb)[None, :]) @ wb
                else:
                    v = g(abs(a) + abs(b))
                total += sign * float(v)
    return total / grid**2 / h
