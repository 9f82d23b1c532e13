"""Double and triple self-intersection local times of a discretized path.

Counting estimators replace the mollifier by the indicator window
``[-eps, eps) / (2 eps)`` and use left grid points ``W_0 .. W_{n-1}``:

    alpha2(x)    = D^2 #{r < s : W_s - W_r - x in [-eps, eps)} / (2 eps)
    alpha3(x, y) = D^3 #{r' < r < s : W_r - W_r' - x in [-eps, eps),
                                      W_s - W_r  - y in [-eps, eps)} / (2 eps)^2

with ``D`` the time step.  Counts are exact integers from the rank index in
:mod:`localtime_lab._index`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from . import _index
from .localtime import LocalTimeField, product_integral
from .moments import mean_alpha2, mean_counting_estimate
from .paths import SamplePath


def resolvent_v(x):
    """``v(x) = exp(-|x|)``, the 1/2-potential density of Brownian motion."""
    return np.exp(-np.abs(x))


def resolvent_integral(x: float) -> float:
    """``int_0^inf exp(-s/2) p_s(x) ds`` by adaptive quadrature (independent of the closed form)."""
    x = float(x)
    if x == 0.0:
        # integrable s^{-1/2} singularity; substitute s = u^2
        f = lambda u: 2.0 * u * math.exp(-u * u / 2) / math.sqrt(2 * math.pi * u * u) if u > 0 else 2.0 / math.sqrt(2 * math.pi)
        return integrate.quad(f, 0.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    f = lambda s: math.exp(-s / 2 - x * x / (2 * s)) / math.sqrt(2 * math.pi * s) if s > 0 else 0.0
    peak = abs(x)  # integrand peaks near s ~ |x|
    a = integrate.quad(f, 0.0, peak, epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    b = integrate.quad(f, peak, np.inf, epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    return a + b


def smoothed_resolvent(a, eps: float):
    """Window average ``(1/2eps) int_{a-eps}^{a+eps} exp(-|z|) dz`` in closed form."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a - eps, a + eps

    def prim(z):  # antiderivative of exp(-|z|) vanishing at 0
        return np.sign(z) * (1.0 - np.exp(-np.abs(z)))

    return (prim(hi) - prim(lo)) / (2 * eps)


@dataclass(frozen=True)
class Alpha2Estimate:
    x: float
    value: float
    method: str
    epsilon: float | None = None
    count: int | None = None

    def row(self):
        return (self.method, self.x, "", self.epsilon if self.epsilon is not None else "", self.value)


@dataclass(frozen=True)
class Alpha3Estimate:
    x: float
    y: float
    value: float
    method: str
    epsilon: float | None = None
    count: int | None = None

    def row(self):
        return (self.method, self.x, self.y, self.epsilon if self.epsilon is not None else "", self.value)


def write_estimates_csv(estimates, path) -> Path:
    """Rows ``method,x,y,epsilon,value``; ``y`` is blank for double intersections."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "x", "y", "epsilon", "value"])
        for est in estimates:
            writer.writerow(est.row())
    return path


def alpha2_occupation(field: LocalTimeField, h: float) -> float:
    """``int L^{x+h} L^x dx``, an estimate of ``alpha2(h) + alpha2(-h)`` (``2 alpha2(0)`` at ``h = 0``)."""
    return product_integral(field, h)


def _check_eps(eps):
    if not eps > 0:
        raise ValueError("window half-width eps must be positive")


def alpha2_count(path: SamplePath, x: float, eps: float) -> int:
    """Integer pair count behind :func:`alpha2_counting`."""
    _check_eps(eps)
    uniq, ranks = path.left_ranks
    c = _index.past_window_counts(ranks, uniq, float(x), -eps, eps, _index.CLOSED_LEFT)
    return int(c.sum())


CORRECTIONS = (None, "resolvent", "mean")


def alpha2_counting(path: SamplePath, x: float, eps: float, correction: str | None = None) -> Alpha2Estimate:
    """Windowed pair-count estimate of ``alpha2_t(x)``.

    ``correction="resolvent"`` adds ``t (v(x) - v_eps(x))``, undoing the window
    average of the known ``t exp(-|x|)`` part so that only the C^1 remainder
    is smoothed; at ``x = 0`` this removes the ``-t eps / 2`` kink bias.
    ``correction="mean"`` adds ``E alpha2_t(x)`` minus the exact expectation of
    the estimator, which also removes the window curvature and grid biases.
    """
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}")
    count = alpha2_count(path, x, eps)
    value = path.delta**2 * count / (2 * eps)
    method = "counting"
    if correction == "resolvent":
        value += path.horizon * float(resolvent_v(x) - smoothed_resolvent(x, eps))
        method = "counting+resolvent"
    elif correction == "mean":
        t = path.horizon
        value += mean_alpha2(float(x), t) - mean_counting_estimate(float(x), float(eps), path.n, t)
        method = "counting+mean"
    return Alpha2Estimate(float(x), value, method, eps, count)


def alpha3_count(path: SamplePath, x: float, y: float, eps: float) -> int:
    _check_eps(eps)
    uniq, ranks = path.left_ranks
    c = _index.past_window_counts(ranks, uniq, float(x), -eps, eps, _index.CLOSED_LEFT)
    tot = _index.past_window_weighted(ranks, uniq, float(y), -eps, eps, _index.CLOSED_LEFT, c)
    return int(tot.sum())


def alpha3_counting(path: SamplePath, x: float, y: float, eps: float) -> Alpha3Estimate:
    """Windowed triple-count estimate of ``alpha3_t(x, y)``."""
    count = alpha3_count(path, x, y, eps)
    return Alpha3Estimate(float(x), float(y), path.delta**3 * count / (2 * eps) ** 2, "counting", eps, count)


def alpha3_counts_many(path: SamplePath, pairs, eps: float) -> np.ndarray:
    """Triple counts for many ``(x, y)`` offsets sharing one rank index.

    First-window counts are computed once per distinct ``x``; all pairs with
    the same ``y`` share one vector-weighted pass.
    """
    _check_eps(eps)
    pairs = [(float(x), float(y)) for x, y in pairs]
    uniq, ranks = path.left_ranks
    first = {}
    for x, _ in pairs:
        if x not in first:
            first[x] = _index.past_window_counts(ranks, uniq, x, -eps, eps, _index.CLOSED_LEFT)
    by_y = {}
    for j, (x, y) in enumerate(pairs):
        by_y.setdefault(y, []).append(j)
    out = np.zeros(len(pairs), dtype=np.int64)
    for y, idx in by_y.items():
        xs = sorted({pairs[j][0] for j in idx})
        weights = np.ascontiguousarray(np.stack([first[x] for x in xs], axis=1))
        tot = _index.past_window_weighted_total(ranks, uniq, y, -eps, eps, _index.CLOSED_LEFT, weights)
        col = {x: k for k, x in enumerate(xs)}
        for j in idx:
            out[j] = tot[col[pairs[j][0]]]
    return out


@dataclass(frozen=True)
class GammaEstimate:
    """Intersection local times with the resolvent part removed."""

    horizon: float
    gamma2: dict = field(default_factory=dict)
    gamma3: dict = field(default_factory=dict)

    def alpha2(self, x):
        return self.gamma2[x] + self.horizon * float(resolvent_v(x))

    def alpha3(self, x, y):
        vx, vy = float(resolvent_v(x)), float(resolvent_v(y))
        return self.gamma3[(x, y)] + self.gamma2[x] * vy + self.gamma2[y] * vx + self.horizon * vx * vy


def gamma_decompose(alpha2: dict, alpha3: dict | None, t: float) -> GammaEstimate:
    """Split ``alpha2 = gamma2 + t v`` and ``alpha3 = gamma3 + gamma2(x) v(y) + gamma2(y) v(x) + t v(x) v(y)``.

    ``alpha2`` maps offsets to values; ``alpha3`` maps ``(x, y)`` pairs to
    values and needs ``alpha2`` at both ``x`` and ``y``.
    """
    g2 = {x: float(a) - t * float(resolvent_v(x)) for x, a in alpha2.items()}
    g3 = {}
    for (x, y), a in (alpha3 or {}).items():
        if x not in g2 or y not in g2:
            raise ValueError(f"alpha3 at ({x}, {y}) needs alpha2 at both offsets")
        vx, vy = float(resolvent_v(x)), float(resolvent_v(y))
        g3[(x, y)] = float(a) - g2[x] * vy - g2[y] * vx - t * vx * vy
    return GammaEstimate(t, g2, g3)


def _a3_offsets(h, x, y):
    # (first offset, second offset, sign) of the four alpha3 terms
    return (
        (h * (x - y), h * y, 1),
        (h * (-x - y), h * y, -1),
        (h * (x + y), -h * y, -1),
        (-h * (x - y), -h * y, 1),
    )


def _check_a3(h, eps):
    _check_eps(eps)
    if not h > 0:
        raise ValueError("h must be positive")
    if eps >= h:
        raise ValueError(f"window eps = {eps} must be smaller than h = {h}")


def a3_combination(path: SamplePath, h: float, x: float, y: float, eps: float) -> float:
    """Four-term finite difference ``A3_t(h, x, y)`` of triple intersection local times."""
    _check_a3(h, eps)
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise ValueError("x and y must lie in [0, 1]")
    terms = _a3_offsets(h, x, y)
    counts = alpha3_counts_many(path, [(a, b) for a, b, _ in terms], eps)
    signed = sum(sign * int(c) for (_, _, sign), c in zip(terms, counts))
    return path.delta**3 * signed / (2 * eps) ** 2


def a3_integral(path: SamplePath, h: float, eps: float, grid: int = 8) -> float:
    """``h^{-1} int_0^1 int_0^1 A3_t(h, x, y) dx dy`` by the midpoint rule on a ``grid x grid`` mesh."""
    _check_a3(h, eps)
    nodes = (np.arange(grid) + 0.5) / grid
    pairs, signs = [], []
    for x in nodes:
        for y in nodes:
            for a, b, sign in _a3_offsets(h, x, y):
                # round so that equal offsets from different nodes share one pass
                pairs.append((round(a, 15), round(b, 15)))
                signs.append(sign)
    uniq_pairs = sorted(set(pairs))
    counts = dict(zip(uniq_pairs, alpha3_counts_many(path, uniq_pairs, eps)))
    total = sum(s * int(counts[p]) for p, s in zip(pairs, signs))
    return path.delta**3 * total / (2 * eps) ** 2 / grid**2 / h


def weight_integral_closed_form() -> float:
    """``int_0^1 int_0^1 (|x + y| - |x - y|) dx dy``; on the unit square the integrand is ``2 min(x, y)``."""
    return 2.0 / 3.0


def weight_integral_quadrature() -> float:
    # split along the diagonal where |x - y| has its kink
    f = lambda y, x: abs(x + y) - abs(x - y)
    lower = integrate.dblquad(f, 0.0, 1.0, 0.0, lambda x: x, epsabs=1e-13, epsrel=1e-13)[0]
    upper = integrate.dblquad(f, 0.0, 1.0, lambda x: x, 1.0, epsabs=1e-13, epsrel=1e-13)[0]
    return lower + upper
