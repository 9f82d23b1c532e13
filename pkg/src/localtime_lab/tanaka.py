"""Kernels, the Tanaka-type identity and the martingale ``M^h`` with its brackets.

Stochastic integrals are left-point (non-anticipating) Euler sums
``sum_i phi_i (W_{i+1} - W_i)`` where ``phi_i`` only uses ``W_0 .. W_i``.

Applying Ito's formula to ``x -> int_0^t g(x - W_s - a) ds`` with the time
argument running gives, for every ``a``,

    alpha2_t(a) = 2 int_0^t (W_t - W_s - a)^+ ds - 2 (-a)^+ t
                  - 2 int_0^t int_0^s 1{W_s - W_r > a} dr dW_s .

There is no ``int_0^t (W_0 - W_s - a)^+ ds`` term: it would give
``E alpha2_t(0) = 0``.  ``include_origin_term=True`` adds it back for
comparison.

``scheme="milstein"`` adds the adapted term ``1/2 sum_i D_i ((W_{i+1} - W_i)^2 - D)``
where ``D_i`` is the spatial derivative of the integrand at ``W_i``.  The sum
stays non-anticipating (so still a martingale) and removes the leading
``O(D^{1/2})`` error that a discontinuous kernel leaves in the plain Euler sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _index
from .intersection import alpha2_counting
from .localtime import local_time_binned
from .paths import SamplePath


def kernel_J(h: float, x):
    """``J_h(x) = 2 x^+ - (x - h)^+ - (x + h)^+``: ``|x| - h`` on ``[-h, h]``, zero outside."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) <= h, np.abs(x) - h, 0.0)
    return out if out.ndim else float(out)


def kernel_J_positive_parts(h: float, x):
    x = np.asarray(x, dtype=np.float64)
    pos = lambda z: np.maximum(z, 0.0)
    out = 2 * pos(x) - pos(x - h) - pos(x + h)
    return out if out.ndim else float(out)


def kernel_K(h: float, x):
    """``K_h(x) = 1{0 < x <= h} - 1{-h < x <= 0}``, integer valued."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = ((0 < x) & (x <= h)).astype(np.int64) - ((-h < x) & (x <= 0)).astype(np.int64)
    return out if out.ndim else int(out)


def kernel_K_indicators(h: float, x):
    """``2 1{x > 0} - 1{x > h} - 1{x > -h}``, the indicator combination behind ``K_h``."""
    x = np.asarray(x, dtype=np.float64)
    out = 2 * (x > 0).astype(np.int64) - (x > h).astype(np.int64) - (x > -h).astype(np.int64)
    return out if out.ndim else int(out)


def euler_stochastic_integral(path: SamplePath, integrand) -> float:
    """Left-point sum ``sum_i phi_i (W_{i+1} - W_i)``; one value per step."""
    phi = np.asarray(integrand, dtype=np.float64)
    if phi.shape != (path.n,):
        raise ValueError(f"integrand needs {path.n} values, got shape {phi.shape}")
    return float(np.dot(phi, path.increments))


def milstein_stochastic_integral(path: SamplePath, integrand, derivative) -> float:
    """Euler sum plus ``1/2 sum_i D_i ((W_{i+1} - W_i)^2 - D)`` with ``D_i = derivative[i]``."""
    dw = path.increments
    der = np.asarray(derivative, dtype=np.float64)
    if der.shape != (path.n,):
        raise ValueError(f"derivative needs {path.n} values, got shape {der.shape}")
    return euler_stochastic_integral(path, integrand) + 0.5 * float(np.dot(der, dw * dw - path.delta))


def _windowed_density(path: SamplePath, offset: float, eps: float) -> np.ndarray:
    # D #{r < s : W_s - W_r - offset in [-eps, eps)} / (2 eps), i.e. L^{W_s - offset}_s
    uniq, ranks = path.left_ranks
    c = _index.past_window_counts(ranks, uniq, float(offset), -eps, eps, _index.CLOSED_LEFT)
    return path.delta * c / (2 * eps)


def kernel_derivative(path: SamplePath, h: float, eps: float, negate_kernel: bool = False) -> np.ndarray:
    """``d/dx int_0^s K_h(x - W_r) dr`` at ``x = W_s``: ``2 L^{W_s} - L^{W_s - h} - L^{W_s + h}``."""
    d = 2 * _windowed_density(path, 0.0, eps) - _windowed_density(path, h, eps) - _windowed_density(path, -h, eps)
    return -d if negate_kernel else d


SCHEMES = ("euler", "milstein")


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")


def past_counts_above(path: SamplePath, a: float) -> np.ndarray:
    """``#{r < s : W_s - W_r > a}`` for ``s = 0 .. n-1``."""
    uniq, ranks = path.left_ranks
    return _index.past_window_counts(ranks, uniq, 0.0, float(a), np.inf, _index.CLOSED_RIGHT)


def kernel_counts(path: SamplePath, h: float):
    """``(#{r<s : W_s-W_r in (0,h]}, #{r<s : W_s-W_r in (-h,0]})`` for ``s = 0 .. n-1``."""
    if not h > 0:
        raise ValueError("h must be positive")
    uniq, ranks = path.left_ranks
    pos = _index.past_window_counts(ranks, uniq, 0.0, 0.0, float(h), _index.CLOSED_RIGHT)
    neg = _index.past_window_counts(ranks, uniq, 0.0, -float(h), 0.0, _index.CLOSED_RIGHT)
    return pos, neg


def inner_integral(path: SamplePath, h: float, negate_kernel: bool = False) -> np.ndarray:
    """``C(s) = int_0^s K_h(W_s - W_r) dr`` on the left grid points."""
    pos, neg = kernel_counts(path, h)
    c = (pos - neg) * path.delta
    return -c if negate_kernel else c


@dataclass(frozen=True)
class TanakaResult:
    lhs: float
    rhs: float
    residual: float
    terms: dict


def tanaka_check(
    path: SamplePath,
    a: float,
    eps: float,
    correction: str | None = "mean",
    include_origin_term: bool = False,
    scheme: str = "euler",
) -> TanakaResult:
    """Compare the counting estimate of ``alpha2_t(a)`` with its Ito representation.

    ``correction`` is passed to :func:`alpha2_counting`; with
    ``scheme="milstein"`` the integrand derivative ``L^{W_s - a}_s`` is
    estimated with the same window ``eps``.
    """
    _check_scheme(scheme)
    t, d = path.horizon, path.delta
    w = path.values
    left = w[:-1]
    lhs = alpha2_counting(path, a, eps, correction).value
    integrand = d * past_counts_above(path, a)
    if scheme == "milstein":
        stoch = milstein_stochastic_integral(path, integrand, _windowed_density(path, a, eps))
    else:
        stoch = euler_stochastic_integral(path, integrand)
    terms = {
        "terminal": 2 * d * float(np.sum(np.maximum(w[-1] - left - a, 0.0))),
        "drift": -2 * max(-a, 0.0) * t,
        "martingale": -2 * stoch,
    }
    if include_origin_term:
        terms["origin"] = -2 * d * float(np.sum(np.maximum(w[0] - left - a, 0.0)))
    rhs = sum(terms.values())
    return TanakaResult(lhs, rhs, lhs - rhs, terms)


@dataclass(frozen=True)
class MartingaleSeries:
    """``M^h`` and its brackets with ``<M^h, W>`` and ``<M^h, M^h>`` on the time grid."""

    h: float
    times: np.ndarray
    M_values: np.ndarray
    bracket_MW: np.ndarray
    bracket_MM: np.ndarray

    def at_end(self):
        return float(self.M_values[-1]), float(self.bracket_MW[-1]), float(self.bracket_MM[-1])

    def at_time(self, t: float):
        i = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, t)))
        return float(self.M_values[i]), float(self.bracket_MW[i]), float(self.bracket_MM[i])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["time", "M", "bracket_MW", "bracket_MM"])
            for row in zip(self.times, self.M_values, self.bracket_MW, self.bracket_MM):
                writer.writerow([repr(float(v)) for v in row])
        return path


def _cumulative(steps):
    out = np.zeros(steps.size + 1)
    np.cumsum(steps, out=out[1:])
    return out


def martingale_path(path: SamplePath, h: float, negate_kernel: bool = False) -> MartingaleSeries:
    """``M^h_t = h^{-3/2} int_0^t C(s) dW_s`` with ``C(s) = int_0^s K_h(W_s - W_r) dr``."""
    c = inner_integral(path, h, negate_kernel)
    scale = h**-1.5
    d = path.delta
    return MartingaleSeries(
        h,
        path.times,
        _cumulative(scale * c * path.increments),
        _cumulative(scale * c * d),
        _cumulative(scale * scale * c * c * d),
    )


def triple_kernel_integral(path: SamplePath, h: float) -> float:
    """``h^{-3} int_0^t int_0^s int_0^r K_h(W_s - W_r') K_h(W_s - W_r) dr' dr ds``.

    For fixed ``s`` the sum over ``r' < r < s`` of ``K K`` is
    ``(k_s^2 - a_s) / 2`` with ``k_s`` the signed and ``a_s`` the unsigned count.
    """
    pos, neg = kernel_counts(path, h)
    k = pos - neg
    a = pos + neg
    pairs = (k * k - a) // 2
    return float(path.delta**3 * pairs.sum() / h**3)


def j_term(path: SamplePath, h: float, at: str = "end") -> float:
    """``int_0^t J_h(W_t - W_s) ds`` (``at="end"``) or ``int_0^t J_h(W_0 - W_s) ds`` (``at="origin"``)."""
    w = path.values
    ref = w[-1] if at == "end" else w[0]
    return path.delta * float(np.sum(kernel_J(h, ref - w[:-1])))


@dataclass(frozen=True)
class DecompositionResult:
    lhs: float
    rhs: float
    residual: float
    j_end: float
    j_origin: float
    stochastic: float
    j_bound: float


def decomposition_check(
    path: SamplePath,
    h: float,
    eps: float,
    correction: str | None = "mean",
    include_origin_term: bool = False,
    negate_kernel: bool = False,
    scheme: str = "milstein",
) -> DecompositionResult:
    """Both sides of ``2(2 alpha2(0) - alpha2(h) - alpha2(-h)) - 4ht = 4 int J_h(W_t - W_s) ds - 4 int int K_h dr dW``.

    The left side uses counting estimates; ``j_bound = 2 h^2 max_x L^x_t``
    bounds ``|j_end|`` with ``L`` binned at width ``h / 8``.  The default
    Milstein scheme estimates the integrand derivative with window ``eps``.
    """
    if not eps < h:
        raise ValueError("eps must be smaller than h")
    _check_scheme(scheme)
    t = path.horizon
    a0, ap, am = (alpha2_counting(path, x, eps, correction).value for x in (0.0, h, -h))
    lhs = 2 * (2 * a0 - ap - am) - 4 * h * t
    j_end = j_term(path, h, "end")
    j_origin = j_term(path, h, "origin")
    integrand = inner_integral(path, h, negate_kernel)
    if scheme == "milstein":
        stoch = milstein_stochastic_integral(path, integrand, kernel_derivative(path, h, eps, negate_kernel))
    else:
        stoch = euler_stochastic_integral(path, integrand)
    rhs = 4 * j_end - 4 * stoch
    if include_origin_term:
        rhs -= 4 * j_origin
    sup_l = local_time_binned(path, h / 8).sup()
    return DecompositionResult(lhs, rhs, lhs - rhs, j_end, j_origin, stoch, 2 * h * h * sup_l)


def loglog_slope(h, y) -> float:
    h, y = np.asarray(h, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(h), np.log(y), 1)[0])


def bracket_mw_scaling(paths, h_grid, rng=None, n_boot: int = 200):
    """Per-``h`` mean, standard error and RMS of ``<M^h, W>_t`` over ``paths``.

    Returns ``(rows, fit)``.  ``E <M^h, W>_t = 0`` for every ``h`` by the
    reflection symmetry of Brownian motion, so the rate is read off the RMS:
    ``fit`` holds the log-log slopes of RMS and of ``|mean|`` against ``h``
    with bootstrap standard errors.
    """
    h_grid = [float(h) for h in h_grid]
    if len(h_grid) < 2:
        raise ValueError("need at least two h values")
    if any(b >= a for a, b in zip(h_grid, h_grid[1:])):
        raise ValueError("h grid must be strictly decreasing")
    vals = np.array([[martingale_path(p, h).bracket_MW[-1] for h in h_grid] for p in paths])
    m = vals.shape[0]
    rows = []
    for j, h in enumerate(h_grid):
        col = vals[:, j]
        rows.append(
            {
                "h": h,
                "mean": float(col.mean()),
                "stderr": float(col.std(ddof=1) / math.sqrt(m)) if m > 1 else float("nan"),
                "rms": float(np.sqrt(np.mean(col**2))),
                "count": m,
            }
        )
    rms = [r["rms"] for r in rows]
    absmean = [abs(r["mean"]) for r in rows]
    fit = {"rms_slope": loglog_slope(h_grid, rms), "absmean_slope": loglog_slope(h_grid, absmean)}
    if rng is not None and m > 1:
        boot = []
        for _ in range(n_boot):
            sample = vals[rng.integers(0, m, m)]
            boot.append(loglog_slope(h_grid, np.sqrt(np.mean(sample**2, axis=0))))
        fit["rms_slope_stderr"] = float(np.std(boot, ddof=1))
    return rows, fit


def write_scaling_csv(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["h", "mean", "stderr", "count"])
        for r in rows:
            writer.writerow([r["h"], repr(r["mean"]), repr(r["stderr"]), r["count"]])
    return path
