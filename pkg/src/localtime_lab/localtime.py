"""Local time fields of discretized paths and their spatial moduli.

A :class:`LocalTimeField` holds ``L^{x_k}_t`` on the grid ``x_k = x_origin +
k * bin_width`` and is zero off that grid.  Binned fields are aligned to
integer multiples of the bin width, so a spatial shift by ``h = m * delta``
is an exact index shift.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate

from .paths import SamplePath, WalkPath

SHAPES = ("bump", "quartic")


def _bump_raw(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _quartic_raw(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 1.0, (1.0 - x * x) ** 2, 0.0)


_RAW = {"bump": _bump_raw, "quartic": _quartic_raw}


@lru_cache(maxsize=None)
def _shape_norm(shape):
    val, _ = integrate.quad(lambda u: float(_RAW[shape](u)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=None)
def _shape_pair_spread(shape):
    # E|X - X'| for X, X' i.i.d. with density `shape` on [-1, 1]
    c = _shape_norm(shape)
    cdf = lambda u: integrate.quad(lambda v: float(_RAW[shape](v)) / c, -1.0, u, epsabs=1e-13)[0]
    # E|X - X'| = 2 * int F (1 - F)
    val, _ = integrate.quad(lambda u: 2.0 * cdf(u) * (1.0 - cdf(u)), -1.0, 1.0, epsabs=1e-12, limit=200)
    return val


@dataclass(frozen=True)
class Mollifier:
    """``f_eps(x) = shape(x / eps) / eps`` for a normalized symmetric bump on ``[-1, 1]``.

    ``shape="bump"`` is the C-infinity profile ``exp(-1 / (1 - x**2))``;
    ``shape="quartic"`` is ``(1 - x**2)**2``.  Both are normalized by quadrature.
    """

    width: float
    shape: str = "bump"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("mollifier width must be positive")
        if self.shape not in _RAW:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {SHAPES}")

    def profile(self, u):
        """The normalized unit-width profile."""
        return _RAW[self.shape](u) / _shape_norm(self.shape)

    def __call__(self, x):
        return self.profile(np.asarray(x, dtype=np.float64) / self.width) / self.width

    @property
    def pair_spread(self) -> float:
        """``E|U - U'|`` for ``U, U'`` i.i.d. with density ``f_eps``."""
        return self.width * _shape_pair_spread(self.shape)


@dataclass(frozen=True)
class LocalTimeField:
    """Local time values on a uniform spatial grid.

    ``pair_spread`` is ``E|U - U'|`` of the spatial averaging that produced the
    field (``delta / 3`` for bins); it sets the finite-resolution offset of the
    squared modulus, see :func:`l2_statistic`.
    """

    x_origin: float
    bin_width: float
    values: np.ndarray
    horizon: float
    pair_spread: float = 0.0
    epsilon: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if not self.bin_width > 0:
            raise ValueError("bin width must be positive")

    @property
    def grid(self) -> np.ndarray:
        return self.x_origin + self.bin_width * np.arange(self.values.size)

    def total(self) -> float:
        return float(self.bin_width * self.values.sum())

    def square_integral(self) -> float:
        """``int (L^x)^2 dx`` as a grid sum."""
        return float(self.bin_width * np.dot(self.values, self.values))

    def sup(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def shift_steps(self, h: float) -> int:
        return _shift_steps(h, self.bin_width)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "local_time"])
            for x, v in zip(self.grid, self.values):
                writer.writerow([repr(float(x)), repr(float(v))])
        meta = {"t": self.horizon, "delta": self.bin_width, "epsilon": self.epsilon, **self.meta}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        return path


def _shift_steps(h, delta):
    m = h / delta
    k = int(round(m))
    if k < 0 or abs(m - k) > 1e-9 * max(1.0, abs(m)):
        raise ValueError(f"shift {h} is not a non-negative integer multiple of the bin width {delta}")
    return k


def _path_meta(path):
    return {"n": path.n, "seed_info": list(path.seed_info)}


def local_time_binned(path: SamplePath, delta: float) -> LocalTimeField:
    """Left-point occupation density on bins ``[k delta, (k+1) delta)``."""
    if not delta > 0:
        raise ValueError("bin width must be positive")
    if path.n < 1:
        raise ValueError("path needs at least one step")
    k = np.floor(path.values[:-1] / delta).astype(np.int64)
    k0 = int(k.min())
    counts = np.bincount(k - k0)
    values = counts * (path.delta / delta)
    return LocalTimeField(k0 * delta, delta, values, path.horizon, pair_spread=delta / 3.0, meta={**_path_meta(path), "kind": "binned"})


def kernel_grid(path: SamplePath, m: Mollifier, delta: float):
    """``(x_origin, delta, count)`` covering ``[min W - eps, max W + eps]`` on multiples of delta."""
    lo = math.floor((path.values.min() - m.width) / delta) - 1
    hi = math.ceil((path.values.max() + m.width) / delta) + 1
    return lo * delta, delta, hi - lo + 1


def local_time_kernel(path: SamplePath, m: Mollifier, grid=None, delta: float | None = None) -> LocalTimeField:
    """``L^{x_k} = Delta * sum_{i<n} f_eps(W_i - x_k)`` on ``grid = (x_origin, delta, count)``.

    ``delta * sum L`` equals ``t`` up to the Riemann-sum error of
    ``int f_eps`` at spacing ``delta``; ``delta <= eps / 8`` keeps it below
    ``1e-6 t`` for both shapes.
    """
    if grid is None:
        grid = kernel_grid(path, m, delta if delta is not None else m.width)
    x0, dx, count = grid
    count = int(count)
    if count < 1:
        raise ValueError("empty grid")
    if not dx > 0:
        raise ValueError("grid spacing must be positive")
    w = path.values[:-1]
    eps = m.width
    base = np.ceil((w - eps - x0) / dx).astype(np.int64)
    span = int(math.ceil(2 * eps / dx)) + 1
    acc = np.zeros(count)
    for j in range(span + 1):
        k = base + j
        ok = (k >= 0) & (k < count)
        if not ok.any():
            continue
        kk = k[ok]
        acc += np.bincount(kk, weights=m(w[ok] - (x0 + kk * dx)), minlength=count)
    return LocalTimeField(
        x0, dx, acc * path.delta, path.horizon, pair_spread=m.pair_spread, epsilon=eps, meta=_path_meta(path)
    )


def lp_modulus(field: LocalTimeField, h: float, p: float) -> float:
    """``int |L^{x+h} - L^x|^p dx`` with the field extended by zero."""
    if p < 1:
        raise ValueError("p must be at least 1")
    m = field.shift_steps(h)
    if m == 0:
        return 0.0
    v = field.values
    padded = np.concatenate([np.zeros(m), v, np.zeros(m)])
    diff = np.abs(padded[m:] - padded[:-m])
    if p == 2:
        return float(field.bin_width * np.dot(diff, diff))
    return float(field.bin_width * np.sum(diff**p))


def product_integral(field: LocalTimeField, h: float) -> float:
    """``int L^{x+h} L^x dx`` on the grid."""
    m = field.shift_steps(h)
    v = field.values
    if m >= v.size:
        return 0.0
    return float(field.bin_width * np.dot(v[m:], v[: v.size - m]))


MODULUS_CORRECTIONS = (None, "resolution", "mean")


def modulus_correction(field: LocalTimeField, h: float, correction: str | None) -> float:
    """Additive correction to :func:`lp_modulus` with ``p = 2``.

    ``"resolution"`` adds ``4 t * field.pair_spread``.  Spatial averaging at
    scale ``delta`` turns the ``-t|x|`` kink of the self-intersection local
    time at the origin into a rounded corner and lowers the squared modulus by
    that amount (for bins: ``4 t delta / 3``).

    ``"mean"`` (binned fields only) adds the exact Brownian expectation minus
    the expectation of the binned estimator on the same grid, which also
    removes the time-discretisation part of the bias.
    """
    if correction is None:
        return 0.0
    if correction == "resolution":
        return 4.0 * field.horizon * field.pair_spread
    if correction == "mean":
        from .moments import exact_square_modulus, expected_binned_modulus

        if field.meta.get("kind") != "binned" or "n" not in field.meta:
            raise ValueError("mean correction needs a binned field built from a path")
        t, n = field.horizon, int(field.meta["n"])
        m = field.shift_steps(h)
        return exact_square_modulus(h, t) - expected_binned_modulus(m * field.bin_width, field.bin_width, n, t)
    raise ValueError(f"unknown correction {correction!r}; expected one of {MODULUS_CORRECTIONS}")


def l2_statistic(field: LocalTimeField, h: float, correction: str | None = None) -> float:
    """CLT statistic ``(int (L^{x+h} - L^x)^2 dx - 4 h t) / h^{3/2}``.

    ``correction`` is passed to :func:`modulus_correction`.  Uncorrected, at
    ``delta = h/8`` the bin offset alone is ``h^{-1/2}/6`` in statistic units,
    larger than the finite-``h`` mean.
    """
    sq = lp_modulus(field, h, 2) + modulus_correction(field, h, correction)
    return (sq - 4.0 * h * field.horizon) / h**1.5


def mollified_positive_part(m: Mollifier, x: float):
    """``(g_eps(x), g_eps'(x))`` for ``g_eps(x) = int_0^inf y f_eps(x - y) dy``.

    ``g_eps = f_eps * (.)^+`` so ``g'' = f_eps``; outside ``[-eps, eps]`` the
    values are exactly ``(x, 1)`` or ``(0, 0)``.
    """
    eps = m.width
    if x >= eps:
        return float(x), 1.0
    if x <= -eps:
        return 0.0, 0.0
    f = lambda u: float(m(u))
    g, _ = integrate.quad(lambda u: (x - u) * f(u), -eps, x, epsabs=1e-15, epsrel=1e-13, limit=200)
    gp, _ = integrate.quad(f, -eps, x, epsabs=1e-15, epsrel=1e-13, limit=200)
    return g, gp


@dataclass(frozen=True)
class WalkLocalTime:
    """Site visit counts ``l^x = #{1 <= i <= n : S_i = x}`` (or ``0 <= i`` with the origin)."""

    sites: np.ndarray
    counts: np.ndarray

    def __getitem__(self, x):
        idx = np.searchsorted(self.sites, x)
        if idx < self.sites.size and self.sites[idx] == x:
            return int(self.counts[idx])
        return 0

    def as_dict(self) -> dict:
        return {int(s): int(c) for s, c in zip(self.sites, self.counts)}

    def total(self) -> int:
        return int(self.counts.sum())

    def square_difference_sum(self) -> int:
        """``sum_x (l^x - l^{x+1})^2`` over all integers ``x``."""
        if self.sites.size == 0:
            return 0
        lo, hi = int(self.sites[0]), int(self.sites[-1])
        dense = np.zeros(hi - lo + 3, dtype=np.int64)
        dense[self.sites - lo + 1] = self.counts
        return int(np.sum(np.diff(dense) ** 2))


def walk_local_time(walk: WalkPath, include_origin: bool = False) -> WalkLocalTime:
    pos = walk.positions if include_origin else walk.positions[1:]
    sites, counts = np.unique(pos, return_counts=True)
    return WalkLocalTime(sites.astype(np.int64), counts.astype(np.int64))


def walk_hamiltonian(walk: WalkPath, include_origin: bool = False):
    """Local time and polymer energy ``H = sum_{i!=j} 1{S_i=S_j} - 1/2 sum_{i!=j} 1{|S_i-S_j|=1}``.

    ``H`` is evaluated from ordered pair counts.  It is tied to the squared
    local time increments by ``sum_x (l^x - l^{x+1})^2 = 2 H + 2 N`` where
    ``N`` is the number of visits counted (``n``, or ``n + 1`` when the time-0
    position is included); the check is exact integer arithmetic.
    """
    lt = walk_local_time(walk, include_origin)
    c = lt.counts
    # ordered pairs i != j at equal sites; unordered pairs one site apart
    same = int(np.sum(c * (c - 1)))
    adjacent = np.isin(lt.sites + 1, lt.sites)
    nxt = c[np.searchsorted(lt.sites, lt.sites[adjacent] + 1)]
    h = same - int(np.sum(c[adjacent] * nxt))
    if lt.square_difference_sum() != 2 * h + 2 * lt.total():
        raise AssertionError("pair-count and square-sum forms of the walk energy disagree")
    return lt, h
