"""Monte Carlo harness for the L² modulus CLT, its moments and the bracket limits.

Each replica is one path.  The replica's η draws come from its own
``STREAM_ETA`` generator, never from the path stream, so pairing a path's
``int L^2`` with a fresh η realizes the mixture law ``c sqrt(int L^2) η``
with ``c = sqrt(64/3)``.

Replicas run on a thread pool (numba kernels release the GIL);
``Executor.map`` keeps results in replica order, so reports do not depend
on the pool size.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .intersection import a3_integral, alpha2_counting, weight_integral_closed_form, weight_integral_quadrature
from .localtime import MODULUS_CORRECTIONS, LocalTimeField, local_time_binned, lp_modulus, l2_statistic, modulus_correction
from .paths import STREAM_BOOTSTRAP, STREAM_ETA, STREAM_PATH, SamplePath, SimConfig, generate_brownian, replica_rng
from .moments import (
    exact_square_modulus,
    expected_a3_integral,
    expected_bracket_mm,
    mean_alpha2,
    mean_square_integral,
    predicted_mean_statistic,
    predicted_square_modulus,
)
from .tanaka import martingale_path

C_MIXTURE = math.sqrt(64.0 / 3.0)
C_PRIME = math.sqrt(128.0 / 3.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
MIN_REPLICAS = 100


class BudgetExhausted(RuntimeError):
    """Raised when an experiment exceeds its wall-clock allowance."""


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything that determines an experiment's output.

    ``delta_fraction`` and ``eps_fraction`` set the resolution policy
    ``delta = h / delta_fraction`` and ``eps = h / eps_fraction``; a fixed
    ``delta`` overrides the first and must divide every ``h``.  ``correction``
    is applied to the statistic (see
    :func:`~localtime_lab.localtime.modulus_correction`); the stored squared
    moduli always carry the ``"resolution"`` correction only.
    """

    sim: SimConfig
    h_list: tuple = (0.08, 0.04, 0.02)
    delta_fraction: int = 8
    eps_fraction: int = 8
    delta: float | None = None
    t_list: tuple = (0.25, 0.5, 1.0)
    eta_stream: int = STREAM_ETA
    bootstrap: int = 200
    threads: int | None = None
    max_seconds: float | None = None
    brackets: bool = False
    out_dir: str | None = None
    correction: str | None = "mean"

    def __post_init__(self):
        if self.correction not in MODULUS_CORRECTIONS:
            raise ValueError(f"unknown correction {self.correction!r}")
        h = tuple(float(v) for v in self.h_list)
        object.__setattr__(self, "h_list", h)
        object.__setattr__(self, "t_list", tuple(float(v) for v in self.t_list))
        if not h:
            raise ValueError("h_list is empty")
        if any(v <= 0 for v in h) or any(b >= a for a, b in zip(h, h[1:])):
            raise ValueError("h_list must be positive and strictly decreasing")
        if self.eta_stream == STREAM_PATH:
            raise ValueError("mixture noise must not share the path stream")
        for v in h:
            self.delta_for(v)
        for t in self.t_list:
            if not 0 < t <= self.sim.horizon:
                raise ValueError(f"t = {t} outside (0, {self.sim.horizon}]")
            k = t / self.sim.delta
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise ValueError(f"t = {t} is not on the time grid")

    @property
    def replicas(self) -> int:
        return self.sim.replica_count

    def delta_for(self, h: float) -> float:
        d = float(self.delta) if self.delta is not None else h / self.delta_fraction
        k = h / d
        if abs(k - round(k)) > 1e-9 * max(1.0, k) or round(k) < 1:
            raise ValueError(f"h = {h} is not an integer multiple of delta = {d}")
        return d

    def eps_for(self, h: float) -> float:
        return h / self.eps_fraction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sim"] = asdict(self.sim)
        d["h_list"] = list(self.h_list)
        d["t_list"] = list(self.t_list)
        return d


def mixture_sample(field: LocalTimeField, eta: float) -> float:
    """``sqrt(64/3) * sqrt(delta * sum L^2) * eta``."""
    return C_MIXTURE * math.sqrt(field.square_integral()) * float(eta)


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov distance and asymptotic p-value.

    ``D = sup |F_a - F_b|`` over the pooled sample; ``p`` uses the
    Kolmogorov limit law at ``sqrt(m n / (m + n)) D``.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    en = a.size * b.size / (a.size + b.size)
    return d, float(special.kolmogorov(math.sqrt(en) * d))


def map_replicas(fn, ids, threads: int | None = None, deadline: float | None = None):
    """``[fn(i) for i in ids]`` on a thread pool, in ``ids`` order."""
    ids = list(ids)
    threads = threads or os.cpu_count() or 1

    def run(i):
        if deadline is not None and time.monotonic() > deadline:
            raise BudgetExhausted("experiment exceeded its time budget")
        return fn(i)

    if threads == 1:
        return [run(i) for i in ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, ids))


def _deadline(plan):
    return None if plan.max_seconds is None else time.monotonic() + plan.max_seconds


@dataclass(frozen=True)
class ReplicaResult:
    replica: int
    statistic: tuple
    mixture: tuple
    square_integral: tuple
    square_modulus: tuple
    bracket_ratio: tuple


def _replica(plan: ExperimentPlan, i: int) -> ReplicaResult:
    path = generate_brownian(plan.sim, i)
    eta = replica_rng(plan.sim.master_seed, i, plan.eta_stream).standard_normal(len(plan.h_list))
    stat, mix, sq, mod, ratio = [], [], [], [], []
    for j, h in enumerate(plan.h_list):
        fld = local_time_binned(path, plan.delta_for(h))
        stat.append(l2_statistic(fld, h, plan.correction))
        mix.append(mixture_sample(fld, eta[j]))
        sq.append(fld.square_integral())
        mod.append(lp_modulus(fld, h, 2) + modulus_correction(fld, h, "resolution"))
        if plan.brackets:
            mm = martingale_path(path, h).bracket_MM[-1]
            ratio.append(mm / alpha2_counting(path, 0.0, plan.eps_for(h), "mean").value)
        else:
            ratio.append(float("nan"))
    return ReplicaResult(i, tuple(stat), tuple(mix), tuple(sq), tuple(mod), tuple(ratio))


@dataclass
class CltReport:
    """Per-``h`` samples and summaries of one experiment."""

    plan: ExperimentPlan
    statistics: np.ndarray  # (len(h_list), M)
    mixtures: np.ndarray
    square_integrals: np.ndarray
    square_moduli: np.ndarray
    bracket_ratios: np.ndarray
    per_h: list = field(default_factory=list)
    runtime: float = 0.0

    def to_dict(self) -> dict:
        sim = self.plan.sim
        return {
            "plan": self.plan.to_dict(),
            "per_h": self.per_h,
            "runtime": self.runtime,
            "seeds": {
                "master_seed": sim.master_seed,
                "replicas": [0, sim.replica_count],
                "path_stream": STREAM_PATH,
                "eta_stream": self.plan.eta_stream,
                "bootstrap_stream": STREAM_BOOTSTRAP,
            },
            "notes": "mixture samples pair each path's int L^2 with an independent eta",
        }

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rpath = out / "clt_report.json"
        rpath.write_text(json.dumps(self.to_dict(), indent=2, allow_nan=False, default=_json_default) + "\n", encoding="utf-8")
        spath = out / "clt_samples.csv"
        with open(spath, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["h", "replica", "statistic", "mixture_sample"])
            for j, h in enumerate(self.plan.h_list):
                for i in range(self.statistics.shape[1]):
                    writer.writerow([h, i, repr(float(self.statistics[j, i])), repr(float(self.mixtures[j, i]))])
        return rpath, spath


PER_H_KEYS = ("h", "ks_D", "ks_p", "mean_S", "var_S", "predicted_mean", "predicted_var", "bracket_ratio")
REPORT_KEYS = ("plan", "per_h", "runtime", "seeds")


def validate_report(report: dict) -> None:
    """Raise ``ValueError`` unless ``report`` has the published report layout."""
    missing = [k for k in REPORT_KEYS if k not in report]
    if missing:
        raise ValueError(f"report lacks {missing}")
    if not isinstance(report["per_h"], list) or not report["per_h"]:
        raise ValueError("per_h must be a non-empty list")
    for row in report["per_h"]:
        missing = [k for k in PER_H_KEYS if k not in row]
        if missing:
            raise ValueError(f"per_h row lacks {missing}")
        for k in PER_H_KEYS:
            v = row[k]
            if v is None and k == "bracket_ratio":
                continue
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ValueError(f"per_h field {k} must be a number")
        if not 0.0 <= row["ks_D"] <= 1.0 or not 0.0 <= row["ks_p"] <= 1.0:
            raise ValueError("KS distance and p-value must lie in [0, 1]")
    if not isinstance(report["runtime"], (int, float)) or not isinstance(report["seeds"], dict):
        raise ValueError("runtime must be a number and seeds an object")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def ks_bootstrap_stderr(a, b, rng, n_boot: int) -> float:
    """Standard deviation of the KS distance under paired resampling of replicas."""
    a, b = np.asarray(a), np.asarray(b)
    m = a.size
    ds = [ks_two_sample(a[idx], b[idx])[0] for idx in (rng.integers(0, m, m) for _ in range(n_boot))]
    return float(np.std(ds, ddof=1)) if n_boot > 1 else float("nan")


def run_clt_experiment(plan: ExperimentPlan) -> CltReport:
    """Statistic and paired mixture sample per replica and ``h``, then per-``h`` KS and moments."""
    m = plan.replicas
    if m < MIN_REPLICAS:
        raise ValueError(f"at least {MIN_REPLICAS} replicas are needed for the asymptotic KS law, got {m}")
    start = time.monotonic()
    results = map_replicas(lambda i: _replica(plan, i), range(m), plan.threads, _deadline(plan))
    samples = np.array([r.statistic for r in results]).T
    mix = np.array([r.mixture for r in results]).T
    sq = np.array([r.square_integral for r in results]).T
    mod = np.array([r.square_modulus for r in results]).T
    ratio = np.array([r.bracket_ratio for r in results]).T
    t = plan.sim.horizon
    per_h = []
    for j, h in enumerate(plan.h_list):
        d, p = ks_two_sample(samples[j], mix[j])
        rng = replica_rng(plan.sim.master_seed, j, STREAM_BOOTSTRAP)
        s = samples[j]
        # recentred form: subtract the exact mean modulus rather than 4ht
        shift = (exact_square_modulus(h, t) - 4.0 * h * t) / h**1.5
        d_rc, p_rc = ks_two_sample(s - shift, mix[j])
        per_h.append(
            {
                "h": h,
                "ks_D": d,
                "ks_p": p,
                "ks_D_stderr": _finite_or_none(ks_bootstrap_stderr(s, mix[j], rng, plan.bootstrap)),
                "ks_D_recentred": d_rc,
                "ks_p_recentred": p_rc,
                "mean_S": float(s.mean()),
                "mean_S_stderr": float(s.std(ddof=1) / math.sqrt(m)),
                "var_S": float(s.var(ddof=1)),
                "skew_S": float(stats.skew(s)),
                "predicted_mean": predicted_mean_statistic(h, t),
                "exact_mean": shift,
                "predicted_var": C_MIXTURE**2 * float(sq[j].mean()),
                "predicted_var_exact": C_MIXTURE**2 * mean_square_integral(t),
                "mean_square_integral": float(sq[j].mean()),
                "corr_abs_S_sqrt_L2": float(np.corrcoef(np.abs(s), np.sqrt(sq[j]))[0, 1]),
                "bracket_ratio": _finite_or_none(ratio[j].mean()) if plan.brackets else None,
                "replicas": m,
            }
        )
    return CltReport(plan, samples, mix, sq, mod, ratio, per_h, time.monotonic() - start)


def ks_trend_ok(per_h, n_se: float = 1.0) -> bool:
    """KS distance nonincreasing along the (decreasing) ``h`` grid, up to ``n_se`` bootstrap errors."""
    for a, b in zip(per_h, per_h[1:]):
        err = math.hypot(a.get("ks_D_stderr") or 0.0, b.get("ks_D_stderr") or 0.0)
        if b["ks_D"] > a["ks_D"] + n_se * err:
            return False
    return True


def expectation_study(plan: ExperimentPlan, report: CltReport | None = None) -> list:
    """Mean of ``int (L^{x+h} - L^x)^2 dx`` per ``h`` against ``4 h t - 8 h^2 sqrt(t)/sqrt(2 pi)``.

    The binned modulus includes the ``4 t pair_spread`` resolution offset (see
    :func:`~localtime_lab.localtime.modulus_correction`).  ``residual_over_h3``
    reports ``(mean - prediction) / h^3``; no bound is asserted on it.
    """
    m = plan.replicas
    if m < 500:
        raise ValueError(f"expectation study needs at least 500 replicas, got {m}")
    if report is None:
        start = time.monotonic()
        results = map_replicas(lambda i: _replica(plan, i), range(m), plan.threads, _deadline(plan))
        mod = np.array([r.square_modulus for r in results]).T
        runtime = time.monotonic() - start
    else:
        mod, runtime = report.square_moduli, report.runtime
    t = plan.sim.horizon
    rows = []
    for j, h in enumerate(plan.h_list):
        col = mod[j]
        pred = predicted_square_modulus(h, t)
        mean = float(col.mean())
        rows.append(
            {
                "h": h,
                "mean": mean,
                "stderr": float(col.std(ddof=1) / math.sqrt(m)),
                "prediction": pred,
                "exact": exact_square_modulus(h, t),
                "residual_over_h3": (mean - pred) / h**3,
                "count": m,
                "runtime": runtime,
            }
        )
    return rows


def _bracket_replica(plan: ExperimentPlan, i: int, a3: bool):
    path = generate_brownian(plan.sim, i)
    steps = [int(round(t / path.delta)) for t in plan.t_list]
    prefixes = {}
    out = {}
    for h in plan.h_list:
        eps = plan.eps_for(h)
        ser = martingale_path(path, h)
        for t, k in zip(plan.t_list, steps):
            if k not in prefixes:
                prefixes[k] = path if k == path.n else SamplePath(path.values[: k + 1], path.delta, path.seed_info, t)
            sub = prefixes[k]
            a2 = alpha2_counting(sub, 0.0, eps, "mean").value
            out[(h, t)] = (ser.bracket_MM[k], ser.bracket_MW[k], ser.M_values[k], a2)
        if a3:
            out[(h, "a3")] = a3_integral(path, h, eps)
    return out


def bracket_study(plan: ExperimentPlan, a3: bool = False, exact: bool = True) -> dict:
    """Means of ``<M^h, M^h>_t / alpha2_t(0)`` and ``<M^h, W>_t`` per ``(h, t)``.

    ``ratio`` is the replica mean of per-path ratios and ``ratio_of_means``
    the ratio of replica means; ``exact_ratio`` is
    ``E <M^h, M^h>_t / E alpha2_t(0)`` by quadrature, the finite-``h`` value
    both estimate.  With ``a3=True`` the study adds ``h^{-1} int int A3`` over
    ``(4/3) alpha2_1(0)`` at ``t`` equal to the horizon, as the mean of
    per-path ratios and as the ratio of means, with the exact expectation
    of the windowed numerator when ``exact``.
    """
    m = plan.replicas
    start = time.monotonic()
    res = map_replicas(lambda i: _bracket_replica(plan, i, a3), range(m), plan.threads, _deadline(plan))
    rows = []
    for h in plan.h_list:
        for t in plan.t_list:
            v = np.array([r[(h, t)] for r in res])
            mm, mw, mval, a2 = v.T
            r = mm / a2
            row = {
                "h": h,
                "t": t,
                "mean_MM": float(mm.mean()),
                "mean_alpha2": float(a2.mean()),
                "ratio": float(r.mean()),
                "ratio_stderr": float(r.std(ddof=1) / math.sqrt(m)) if m > 1 else None,
                "ratio_of_means": float(mm.mean() / a2.mean()),
                "mean_MW": float(mw.mean()),
                "MW_stderr": float(mw.std(ddof=1) / math.sqrt(m)) if m > 1 else None,
                "rms_MW": float(np.sqrt(np.mean(mw**2))),
                "mean_M_squared": float(np.mean(mval**2)),
                "count": m,
            }
            if exact:
                row["exact_ratio"] = expected_bracket_mm(h, t) / mean_alpha2(0.0, t)
            rows.append(row)
    a3_rows = []
    if a3:
        t = plan.sim.horizon
        for h in plan.h_list:
            num = np.array([r[(h, "a3")] for r in res])
            den = np.array([4.0 / 3.0 * r[(h, t)][3] for r in res])
            q = num / den
            row = {
                "h": h,
                "ratio": float(q.mean()),
                "stderr": float(q.std(ddof=1) / math.sqrt(m)) if m > 1 else None,
                "ratio_of_means": float(num.mean() / den.mean()),
                "mean_a3": float(num.mean()),
                "mean_a3_stderr": float(num.std(ddof=1) / math.sqrt(m)) if m > 1 else None,
                "count": m,
            }
            if exact:
                row["exact_mean_a3"] = expected_a3_integral(h, plan.eps_for(h), t=t)
                row["exact_ratio"] = row["exact_mean_a3"] / (4.0 / 3.0 * mean_alpha2(0.0, t))
            a3_rows.append(row)
    return {
        "rows": rows,
        "a3": a3_rows,
        "weight_integral": {"closed_form": weight_integral_closed_form(), "quadrature": weight_integral_quadrature()},
        "target_ratio": 8.0 / 3.0,
        "runtime": time.monotonic() - start,
    }
