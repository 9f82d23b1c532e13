import csv
import math

import numpy as np
import pytest
from conftest import brute_inner_counts

from localtime_lab.moments import expected_bracket_mm, mean_alpha2
from localtime_lab.paths import SamplePath, SimConfig, generate_brownian
from localtime_lab.tanaka import (
    bracket_mw_scaling,
    decomposition_check,
    euler_stochastic_integral,
    inner_integral,
    kernel_counts,
    kernel_J,
    kernel_J_positive_parts,
    kernel_K,
    kernel_K_indicators,
    loglog_slope,
    martingale_path,
    milstein_stochastic_integral,
    tanaka_check,
    triple_kernel_integral,
    write_scaling_csv,
)


def test_kernel_examples():
    assert kernel_J(1.0, 0.0) == -1.0
    assert kernel_J(1.0, 2.0) == 0.0
    assert kernel_J(1.0, -0.5) == -0.5
    assert kernel_K(1.0, 0.5) == 1
    assert kernel_K(1.0, 0.0) == -1
    assert kernel_K(1.0, 1.5) == 0
    assert kernel_K(1.0, 1.0) == 1 and kernel_K(1.0, -1.0) == 0
    with pytest.raises(ValueError):
        kernel_J(0.0, 1.0)
    with pytest.raises(ValueError):
        kernel_K(-1.0, 1.0)


def test_kernel_forms_agree():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.uniform(-3, 3, 10_000), [-1.0, 0.0, 1.0]])
    for h in (1.0, 0.3):
        assert np.allclose(kernel_J(h, x), kernel_J_positive_parts(h, x), atol=1e-15, rtol=0)
        hx = np.concatenate([x, [-h, h]])
        assert np.array_equal(kernel_K(h, hx), kernel_K_indicators(h, hx))
    # K_h(x) = K_1(x / h) on exactly scaled points
    assert np.array_equal(kernel_K(0.25, x / 4), kernel_K(1.0, x))


def test_j_shape():
    h = 0.2
    assert kernel_J(h, h) == 0.0 and kernel_J(h, -h) == 0.0
    x = np.linspace(-1, 1, 20_001)
    assert np.max(np.abs(kernel_J(h, x))) == pytest.approx(h)
    # slopes of J follow the sign of K
    x = np.linspace(-0.3, 0.3, 6001)[1:-1]
    slope = (kernel_J(h, x + 1e-7) - kernel_J(h, x - 1e-7)) / 2e-7
    away = np.abs(np.abs(x) - h) > 1e-6
    away &= np.abs(x) > 1e-6
    assert np.allclose(slope[away], kernel_K(h, x[away]), atol=1e-6)


def test_euler_integral():
    p = generate_brownian(SimConfig(1.0, 1000, 4, 1), 0)
    assert euler_stochastic_integral(p, np.zeros(1000)) == 0.0
    assert euler_stochastic_integral(p, np.ones(1000)) == pytest.approx(p.values[-1] - p.values[0])
    with pytest.raises(ValueError):
        euler_stochastic_integral(p, np.ones(999))
    phi = p.values[:-1]
    assert milstein_stochastic_integral(p, phi, np.zeros(1000)) == euler_stochastic_integral(p, phi)
    with pytest.raises(ValueError):
        milstein_stochastic_integral(p, phi, np.zeros(3))


def test_ito_isometry():
    cfg = SimConfig(1.0, 50, 21, 10_000)
    sq = np.empty(cfg.replica_count)
    for i in range(cfg.replica_count):
        p = generate_brownian(cfg, i)
        sq[i] = euler_stochastic_integral(p, p.values[:-1]) ** 2
    # E sum W_i^2 D = D^2 sum i
    expected = cfg.delta**2 * np.arange(cfg.steps).sum()
    assert abs(sq.mean() / expected - 1) <= 0.05


def test_tanaka_beyond_range():
    p = generate_brownian(SimConfig(1.0, 5000, 8, 1), 0)
    span = float(p.values.max() - p.values.min())
    r = tanaka_check(p, span + 0.01, 0.01, correction=None)
    assert r.lhs == 0.0 and r.residual == 0.0
    assert all(v == 0.0 for v in r.terms.values())
    # a below -range: the indicator is always one and only the grid error of int s dW remains
    r = tanaka_check(p, -span - 0.01, 0.01, correction=None)
    assert r.lhs == 0.0
    assert r.residual == pytest.approx(-2 * p.delta * (p.values[-1] - p.values[0]), abs=1e-10)


def test_tanaka_terms_and_options():
    p = generate_brownian(SimConfig(1.0, 20_000, 8, 1), 0)
    a = tanaka_check(p, 0.0, 0.005)
    assert set(a.terms) == {"terminal", "drift", "martingale"}
    assert a.rhs == pytest.approx(sum(a.terms.values()))
    b = tanaka_check(p, 0.0, 0.005, include_origin_term=True)
    assert "origin" in b.terms
    m = tanaka_check(p, 0.0, 0.005, scheme="milstein")
    assert m.lhs == a.lhs
    with pytest.raises(ValueError):
        tanaka_check(p, 0.0, 0.005, scheme="rk4")


def test_tanaka_residual_small():
    p = generate_brownian(SimConfig(1.0, 200_000, 12, 1), 0)
    for a in (0.0, 0.1, -0.1):
        r = tanaka_check(p, a, 0.05 / 8)
        assert abs(r.residual) <= 0.05 * max(abs(r.lhs), 0.05)


def test_inner_counts_match_bruteforce(small_paths):
    for p in small_paths:
        for h in (0.05, 0.2):
            pos, neg = kernel_counts(p, h)
            bp, bn = brute_inner_counts(p, h)
            assert np.array_equal(pos, bp) and np.array_equal(neg, bn)
            assert np.allclose(inner_integral(p, h), (bp - bn) * p.delta, rtol=0, atol=0)
            assert np.array_equal(inner_integral(p, h, negate_kernel=True), -inner_integral(p, h))


def test_martingale_series(small_paths):
    p = small_paths[15]
    s = martingale_path(p, 0.05)
    assert s.M_values[0] == s.bracket_MW[0] == s.bracket_MM[0] == 0.0
    assert inner_integral(p, 0.05)[0] == 0.0
    assert s.times.size == s.M_values.size == s.bracket_MM.size == p.n + 1
    assert np.all(np.diff(s.bracket_MM) >= 0)
    assert s.at_end() == (s.M_values[-1], s.bracket_MW[-1], s.bracket_MM[-1])
    assert s.at_time(0.5) == (s.M_values[1000], s.bracket_MW[1000], s.bracket_MM[1000])


def test_bracket_equals_triple_plus_diagonal(small_paths):
    for p in small_paths:
        h = 0.08
        pos, neg = kernel_counts(p, h)
        diag = p.delta**3 * (pos + neg).sum() / h**3
        assert martingale_path(p, h).bracket_MM[-1] == pytest.approx(2 * triple_kernel_integral(p, h) + diag, rel=1e-12)


def test_martingale_property():
    h = 0.1
    cfg = SimConfig(1.0, 2000, 19, 10_000)
    m = np.empty(cfg.replica_count)
    mm = np.empty(cfg.replica_count)
    for i in range(cfg.replica_count):
        s = martingale_path(generate_brownian(cfg, i), h)
        m[i], _, mm[i] = s.at_end()
    assert abs(m.mean()) <= 3 * m.std(ddof=1) / math.sqrt(m.size)
    assert abs(np.mean(m**2) / mm.mean() - 1) <= 0.10
    # exact bracket expectation, up to the grid error of C(s)
    se = mm.std(ddof=1) / math.sqrt(mm.size)
    assert abs(mm.mean() - expected_bracket_mm(h)) <= 3 * se + 0.01


def test_exact_bracket_tends_to_limit():
    r = {h: expected_bracket_mm(h) / mean_alpha2(0.0) / (8 / 3) for h in (0.05, 0.025)}
    assert r[0.05] < r[0.025] < 1.0
    # the deficit is linear in h; Richardson extrapolation to h = 0
    assert abs(2 * r[0.025] - r[0.05] - 1) <= 0.01


def test_decomposition_at_large_h():
    p = generate_brownian(SimConfig(1.0, 20_000, 3, 1), 0)
    span = float(p.values.max() - p.values.min())
    h = span + 0.1
    r = decomposition_check(p, h, h / 8)
    assert abs(r.residual) <= 0.05 * abs(r.lhs)
    assert abs(r.j_end) <= r.j_bound
    with pytest.raises(ValueError):
        decomposition_check(p, 0.05, 0.05)
    with pytest.raises(ValueError):
        decomposition_check(p, 0.05, 0.01, scheme="other")


def test_decomposition_detects_flipped_kernel():
    p = generate_brownian(SimConfig(1.0, 200_000, 14, 1), 0)
    good = decomposition_check(p, 0.05, 0.05 / 8)
    bad = decomposition_check(p, 0.05, 0.05 / 8, negate_kernel=True)
    assert abs(good.residual) <= 0.05 * abs(good.lhs)
    assert abs(bad.residual) > 0.05 * abs(bad.lhs)


def test_bracket_mw_scaling_api(tmp_path):
    paths = [generate_brownian(SimConfig(1.0, 2000, 2, 5), i) for i in range(5)]
    with pytest.raises(ValueError):
        bracket_mw_scaling(paths, [0.1])
    with pytest.raises(ValueError):
        bracket_mw_scaling(paths, [0.05, 0.1])
    span = max(float(p.values.max() - p.values.min()) for p in paths)
    rows, fit = bracket_mw_scaling(paths, [4 * span, 2 * span, 0.1], rng=np.random.default_rng(0), n_boot=20)
    assert all(math.isfinite(r["mean"]) for r in rows)
    assert math.isfinite(fit["rms_slope_stderr"])
    out = write_scaling_csv(rows, tmp_path / "s.csv")
    assert next(csv.reader(out.open(encoding="utf-8"))) == ["h", "mean", "stderr", "count"]


def test_loglog_slope():
    h = np.array([0.08, 0.04, 0.02])
    assert loglog_slope(h, 3 * h**0.5) == pytest.approx(0.5)


def test_series_csv(tmp_path):
    p = SamplePath(np.array([0.0, 0.1, -0.05, 0.2]), 1 / 3)
    out = martingale_path(p, 0.2).to_csv(tmp_path / "m.csv")
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "time,M,bracket_MW,bracket_MM" and len(lines) == 5
