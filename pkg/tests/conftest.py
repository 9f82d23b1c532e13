"""Shared fixtures and brute-force oracles.

The oracles evaluate the counting definitions literally with dense pair
matrices, using the same floating point expression ``(w_s - w_r) - x`` as
the indexed code, so integer counts can be compared exactly.
"""

import numpy as np
import pytest

from localtime_lab.localtime import local_time_binned
from localtime_lab.paths import SimConfig, generate_brownian


def _lower_pairs(w, x):
    # d[r, s] = (w[s] - w[r]) - x for r < s, masked elsewhere
    d = (w[None, :] - w[:, None]) - x
    mask = np.triu(np.ones((w.size, w.size), dtype=bool), k=1)
    return d, mask


def brute_alpha2_count(path, x, eps):
    w = np.asarray(path.values[:-1])
    d, mask = _lower_pairs(w, x)
    return int(np.sum(mask & (d >= -eps) & (d < eps)))


def brute_alpha3_count(path, x, y, eps):
    """``#{r' < r < s}`` with both windows hit, factored through the middle index ``r``."""
    w = np.asarray(path.values[:-1])
    d1, mask = _lower_pairs(w, x)
    d2, _ = _lower_pairs(w, y)
    a = mask & (d1 >= -eps) & (d1 < eps)  # a[r', r]
    b = mask & (d2 >= -eps) & (d2 < eps)  # b[r, s]
    return int(np.dot(a.sum(axis=0), b.sum(axis=1)))


def literal_alpha3_count(path, x, y, eps):
    w = list(path.values[:-1])
    n = len(w)
    c = 0
    for s in range(n):
        for r in range(s):
            d2 = (w[s] - w[r]) - y
            if not -eps <= d2 < eps:
                continue
            for rp in range(r):
                d1 = (w[r] - w[rp]) - x
                if -eps <= d1 < eps:
                    c += 1
    return c


def brute_inner_counts(path, h):
    """``(pos, neg)`` with ``pos[s] = #{r<s : 0 < W_s-W_r <= h}``, ``neg[s] = #{r<s : -h < W_s-W_r <= 0}``."""
    w = np.asarray(path.values[:-1])
    d, mask = _lower_pairs(w, 0.0)
    pos = (mask & (d > 0) & (d <= h)).sum(axis=0)
    neg = (mask & (d > -h) & (d <= 0)).sum(axis=0)
    return pos, neg


@pytest.fixture(scope="session")
def small_paths():
    """Ten paths each of n = 300 and n = 2000."""
    out = []
    for n in (300, 2000):
        cfg = SimConfig(1.0, n, 11, 10)
        out.extend(generate_brownian(cfg, i) for i in range(10))
    return out


@pytest.fixture(scope="session")
def medium_path():
    return generate_brownian(SimConfig(1.0, 100_000, 5, 1), 0)


@pytest.fixture(scope="session")
def occupation_sample():
    """``L^0_1`` (bins of 0.01) and ``int L^2`` (bins of 0.005) over 10^4 paths of n = 10^5."""
    cfg = SimConfig(1.0, 100_000, 77, 10_000)
    l0 = np.empty(cfg.replica_count)
    sq = np.empty(cfg.replica_count)
    for i in range(cfg.replica_count):
        p = generate_brownian(cfg, i)
        f = local_time_binned(p, 0.01)
        l0[i] = f.values[int(round(-f.x_origin / f.bin_width))]  # bin [0, 0.01)
        sq[i] = local_time_binned(p, 0.005).square_integral()
    return l0, sq


# acceptance results: (criterion, part, ok, detail), printed after the run
ACCEPTANCE = []


def record(criterion, part, ok, detail):
    ACCEPTANCE.append((criterion, part, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion} [{part}]: {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted({r[0] for r in ACCEPTANCE}):
        parts = [r for r in ACCEPTANCE if r[0] == c]
        ok = all(r[2] for r in parts)
        detail = "; ".join(f"{r[1]} {'ok' if r[2] else 'FAILED'} ({r[3]})" for r in parts)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {c}: {detail}")
