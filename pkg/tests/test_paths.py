import json

import numpy as np
import pytest
from scipy import stats

from localtime_lab.paths import (
    STREAM_ETA,
    STREAM_PATH,
    SamplePath,
    SimConfig,
    WalkPath,
    generate_brownian,
    generate_walk,
    replica_rng,
    walk_from_steps,
)


def test_path_shape_and_origin():
    cfg = SimConfig(2.0, 500, 3, 4)
    p = generate_brownian(cfg, 2)
    assert p.values.shape == (501,)
    assert p.values[0] == 0.0
    assert p.delta == pytest.approx(2.0 / 500)
    assert p.horizon == 2.0
    assert p.seed_info == (3, 2)
    assert not p.values.flags.writeable


def test_determinism_and_replica_independence():
    cfg = SimConfig(1.0, 1000, 42, 3)
    a, b = generate_brownian(cfg, 1), generate_brownian(cfg, 1)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, generate_brownian(cfg, 2).values)
    # replica order does not matter
    other = SimConfig(1.0, 1000, 42, 10)
    assert np.array_equal(generate_brownian(other, 1).values, a.values)


def test_streams_differ():
    x = replica_rng(1, 0, STREAM_PATH).standard_normal(8)
    y = replica_rng(1, 0, STREAM_ETA).standard_normal(8)
    assert not np.allclose(x, y)


@pytest.mark.parametrize(
    "kwargs",
    [dict(horizon=0.0), dict(steps=0), dict(steps=2.5), dict(replica_count=0), dict(master_seed=-1), dict(master_seed=2**64)],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_replica_out_of_range():
    with pytest.raises(ValueError):
        generate_brownian(SimConfig(1.0, 10, 0, 2), 2)


def test_coarsen_and_negate():
    p = generate_brownian(SimConfig(1.0, 400, 9, 1), 0)
    q = p.coarsen(4)
    assert q.n == 100 and q.delta == pytest.approx(p.delta * 4) and q.horizon == p.horizon
    assert np.array_equal(q.values, p.values[::4])
    with pytest.raises(ValueError):
        p.coarsen(3)
    assert np.array_equal(p.negated().values, -p.values)


def test_left_ranks_roundtrip():
    p = generate_brownian(SimConfig(1.0, 300, 1, 1), 0)
    uniq, ranks = p.left_ranks
    assert np.array_equal(uniq[ranks], p.values[:-1])
    assert np.all(np.diff(uniq) > 0)


def test_csv_export(tmp_path):
    p = generate_brownian(SimConfig(1.0, 10, 7, 1), 0)
    out = p.to_csv(tmp_path / "p.csv")
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "i,time,w" and len(lines) == 12
    assert float(lines[-1].split(",")[2]) == p.values[-1]
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["master_seed"] == 7 and meta["steps"] == 10


def test_bad_sample_path():
    with pytest.raises(ValueError):
        SamplePath(np.zeros((2, 2)), 0.1)


def test_gaussian_marginal():
    # W_i / sqrt(i D) over 10^4 replicas is standard normal
    cfg = SimConfig(1.0, 20, 123, 10_000)
    w = np.array([generate_brownian(cfg, r).values[[5, 20]] for r in range(cfg.replica_count)])
    for j, i in enumerate((5, 20)):
        z = w[:, j] / np.sqrt(i * cfg.delta)
        assert stats.kstest(z, "norm").pvalue > 0.01


def test_cross_replica_correlation():
    cfg = SimConfig(1.0, 50, 8, 2000)
    end = np.array([generate_brownian(cfg, r).values[-1] for r in range(cfg.replica_count)])
    corr = np.corrcoef(end[0::2], end[1::2])[0, 1]
    assert abs(corr) <= 3 / np.sqrt(cfg.replica_count)


def test_walks():
    assert np.array_equal(generate_walk(0, 1).positions, [0])
    w = generate_walk(500, 3)
    assert set(np.diff(w.positions)) <= {-1, 1}
    assert np.array_equal(walk_from_steps([1, -1, -1]).positions, [0, 1, 0, -1])
    with pytest.raises(ValueError):
        WalkPath([0, 2])
    with pytest.raises(ValueError):
        WalkPath([1, 0])


def test_walk_mean_zero():
    ends = np.array([generate_walk(100, s).positions[-1] for s in range(10_000)])
    assert abs(ends.mean()) <= 3 * ends.std(ddof=1) / np.sqrt(ends.size)
