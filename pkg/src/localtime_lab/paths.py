"""Reproducible Brownian paths and simple random walks.

Randomness comes from numpy's Philox counter-based generator, keyed by a
``SeedSequence`` whose spawn key is ``(stream, replica_id)``.  A replica's
stream is therefore a pure function of ``(master_seed, replica_id)`` and no
two replicas (or the path and mixture-noise streams of one replica) ever
share generator state, whatever order they are computed in.

Gaussian increments use ``Generator.standard_normal`` (numpy's ziggurat
sampler); seeded outputs are stable for a fixed numpy release.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

STREAM_PATH = 0
STREAM_ETA = 1
STREAM_WALK = 2
STREAM_BOOTSTRAP = 3


def replica_rng(master_seed: int, replica_id: int, stream: int = STREAM_PATH) -> np.random.Generator:
    """Independent Philox generator for one (stream, replica) pair."""
    if master_seed < 0 or replica_id < 0:
        raise ValueError("seeds and replica ids must be non-negative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(replica_id)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    """Time horizon, grid size and seeding for a batch of replicas."""

    horizon: float = 1.0
    steps: int = 1000
    master_seed: int = 0
    replica_count: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if int(self.replica_count) != self.replica_count or self.replica_count < 1:
            raise ValueError(f"replica_count must be a positive integer, got {self.replica_count}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")

    @property
    def delta(self) -> float:
        return self.horizon / self.steps


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SamplePath:
    """Brownian path sampled at ``i * delta`` for ``i = 0..n``."""

    values: np.ndarray
    delta: float
    seed_info: tuple = (None, None)
    horizon: float = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("path values must be a non-empty 1-D array")
        object.__setattr__(self, "values", _readonly(values))
        if self.horizon is None:
            object.__setattr__(self, "horizon", self.delta * (values.size - 1))

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return self.horizon * np.arange(self.n + 1) / self.n if self.n else np.zeros(1)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @cached_property
    def left_ranks(self):
        """``(sorted_unique, ranks)`` of the left grid points ``W_0 .. W_{n-1}``."""
        left = self.values[:-1]
        uniq = np.unique(left)
        return uniq, np.searchsorted(uniq, left).astype(np.int64)

    def coarsen(self, factor: int) -> "SamplePath":
        """The same path observed on every ``factor``-th grid point."""
        if factor < 1 or self.n % factor:
            raise ValueError(f"factor {factor} does not divide n = {self.n}")
        return SamplePath(self.values[::factor], self.delta * factor, self.seed_info, self.horizon)

    def negated(self) -> "SamplePath":
        return SamplePath(-self.values, self.delta, self.seed_info, self.horizon)

    def metadata(self) -> dict:
        master_seed, replica_id = self.seed_info
        return {
            "horizon": self.horizon,
            "steps": self.n,
            "delta": self.delta,
            "master_seed": master_seed,
            "replica_id": replica_id,
        }

    def to_csv(self, path) -> Path:
        """Write ``i,time,w`` rows plus a ``.json`` metadata sidecar."""
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["i", "time", "w"])
            for i, (ti, wi) in enumerate(zip(self.times, self.values)):
                writer.writerow([i, repr(float(ti)), repr(float(wi))])
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2) + "\n", encoding="utf-8")
        return path


@dataclass(frozen=True)
class WalkPath:
    """Simple random walk ``S_0 = 0, S_1, ..., S_n`` on the integers."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        if pos.ndim != 1 or pos.size < 1 or pos[0] != 0:
            raise ValueError("a walk starts at 0")
        if pos.size > 1 and not np.all(np.abs(np.diff(pos)) == 1):
            raise ValueError("walk steps must be +1 or -1")
        object.__setattr__(self, "positions", _readonly(pos))

    @property
    def n(self) -> int:
        return self.positions.size - 1


def generate_brownian(config: SimConfig, replica_id: int) -> SamplePath:
    """Sample replica ``replica_id`` of standard Brownian motion on ``[0, horizon]``."""
    if not 0 <= replica_id < config.replica_count:
        raise ValueError(f"replica_id {replica_id} outside [0, {config.replica_count})")
    rng = replica_rng(config.master_seed, replica_id, STREAM_PATH)
    w = np.empty(config.steps + 1)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(config.steps) * np.sqrt(config.delta), out=w[1:])
    return SamplePath(w, config.delta, (config.master_seed, replica_id), config.horizon)


def generate_walk(steps: int, seed: int) -> WalkPath:
    """Simple symmetric random walk with ``steps`` i.i.d. +-1 increments."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = replica_rng(seed, 0, STREAM_WALK)
    pos = np.zeros(steps + 1, dtype=np.int64)
    np.cumsum(2 * rng.integers(0, 2, size=steps) - 1, out=pos[1:])
    return WalkPath(pos)


def walk_from_steps(steps) -> WalkPath:
    steps = np.asarray(steps, dtype=np.int64)
    return WalkPath(np.concatenate([[0], np.cumsum(steps)]))
