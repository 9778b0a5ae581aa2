"""Tile-wise Poisson sampling of user configurations.

Every replicate draws from its own counter-based stream (Philox keyed by the
master seed and the replicate index), so a sample depends only on
``(scenario, lam, SeedSpec)`` and never on how replicates are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario

# stream purposes, used as the second spawn-key word
COUNTS = 0
JITTER = 1
AUX = 2

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replicate_index: int = 0

    def __post_init__(self):
        if self.replicate_index < 0:
            raise ValueError("replicate_index must be nonnegative")


def derive_stream(seed: SeedSpec, purpose: int = COUNTS) -> np.random.Generator:
    """Independent generator for one ``(master_seed, replicate_index, purpose)``."""
    ss = np.random.SeedSequence(
        int(seed.master_seed) & _MASK64,
        spawn_key=(int(seed.replicate_index), int(purpose)),
    )
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class UserSample:
    counts: np.ndarray  # full grid, [row, col]
    lam: float
    replicate_index: int = 0

    @property
    def total_users(self):
        return int(self.counts.sum())


def sample_free_counts(scenario: Scenario, lam, rng: np.random.Generator):
    """Poisson counts on the free tiles only, in row-major order.

    numpy's Poisson sampler uses inversion below mean 10 and PTRS rejection
    above, which covers the many orders of magnitude tile means span.
    """
    if not lam >= 0:
        raise ValueError(f"density must be >= 0, got {lam}")
    return rng.poisson(lam * scenario.free_mass)


def sample_counts(scenario: Scenario, lam, seed: SeedSpec) -> UserSample:
    free = sample_free_counts(scenario, lam, derive_stream(seed, COUNTS))
    counts = np.zeros(scenario.geometry.n_rows * scenario.geometry.n_cols, dtype=np.int64)
    counts[scenario.free_index] = free
    return UserSample(counts.reshape(scenario.geometry.shape), float(lam), seed.replicate_index)


def jitter_points(sample: UserSample, scenario: Scenario, seed: SeedSpec):
    """Place each user uniformly inside its tile. Display only; never fed to SIR.

    Returns an ``(N, 2)`` array of window coordinates.
    """
    g = scenario.geometry
    rng = derive_stream(seed, JITTER)
    rows, cols = np.nonzero(sample.counts)
    reps = sample.counts[rows, cols]
    rows = np.repeat(rows, reps)
    cols = np.repeat(cols, reps)
    u = rng.random((rows.size, 2))
    x = g.origin[0] + (cols + u[:, 0]) * g.cell_width
    y = g.origin[1] + (g.n_rows - 1 - rows + u[:, 1]) * g.cell_height
    return np.column_stack([x, y])


def write_points_csv(stream, points):
    stream.write("x,y\n")
    for x, y in points:
        stream.write(f"{x!r},{y!r}\n")
