"""Uplink signal-to-total-interference connectivity for one configuration.

A user on tile ``t`` is disconnected when ``ell[t] < tau_lam * total`` where
``total`` sums the path loss of every user, the user itself included. All
users on a tile share ``ell[t]``, so the test runs once per tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pathloss import db_to_linear
from .sampler import UserSample
from .scenario import Scenario


@dataclass(frozen=True)
class ThresholdSpec:
    """Density-rescaled SIR threshold: ``lam * tau_lam = tau``."""

    tau_db: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"density must be > 0, got {self.lam}")

    @property
    def tau_linear(self):
        return db_to_linear(self.tau_db)

    @property
    def tau_lambda_linear(self):
        return self.tau_linear / self.lam

    @property
    def tau_lambda_db(self):
        return self.tau_db - 10.0 * math.log10(self.lam)


def threshold_lambda(tau_db, lam):
    """``(tau_lam_db, tau_lam_linear)`` for a threshold ``tau_db`` at density ``lam``."""
    thr = ThresholdSpec(tau_db, lam)
    return thr.tau_lambda_db, thr.tau_lambda_linear


@dataclass(frozen=True)
class CellOutcome:
    total_users: int
    disconnected_users: int
    L_value: float
    connected_fraction: float
    replicate_index: int
    total_received: float


def _check(sample: UserSample, scenario: Scenario):
    if sample.counts.shape != scenario.geometry.shape:
        raise ValueError(
            f"sample shape {sample.counts.shape} does not match scenario {scenario.geometry.shape}"
        )


def free_counts(sample: UserSample, scenario: Scenario):
    _check(sample, scenario)
    return sample.counts.ravel()[scenario.free_index]


def received_and_disconnected(counts, ell, tau_lambda_linear):
    """Core kernel on aligned free-tile vectors: ``(total_received, disconnected)``."""
    occupied = np.flatnonzero(counts)
    if occupied.size == 0:
        return 0.0, 0
    c = counts[occupied]
    e = ell[occupied]
    total = float(np.sum(c * e))
    disconnected = int(c[e < tau_lambda_linear * total].sum())
    return total, disconnected


def total_received(sample: UserSample, scenario: Scenario) -> float:
    counts = free_counts(sample, scenario)
    return received_and_disconnected(counts, scenario.free_pathloss, 0.0)[0]


def disconnected_count(sample: UserSample, scenario: Scenario, thr: ThresholdSpec) -> int:
    counts = free_counts(sample, scenario)
    return received_and_disconnected(counts, scenario.free_pathloss, thr.tau_lambda_linear)[1]


def make_outcome(total_users, disconnected, lam, replicate_index=0, received=0.0):
    frac = 1.0 if total_users == 0 else 1.0 - disconnected / total_users
    return CellOutcome(
        int(total_users), int(disconnected), disconnected / lam, frac, int(replicate_index), float(received)
    )


def evaluate_outcome(sample: UserSample, scenario: Scenario, thr: ThresholdSpec) -> CellOutcome:
    counts = free_counts(sample, scenario)
    received, disconnected = received_and_disconnected(
        counts, scenario.free_pathloss, thr.tau_lambda_linear
    )
    return make_outcome(int(counts.sum()), disconnected, thr.lam, sample.replicate_index, received)


def limit_disconnected_mass(scenario: Scenario, tau_db) -> float:
    """Deterministic high-density limit of ``L_lam[SIR]``.

    Replaces the empirical measure by the intensity: the mass of tiles with
    ``ell[t] < tau * sum_s ell[s] mu_d(s)``.
    """
    tau = db_to_linear(tau_db)
    ell, mass = scenario.free_pathloss, scenario.free_mass
    interference = float(np.sum(ell * mass))
    return float(mass[ell < tau * interference].sum())
