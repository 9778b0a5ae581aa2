"""Plain Monte Carlo campaigns for atypical disconnection events.

A campaign at one density has two phases that never share randomness:

* mean phase, replicates ``[0, n_mean)``: estimates ``E[L]`` and fixes
  ``b = (1 + eps) * E[L]``;
* tail phase, replicates ``[n_mean, n_mean + n_tail)``: counts ``L > b``,
  accumulates the conditional heat map and tracks extreme configurations.

Replicates run in fixed-size blocks. Blocks may execute on any number of
threads; merging is in block order and uses integer sums, so results are
bit-identical for any ``threads`` value.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .sampler import COUNTS, SeedSpec, derive_stream, sample_free_counts
from .scenario import GridGeometry, Scenario
from .sir import ThresholdSpec, received_and_disconnected

BLOCK_SIZE = 256
WILSON_BELOW = 30


@dataclass(frozen=True)
class CampaignConfig:
    lam: float
    tau_db: float
    eps: float = 0.01
    n_mean: int = 10_000
    n_tail: int = 1000
    master_seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"density must be > 0, got {self.lam}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.n_mean < 1 or self.n_tail < 1:
            raise ValueError("n_mean and n_tail must be >= 1")

    @property
    def threshold(self):
        return ThresholdSpec(self.tau_db, self.lam)

    @property
    def tail_range(self):
        return range(self.n_mean, self.n_mean + self.n_tail)


def run_count_heuristic(lam) -> int:
    """``1000 * e**lam`` rounded half-up to an integer."""
    if lam < 0:
        raise ValueError("density must be >= 0")
    return int(math.floor(1000.0 * math.exp(lam) + 0.5))


def pick_b(mean, eps):
    if mean < 0 or not eps > 0:
        raise ValueError("need mean >= 0 and eps > 0")
    return mean * (1.0 + eps)


def wilson_interval(hits, n, z=1.959963984540054):
    if n <= 0:
        return (0.0, 1.0)
    p = hits / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return (lo, hi)


@dataclass(frozen=True)
class TailEstimate:
    b: float
    hits: int
    n: int

    @property
    def p_hat(self):
        return self.hits / self.n

    @property
    def std_err(self):
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.n)

    @property
    def observed(self):
        """False flags 'tail not observed' (zero hits)."""
        return self.hits > 0

    @property
    def wilson(self):
        return wilson_interval(self.hits, self.n)

    @property
    def needs_wilson(self):
        return self.hits < WILSON_BELOW


@dataclass
class HeatMapAccumulator:
    """Per-tile user counts summed over atypical replicates only."""

    geometry: GridGeometry
    lam: float
    mass: np.ndarray  # mu_d per tile, full grid
    sum_counts: np.ndarray  # int64, full grid
    sum_sq_counts: np.ndarray
    n_atypical: int = 0
    atypical_users: int = 0

    @classmethod
    def empty_for(cls, scenario: Scenario, lam):
        z = np.zeros(scenario.geometry.shape, dtype=np.int64)
        return cls(scenario.geometry, lam, np.array(scenario.intensity.mass_per_tile), z, z.copy())

    @property
    def empty(self):
        return self.n_atypical == 0

    @property
    def blocked(self):
        return self.mass == 0

    @property
    def mean_counts(self):
        if self.empty:
            return None
        return self.sum_counts / self.n_atypical

    @property
    def mean_std_err(self):
        """Standard error of each tile's conditional mean count."""
        if self.n_atypical < 2:
            return None
        n = self.n_atypical
        mean = self.sum_counts / n
        var = (self.sum_sq_counts - n * mean**2) / (n - 1)
        return np.sqrt(np.maximum(var, 0.0) / n)

    @property
    def ratio(self):
        """Conditional mean over a-priori mean ``lam * mu_d``; 0 on blocked tiles."""
        if self.empty:
            return None
        out = np.zeros(self.geometry.shape)
        free = ~self.blocked
        out[free] = self.mean_counts[free] / (self.lam * self.mass[free])
        return out

    def merge(self, other: HeatMapAccumulator):
        self.sum_counts = self.sum_counts + other.sum_counts
        self.sum_sq_counts = self.sum_sq_counts + other.sum_sq_counts
        self.n_atypical += other.n_atypical
        self.atypical_users += other.atypical_users
        return self


@dataclass(frozen=True)
class ExtremeConfig:
    connected_fraction: float
    replicate_index: int
    total_users: int
    disconnected_users: int
    counts: np.ndarray = field(repr=False, compare=False)

    @property
    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.counts, dtype=np.int64).tobytes()).hexdigest()


@dataclass(frozen=True)
class ExtremeRecord:
    least: ExtremeConfig
    most: ExtremeConfig

    @property
    def spread(self):
        return self.most.connected_fraction - self.least.connected_fraction


# ---------------------------------------------------------------- block engine


@dataclass
class _Block:
    users: np.ndarray
    disconnected: np.ndarray
    received: np.ndarray
    heat_sum: np.ndarray | None = None
    heat_sq: np.ndarray | None = None
    n_atypical: int = 0
    atypical_users: int = 0
    least: tuple | None = None  # (fraction, index, free counts, disconnected)
    most: tuple | None = None


def _run_block(scenario, lam, tau_lin, master_seed, start, stop, b, track):
    n = stop - start
    users = np.zeros(n, dtype=np.int64)
    disc = np.zeros(n, dtype=np.int64)
    recv = np.zeros(n)
    ell = scenario.free_pathloss
    blk = _Block(users, disc, recv)
    if b is not None:
        blk.heat_sum = np.zeros(ell.size, dtype=np.int64)
        blk.heat_sq = np.zeros(ell.size, dtype=np.int64)
    for k, idx in enumerate(range(start, stop)):
        rng = derive_stream(SeedSpec(master_seed, idx), COUNTS)
        counts = sample_free_counts(scenario, lam, rng)
        total, d = received_and_disconnected(counts, ell, tau_lin)
        u = int(counts.sum())
        users[k], disc[k], recv[k] = u, d, total
        if b is not None and d / lam > b:
            blk.heat_sum += counts
            blk.heat_sq += counts * counts
            blk.n_atypical += 1
            blk.atypical_users += u
        if track:
            frac = 1.0 if u == 0 else 1.0 - d / u
            if blk.least is None or frac < blk.least[0]:
                blk.least = (frac, idx, counts, d)
            if blk.most is None or frac > blk.most[0]:
                blk.most = (frac, idx, counts, d)
    return blk


@dataclass
class Batch:
    """Merged result of a contiguous replicate range."""

    lam: float
    start: int
    users: np.ndarray
    disconnected: np.ndarray
    received: np.ndarray
    heatmap: HeatMapAccumulator | None = None
    extremes: ExtremeRecord | None = None

    @property
    def L_values(self):
        return self.disconnected / self.lam

    @property
    def connected_fraction(self):
        u = self.users
        return np.where(u > 0, 1.0 - self.disconnected / np.maximum(u, 1), 1.0)


def _extreme(scenario, item):
    frac, idx, free_counts, d = item
    counts = np.zeros(scenario.geometry.n_rows * scenario.geometry.n_cols, dtype=np.int64)
    counts[scenario.free_index] = free_counts
    return ExtremeConfig(frac, idx, int(free_counts.sum()), d, counts.reshape(scenario.geometry.shape))


def simulate(scenario: Scenario, lam, tau_db, master_seed, start, n, *, b=None, track=False, threads=1):
    """Run replicates ``[start, start + n)`` and merge them in index order."""
    tau_lin = ThresholdSpec(tau_db, lam).tau_lambda_linear
    bounds = [(s, min(s + BLOCK_SIZE, start + n)) for s in range(start, start + n, BLOCK_SIZE)]

    def work(se):
        return _run_block(scenario, lam, tau_lin, master_seed, se[0], se[1], b, track)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(work, bounds))
    else:
        blocks = [work(se) for se in bounds]

    batch = Batch(
        float(lam),
        start,
        np.concatenate([blk.users for blk in blocks]) if blocks else np.zeros(0, np.int64),
        np.concatenate([blk.disconnected for blk in blocks]) if blocks else np.zeros(0, np.int64),
        np.concatenate([blk.received for blk in blocks]) if blocks else np.zeros(0),
    )
    if b is not None:
        heat = HeatMapAccumulator.empty_for(scenario, lam)
        flat_sum = np.zeros(heat.sum_counts.size, dtype=np.int64)
        flat_sq = np.zeros_like(flat_sum)
        for blk in blocks:
            flat_sum[scenario.free_index] += blk.heat_sum
            flat_sq[scenario.free_index] += blk.heat_sq
            heat.n_atypical += blk.n_atypical
            heat.atypical_users += blk.atypical_users
        heat.sum_counts = flat_sum.reshape(heat.geometry.shape)
        heat.sum_sq_counts = flat_sq.reshape(heat.geometry.shape)
        batch.heatmap = heat
    if track and blocks:
        # ties resolve to the lowest replicate index: blocks are in order and
        # only strict improvements replace the incumbent
        least = most = None
        for blk in blocks:
            if least is None or blk.least[0] < least[0]:
                least = blk.least
            if most is None or blk.most[0] > most[0]:
                most = blk.most
        batch.extremes = ExtremeRecord(_extreme(scenario, least), _extreme(scenario, most))
    return batch


# ---------------------------------------------------------------- campaign ops


def _mean_and_se(values):
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def estimate_mean(scenario: Scenario, cfg: CampaignConfig, threads=1):
    """Mean of ``L`` over the mean-phase replicates, with its standard error."""
    batch = simulate(scenario, cfg.lam, cfg.tau_db, cfg.master_seed, 0, cfg.n_mean, threads=threads)
    return _mean_and_se(batch.L_values)


def estimate_tail(scenario: Scenario, cfg: CampaignConfig, b, threads=1) -> TailEstimate:
    batch = simulate(
        scenario, cfg.lam, cfg.tau_db, cfg.master_seed, cfg.n_mean, cfg.n_tail, threads=threads
    )
    return TailEstimate(float(b), int(np.count_nonzero(batch.L_values > b)), cfg.n_tail)


def conditional_heatmap(scenario: Scenario, cfg: CampaignConfig, b, threads=1) -> HeatMapAccumulator:
    batch = simulate(
        scenario, cfg.lam, cfg.tau_db, cfg.master_seed, cfg.n_mean, cfg.n_tail, b=b, threads=threads
    )
    return batch.heatmap


def track_extremes(scenario: Scenario, cfg: CampaignConfig, threads=1) -> ExtremeRecord:
    batch = simulate(
        scenario, cfg.lam, cfg.tau_db, cfg.master_seed, cfg.n_mean, cfg.n_tail, track=True, threads=threads
    )
    return batch.extremes


@dataclass
class CampaignResult:
    config: CampaignConfig
    mean: float
    mean_std_err: float
    tail: TailEstimate
    heatmap: HeatMapAccumulator | None = None
    extremes: ExtremeRecord | None = None

    @property
    def b(self):
        return self.tail.b


def run_campaign(scenario: Scenario, cfg: CampaignConfig, *, heatmap=False, extremes=False, threads=1):
    """Mean phase, then one tail pass collecting everything requested."""
    mean, se = estimate_mean(scenario, cfg, threads)
    b = pick_b(mean, cfg.eps)
    batch = simulate(
        scenario,
        cfg.lam,
        cfg.tau_db,
        cfg.master_seed,
        cfg.n_mean,
        cfg.n_tail,
        b=b if heatmap else None,
        track=extremes,
        threads=threads,
    )
    tail = TailEstimate(b, int(np.count_nonzero(batch.L_values > b)), cfg.n_tail)
    return CampaignResult(cfg, mean, se, tail, batch.heatmap, batch.extremes)


def sweep_seed(master_seed, k):
    """Master seed for the k-th density of a sweep; keeps sweep points independent."""
    ss = np.random.SeedSequence(int(master_seed) & ((1 << 64) - 1), spawn_key=(1 << 20, int(k)))
    return int(ss.generate_state(1, np.uint64)[0])


def run_sweep(scenario, lams, tau_db, eps, *, n_mean=10_000, n_tail=None, master_seed=0, threads=1):
    """One campaign per density. ``n_tail=None`` uses :func:`run_count_heuristic`."""
    results = []
    for k, lam in enumerate(lams):
        n = run_count_heuristic(lam) if n_tail is None else n_tail
        cfg = CampaignConfig(lam, tau_db, eps, n_mean, n, sweep_seed(master_seed, k))
        results.append(run_campaign(scenario, cfg, threads=threads))
    return results


CAMPAIGN_COLUMNS = (
    "lambda",
    "tau_db",
    "eps",
    "b",
    "n",
    "hits",
    "p_hat",
    "std_err",
    "mean_L",
    "mean_std_err",
    "n_mean",
    "wilson_low",
    "wilson_high",
    "tau_lambda_db",
    "master_seed",
)


def campaign_row(result: CampaignResult):
    cfg, t = result.config, result.tail
    lo, hi = t.wilson
    return (
        cfg.lam,
        cfg.tau_db,
        cfg.eps,
        t.b,
        t.n,
        t.hits,
        t.p_hat,
        t.std_err,
        result.mean,
        result.mean_std_err,
        cfg.n_mean,
        lo,
        hi,
        cfg.threshold.tau_lambda_db,
        cfg.master_seed,
    )
