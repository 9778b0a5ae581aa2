"""Empirical rate functions and closed-form large-deviations oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sampler import AUX, SeedSpec, derive_stream


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    p_hat: float
    std_err: float = 0.0
    n: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_hat <= 1.0:
            raise ValueError(f"p_hat must lie in [0, 1], got {self.p_hat}")


@dataclass(frozen=True)
class RateFit:
    """Least-squares line ``log p = p1 * lam + p2``."""

    p1: float
    p2: float
    residual_norm: float
    points_used: int
    r_squared: float
    excluded: tuple = field(default=())  # densities dropped for zero hits

    @property
    def rate_estimate(self):
        return -self.p1

    def predict(self, lam):
        return self.p1 * np.asarray(lam, dtype=float) + self.p2

    def curve(self, lam):
        """Induced rate curve ``-log p / lam ~ -p1 - p2 / lam``."""
        return -self.p1 - self.p2 / np.asarray(lam, dtype=float)


def fit_rate_linear(points, weighted=False) -> RateFit:
    """OLS of natural-log ``p_hat`` against density.

    Points with ``p_hat == 0`` are excluded and listed in ``RateFit.excluded``.
    ``weighted=True`` weights each point by ``(p_hat / std_err)**2``, the
    delta-method inverse variance of ``log p_hat``.
    """
    used = [pt for pt in points if pt.p_hat > 0]
    excluded = tuple(pt.lam for pt in points if pt.p_hat <= 0)
    if len(used) < 2:
        raise ValueError(f"need at least 2 points with p_hat > 0, got {len(used)}")
    x = np.array([pt.lam for pt in used], dtype=float)
    y = np.log([pt.p_hat for pt in used])
    if np.ptp(x) == 0:
        raise ValueError("all usable points share the same density")
    w = np.ones_like(x)
    if weighted:
        se = np.array([pt.std_err for pt in used], dtype=float)
        if np.any(se <= 0):
            raise ValueError("weighted fit needs positive standard errors")
        w = (np.array([pt.p_hat for pt in used]) / se) ** 2
    sw = np.sqrt(w)
    A = np.column_stack([x, np.ones_like(x)]) * sw[:, None]
    (p1, p2), *_ = np.linalg.lstsq(A, y * sw, rcond=None)
    resid = y - (p1 * x + p2)
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(p1), float(p2), float(np.sqrt(np.sum(resid**2))), len(used), r2, excluded)


def rate_curve(points, fit: RateFit | None = None):
    """Transformed points ``(lam, -log p / lam)`` and the fitted curve at the same densities."""
    usable = [pt for pt in points if pt.p_hat > 0 and pt.lam > 0]
    if fit is None:
        fit = fit_rate_linear(points)
    transformed = [(pt.lam, -math.log(pt.p_hat) / pt.lam) for pt in usable]
    fitted = [(pt.lam, float(fit.curve(pt.lam))) for pt in usable]
    return transformed, fitted


FIT_COLUMNS = ("lambda", "n", "hits", "p_hat", "std_err", "log_p", "fitted", "residual", "rate_point", "rate_curve")


def fit_rows(points, fit: RateFit):
    """CSV rows for a sweep; zero-hit points get empty log/fit cells."""
    rows = []
    for pt in points:
        hits = int(round(pt.p_hat * pt.n)) if pt.n else ""
        fitted = float(fit.predict(pt.lam))
        if pt.p_hat > 0:
            log_p = math.log(pt.p_hat)
            rows.append((pt.lam, pt.n, hits, pt.p_hat, pt.std_err, log_p, fitted, log_p - fitted,
                         -log_p / pt.lam, float(fit.curve(pt.lam))))
        else:
            rows.append((pt.lam, pt.n, hits, pt.p_hat, pt.std_err, "", fitted, "", "", float(fit.curve(pt.lam))))
    return rows


# ---------------------------------------------------------------- analytic rates


def gaussian_rate(s, m, sigma):
    """``(s - m)**2 / (2 sigma**2)``."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    s = np.asarray(s, dtype=float)
    out = (s - m) ** 2 / (2.0 * sigma**2)
    return float(out) if out.ndim == 0 else out


def exponential_rate(s, m):
    """``s/m - 1 - log(s/m)`` for the mean of iid exponentials with mean ``m``."""
    s = np.asarray(s, dtype=float)
    if not m > 0 or np.any(s <= 0):
        raise ValueError("exponential rate needs s > 0 and m > 0")
    r = s / m
    out = r - 1.0 - np.log(r)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- relative entropy


@dataclass(frozen=True)
class DiscreteMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("measure weights must be finite and nonnegative")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self):
        return float(self.weights.sum())


def relative_entropy(nu, mu) -> float:
    """Relative entropy of unnormalized measures.

    ``sum_t nu_t log(nu_t/mu_t) - nu_t + mu_t`` with ``0 log 0 = 0``; ``inf``
    when ``nu`` charges a ``mu``-null tile. Reduces to the KL divergence
    when both measures have the same total mass.
    """
    nu = nu if isinstance(nu, DiscreteMeasure) else DiscreteMeasure(nu)
    mu = mu if isinstance(mu, DiscreteMeasure) else DiscreteMeasure(mu)
    a, b = nu.weights, mu.weights
    if a.shape != b.shape:
        raise ValueError(f"measures are not aligned: {a.shape} vs {b.shape}")
    if np.any((a > 0) & (b == 0)):
        return math.inf
    pos = a > 0
    log_term = float(np.sum(a[pos] * (np.log(a[pos]) - np.log(b[pos]))))
    return log_term - float(a.sum()) + float(b.sum())


# ---------------------------------------------------------------- iid oracle


@dataclass(frozen=True)
class Exponential:
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("exponential mean must be > 0")

    def rate(self, s):
        return exponential_rate(s, self.m)

    def sample_mean(self, rng, n, size):
        # mean of n iid Exp(m) is Gamma(shape=n, scale=m/n)
        return rng.gamma(n, self.m / n, size)

    def sample_iid(self, rng, shape):
        return rng.exponential(self.m, shape)


@dataclass(frozen=True)
class Gaussian:
    m: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def rate(self, s):
        return gaussian_rate(s, self.m, self.sigma)

    def sample_mean(self, rng, n, size):
        return rng.normal(self.m, self.sigma / math.sqrt(n), size)

    def sample_iid(self, rng, shape):
        return rng.normal(self.m, self.sigma, shape)


@dataclass(frozen=True)
class MeanTail:
    n: int
    s: float
    hits: int
    reps: int

    @property
    def p_hat(self):
        return self.hits / self.reps

    @property
    def std_err(self):
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.reps)

    def as_point(self):
        return SweepPoint(float(self.n), self.p_hat, self.std_err, self.reps)


_CHUNK = 1 << 20


def _count_hits(dist, n, s, reps, seed, batch, method):
    rng = derive_stream(SeedSpec(seed, batch), AUX)
    hits = 0
    left = reps
    if method == "exact":
        while left:
            k = min(left, _CHUNK)
            hits += int(np.count_nonzero(dist.sample_mean(rng, n, k) >= s))
            left -= k
    elif method == "iid":
        rows = max(1, _CHUNK // n)
        while left:
            k = min(left, rows)
            hits += int(np.count_nonzero(dist.sample_iid(rng, (k, n)).mean(axis=1) >= s))
            left -= k
    else:
        raise ValueError(f"unknown method {method!r}")
    return hits


def iid_mean_tail(dist, n, s, reps, seed=0, method="exact") -> MeanTail:
    """Monte Carlo estimate of ``P(S_n >= s)`` for the mean of ``n`` iid draws.

    ``method="iid"`` averages ``n`` explicit draws per replicate;
    ``method="exact"`` samples ``S_n`` from its closed-form law, which is the
    same distribution at a fraction of the cost.
    """
    if n < 1 or reps < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    return MeanTail(int(n), float(s), _count_hits(dist, int(n), s, int(reps), seed, 0, method), int(reps))


def iid_mean_tail_adaptive(dist, n, s, seed=0, target_rel_err=0.1, batch=100_000, max_reps=10**8, method="exact"):
    """Add batches of replicates until ``std_err < target_rel_err * p_hat`` or the budget runs out.

    Batch ``k`` draws from its own stream, so the result is a pure function of
    the arguments.
    """
    hits = reps = k = 0
    while reps < max_reps:
        size = min(batch, max_reps - reps)
        hits += _count_hits(dist, int(n), s, size, seed, k, method)
        reps += size
        k += 1
        est = MeanTail(int(n), float(s), hits, reps)
        if hits > 0 and est.std_err < target_rel_err * est.p_hat:
            break
        # grow geometrically once we know roughly how rare the event is
        if hits > 0:
            need = (1 - est.p_hat) / (est.p_hat * target_rel_err**2)
            batch = int(min(max(batch, need - reps), 16 * batch)) + 1
        else:
            batch *= 4
    return MeanTail(int(n), float(s), hits, reps)


def oracle_sweep(dist, ns, s, *, reps=None, seed=0, target_rel_err=0.1, max_reps=10**8, method="exact"):
    """Tail estimates over a list of sample sizes plus the fitted rate.

    Each ``n`` draws from its own derived seed, so points are independent.
    Returns ``(tails, fit_or_None)``.
    """
    tails = []
    for i, n in enumerate(ns):
        sub = _sub_seed(seed, i)
        if reps is None:
            tails.append(iid_mean_tail_adaptive(dist, n, s, sub, target_rel_err, max_reps=max_reps, method=method))
        else:
            tails.append(iid_mean_tail(dist, n, s, reps, sub, method))
    points = [t.as_point() for t in tails]
    try:
        fit = fit_rate_linear(points)
    except ValueError:
        fit = None
    return tails, fit


def _sub_seed(seed, i):
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=(1 << 21, int(i)))
    return int(ss.generate_state(1, np.uint64)[0])
