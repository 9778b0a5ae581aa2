"""Decibel conversions and the analytic path-loss law.

All power arithmetic elsewhere in the package happens on linear scale;
decibels only appear when reading or writing files and CLI flags.
"""

import numpy as np


def db_to_linear(value_db):
    """Power ratio for a value in dB: ``10**(v/10)``. Works on scalars and arrays."""
    v = np.asarray(value_db, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("dB value must be finite")
    out = np.power(10.0, v / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(power):
    """``10*log10(p)`` for strictly positive power ratios."""
    p = np.asarray(power, dtype=float)
    if np.any(~(p > 0)) or not np.all(np.isfinite(p)):
        raise ValueError("linear power must be finite and > 0 to convert to dB")
    out = 10.0 * np.log10(p)
    return float(out) if out.ndim == 0 else out


def analytic_pathloss(distance, alpha):
    """Bounded power-law attenuation ``min(1, s**-alpha)``.

    ``s = 0`` maps to 1, so the base-station tile is well defined.
    """
    if not alpha > 0:
        raise ValueError(f"path-loss exponent must be > 0, got {alpha}")
    s = np.asarray(distance, dtype=float)
    if np.any(s < 0):
        raise ValueError("distance must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.where(s <= 1.0, 1.0, np.power(np.maximum(s, 1.0), -alpha))
    return float(out) if out.ndim == 0 else out
