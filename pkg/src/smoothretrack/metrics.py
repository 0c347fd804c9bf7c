"""Evaluation criteria for retracked parameter tracks."""
from __future__ import annotations

import numpy as np
from scipy import signal

from .core import block_bounds, variance_floor

__all__ = ["bias", "std_vs_truth", "std_20hz", "enl", "enl_flags", "psd"]


def _pair(est, truth):
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    return est, truth


def bias(est, truth) -> float:
    """Mean error, mean(est - truth)."""
    est, truth = _pair(est, truth)
    return float(np.mean(est - truth))


def std_vs_truth(est, truth) -> float:
    """Root-mean-square error about the truth.

    This is *not* the centred standard deviation: a constant offset of 1
    gives 1, not 0.
    """
    est, truth = _pair(est, truth)
    return float(np.sqrt(np.mean((est - truth) ** 2)))


def std_20hz(est, block: int = 20) -> float:
    """RMS deviation from the mean of each run of ``block`` successive values.

    Used when no truth is available.  A trailing partial run is compared
    with its own mean.
    """
    est = np.asarray(est, dtype=float)
    if est.size < block:
        raise ValueError(f"need at least {block} values")
    ref = np.empty_like(est)
    for lo, hi in block_bounds(est.size, block, pad=True):
        ref[lo:hi] = est[lo:hi].mean()
    return std_vs_truth(est, ref)


def _block_means(y, r, pad):
    y = np.asarray(y, dtype=float)
    return np.stack([y[lo:hi].mean(axis=0) for lo, hi in block_bounds(len(y), r, pad)], axis=1)


def enl(y, lam, r: int = 20, pad: bool = False) -> np.ndarray:
    """Effective number of looks per variance block.

    N_eff(n, k) = (block mean of y_m(k))^2 / lam[k, n], averaged over the
    K gates.  ``y`` is the M x K echo matrix (or an :class:`EchoSequence`).
    """
    if hasattr(y, "echoes"):
        r, pad, y = y.block_size, y.pad, y.echoes
    means = _block_means(y, r, pad)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != means.shape:
        raise ValueError(f"lambda shape {lam.shape} does not match blocks {means.shape}")
    return np.mean(means ** 2 / lam, axis=0)


def enl_flags(y, lam, r: int = 20, pad: bool = False) -> np.ndarray:
    """True for blocks where some variance sits at the floor.

    ENL is still finite there but the gate ratio is meaningless.
    """
    if hasattr(y, "echoes"):
        r, pad, y = y.block_size, y.pad, y.echoes
    floor = variance_floor(y)
    return np.any(np.asarray(lam) <= floor * (1 + 1e-9), axis=0)


def psd(series, spacing: float = 1.0, nperseg: int | None = None):
    """Welch power spectral density of an along-track series.

    Hann window, 50% overlap, segments of 256 samples or M/4 for shorter
    series.  ``spacing`` is the along-track sample distance (km), so the
    first column is wavenumber in cycles/km.  Returns a (n, 2) array of
    (wavenumber, power) rows with power in units^2 km.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 16:
        raise ValueError("psd needs at least 16 samples")
    if nperseg is None:
        nperseg = 256 if x.size >= 1024 else x.size // 4
    f, p = signal.welch(x, fs=1.0 / spacing, window="hann", nperseg=nperseg,
                        noverlap=nperseg // 2, detrend="constant")
    return np.column_stack([f, p])
