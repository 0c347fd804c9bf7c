"""Per-echo moment retracker used to initialise the iterative estimators."""
from __future__ import annotations

import numpy as np

from .core import InstrumentConfig, ParamTrack, block_bounds, variance_floor

# 25%-75% rise of a Gaussian CDF spans 2 * 0.6745 standard deviations
_RISE_25_75 = 2.0 * 0.6744897501960817
NOISE_GATES = 10


def _crossing(z, level, start):
    """Fractional index of the first upward crossing of ``level`` after ``start``."""
    above = np.nonzero(z[start:] >= level)[0]
    if above.size == 0:
        return float(len(z) - 1)
    k = start + above[0]
    if k == 0 or z[k] == z[k - 1]:
        return float(k)
    return (k - 1) + (level - z[k - 1]) / (z[k] - z[k - 1])


def moment_retrack(echoes, cfg: InstrumentConfig):
    """Rough (swh, tau, pu, mu) for every echo.

    mu is the median of the first ``NOISE_GATES`` gates, tau the 50%
    threshold crossing of the leading edge, pu the median of the first
    trailing-edge gates corrected for the exp(-alpha t) decay, and swh
    follows from the 25%-75% leading-edge width.
    """
    y = np.atleast_2d(np.asarray(echoes, dtype=float))
    M, K = y.shape
    T = cfg.gate_duration
    a = cfg.brown_alpha
    out = np.empty((M, 4))
    for m in range(M):
        mu = np.median(y[m, :NOISE_GATES])
        z = y[m] - mu
        zs = np.convolve(z, np.ones(3) / 3.0, mode="same")
        peak = int(np.argmax(zs))
        amp = np.median(z[peak:min(K, peak + 10)])
        if not amp > 0:
            out[m] = (1.0, K / 4.0, 0.0, mu)
            continue
        low = np.nonzero(zs[: peak + 1] < 0.05 * amp)[0]
        start = int(low[-1]) if low.size else 0
        k50 = _crossing(zs, 0.5 * amp, start)
        tau = k50 + 1.0  # gate k (1-based) sits at index k - 1
        lo = int(min(K - 1, np.ceil(tau + 2)))
        hi = int(min(K, lo + 30))
        t = (np.arange(lo, hi) + 1.0 - tau) * T
        pu = np.median(z[lo:hi] * np.exp(a * t)) if hi > lo else amp
        tau = _crossing(zs, 0.5 * pu, start) + 1.0
        k25 = _crossing(zs, 0.25 * pu, start)
        k75 = _crossing(zs, 0.75 * pu, int(k25))
        # the 3-tap smoother adds 2/3 gate^2 to the edge variance
        var_c = (max(k75 - k25, 0.0) / _RISE_25_75) ** 2 * T * T - (2.0 / 3.0) * T * T
        swh = 2.0 * cfg.speed_of_light * np.sqrt(max(var_c - cfg.brown_sigma_p ** 2, 0.0))
        out[m] = (np.clip(swh, 0.1, 20.0), np.clip(tau, 0.0, float(K)), max(pu, 0.0), mu)
    return out


def initial_state(seq, cfg: InstrumentConfig, model):
    """Moment-retracker track, thermal means and block residual variances."""
    est = moment_retrack(seq.echoes, cfg)
    theta = ParamTrack(est[:, 0], est[:, 1], est[:, 2])
    mu = est[:, 3]
    resid = seq.echoes - model(theta.swh, theta.tau, theta.pu) - mu[:, None]
    floor = variance_floor(seq.echoes)
    lam = np.stack([np.mean(resid[lo:hi] ** 2, axis=0) for lo, hi in
                    block_bounds(seq.M, seq.block_size, seq.pad)], axis=1)
    return theta, mu, np.maximum(lam, floor)
