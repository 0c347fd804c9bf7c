"""Per-echo unweighted least-squares retracker.

Every echo is fitted on its own, with no coupling between neighbours, by
minimising ``|y_m - s_m(swh, tau, pu) - mu_m|^2`` with a Levenberg-Marquardt
iteration.  All echoes are iterated together as a batch of independent
4 x 4 problems, each with its own damping factor.
"""
from __future__ import annotations

import time

import numpy as np

from .core import (EchoSequence, FitReport, InstrumentConfig, NoiseState, ParamTrack,
                   StopReason, validate, variance_floor)
from .metrics import enl, enl_flags
from .models import ModelKind, WaveformModel
from .moments import moment_retrack

__all__ = ["fit_ls", "LM_UP", "LM_DOWN"]

LM_UP = 10.0
LM_DOWN = 0.5
LM_START = 1e-3
LM_MAX = 1e12
GRAD_TOL = 1e-9
# a stalled echo counts as stationary only below this gradient level
STALL_TOL = 1e-6


def _evaluate(model, p):
    s, J = model.with_jacobian(p[:, 0], p[:, 1], p[:, 2])
    J = np.concatenate([J, np.ones(J.shape[:2] + (1,))], axis=2)
    return s + p[:, 3:4], J


def _sse(y, model, p):
    r = y - model(p[:, 0], p[:, 1], p[:, 2]) - p[:, 3:4]
    return np.sum(r * r, axis=1)


def fit_ls(seq: EchoSequence, cfg: InstrumentConfig | None = None,
           kind: ModelKind | str = ModelKind.BROWN, t_max: int = 200, model=None,
           init=None) -> FitReport:
    """Levenberg-Marquardt fit of (swh, tau, pu, mu) for every echo.

    Parameters
    ----------
    seq : EchoSequence
    cfg : InstrumentConfig, optional
    kind : ModelKind or str
        Waveform model.
    t_max : int
        Iteration cap; echoes still moving at the cap are flagged in
        ``extras["flagged"]`` and keep their best iterate.
    init : (M, 4) array, optional
        Starting point; the moment retracker is used by default.

    Returns
    -------
    FitReport
        ``noise_hat.lam`` holds the per-gate residual variance of each
        block, so that ENL can be compared with the Bayesian estimators.
    """
    t0 = time.perf_counter()
    cfg = cfg or InstrumentConfig(gates=seq.K)
    validate(seq, cfg)
    model = model or WaveformModel(kind, cfg)
    y = seq.echoes
    M = seq.M
    p = np.array(init, dtype=float) if init is not None else moment_retrack(y, cfg)
    p[:, 0] = np.maximum(p[:, 0], 0.0)
    ynorm = np.linalg.norm(y, axis=1)
    damp = np.full(M, LM_START)
    sse = _sse(y, model, p)
    active = np.ones(M, dtype=bool)
    converged = np.zeros(M, dtype=bool)
    iters = np.zeros(M, dtype=int)
    gnorm = np.full(M, np.inf)
    for _ in range(t_max):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        s, J = _evaluate(model, p[idx])
        r = y[idx] - s
        g = np.einsum("mki,mk->mi", J, r)
        gnorm[idx] = np.linalg.norm(g, axis=1)
        done = gnorm[idx] <= GRAD_TOL * np.maximum(ynorm[idx], 1e-300)
        converged[idx[done]] = True
        active[idx[done]] = False
        keep = ~done
        idx, J, g = idx[keep], J[keep], g[keep]
        if idx.size == 0:
            break
        iters[idx] += 1
        H = np.einsum("mki,mkj->mij", J, J)
        dH = np.einsum("mii->mi", H)
        A = H + damp[idx, None, None] * np.einsum("mi,ij->mij", np.maximum(dH, 1e-300), np.eye(4))
        try:
            step = np.linalg.solve(A, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(A, g)])
        cand = p[idx] + step
        cand[:, 0] = np.maximum(cand[:, 0], 0.0)
        new = _sse(y[idx], model, cand)
        better = np.isfinite(new) & (new < sse[idx])
        ok, bad = idx[better], idx[~better]
        p[ok], sse[ok] = cand[better], new[better]
        damp[ok] *= LM_DOWN
        damp[bad] *= LM_UP
        # no further decrease is representable: stop, and accept the echo
        # only if it is stationary to the tolerance of the LS optimum
        stalled = bad[(damp[bad] > LM_MAX)]
        active[stalled] = False
        converged[stalled] = gnorm[stalled] <= STALL_TOL * np.maximum(ynorm[stalled], 1e-300)
    flagged = ~converged

    theta = ParamTrack(p[:, 0], p[:, 1], p[:, 2])
    mu = p[:, 3].copy()
    resid = y - model(theta.swh, theta.tau, theta.pu) - mu[:, None]
    lam = np.stack([np.mean(resid[lo:hi] ** 2, axis=0) for lo, hi in seq.blocks()], axis=1)
    lam = np.maximum(lam, variance_floor(y))
    noise = NoiseState(mu, lam)
    return FitReport(
        theta_hat=theta,
        noise_hat=noise,
        enl=enl(seq, lam),
        cost_trace=np.array([float(np.sum(sse))]),
        iterations=int(iters.max(initial=0)),
        stop_reason=StopReason.MAX_ITER if flagged.any() else StopReason.PARAM_TOL,
        wall_time=time.perf_counter() - t0,
        extras={
            "algo": "ls",
            "kind": model.kind.value if hasattr(model, "kind") else "custom",
            "flagged": np.nonzero(flagged)[0].tolist(),
            "iterations_per_echo": iters.tolist(),
            "enl_flags": enl_flags(seq, lam).tolist(),
        },
    )
