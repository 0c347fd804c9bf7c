"""Synthetic echo sequences with known parameter trajectories.

Speckle is multiplicative: every gate of every echo is scaled by an
independent Gamma(L, 1/L) variate, the average of L unit-mean exponential
looks.  By default the thermal floor ``mu`` is speckled together with the
ocean return, ``y = (s + mu) g``, so that every gate carries the
signal-to-variance ratio L.  ``speckle_thermal=False`` gives the
noise-free offset ``y = s g + mu`` instead, and ``speckle="gaussian"``
swaps the Gamma law for its Gaussian approximation with the same first two
moments.

Random numbers come from numpy's Philox counter-based generator; echo m
uses the m-th child of ``SeedSequence(seed)``, so any echo can be
regenerated on its own and sequences are identical across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .core import EchoSequence, InstrumentConfig, ParamTrack, ValidationError
from .models import ModelKind, WaveformModel

Trajectory = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]

SPECKLE_LAWS = ("gamma", "gaussian", "none")


def swh_default(m):
    return 2.5 + 2.0 * np.cos(0.07 * m)


def tau_default(m):
    m = np.asarray(m, dtype=float)
    return np.where(m < 250, 27.0 + 0.02 * m, 32.0 - 0.02 * m)


def pu_default(m):
    return 158.0 + 0.05 * np.sin(0.1 * m)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Simulation recipe.

    ``swh``, ``tau`` and ``pu`` are either functions of the echo index
    array ``m = 0..M-1`` or tabulated arrays of length M.
    """

    M: int
    kind: ModelKind = ModelKind.BROWN
    L: float = 90
    mu: float = 0.025
    swh: Trajectory = swh_default
    tau: Trajectory = tau_default
    pu: Trajectory = pu_default
    seed: int = 0
    block_size: int = 20
    pad: bool = False
    speckle: str = "gamma"
    speckle_thermal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.M < 1:
            raise ValidationError("M must be ≥ 1")
        if self.L < 1:
            raise ValidationError("L must be >= 1")
        if self.mu < 0:
            raise ValidationError("mu must be >= 0")
        if self.speckle not in SPECKLE_LAWS:
            raise ValidationError(f"speckle must be one of {SPECKLE_LAWS}")

    def track(self) -> ParamTrack:
        m = np.arange(self.M)
        cols = []
        for traj in (self.swh, self.tau, self.pu):
            v = traj(m) if callable(traj) else np.asarray(traj, dtype=float)
            v = np.broadcast_to(np.asarray(v, dtype=float), (self.M,))
            cols.append(v)
        return ParamTrack(*cols)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def default_scenario(M: int = 500, seed: int = 0) -> Scenario:
    """Smoothly varying Brown-echo scenario with L = 90 looks and mu = 0.025.

    SWH(m) = 2.5 + 2 cos(0.07 m) metres, tau(m) = 27 + 0.02 m gates for
    m < 250 and 32 - 0.02 m afterwards, P_u(m) = 158 + 0.05 sin(0.1 m).
    """
    return Scenario(M=M, seed=seed)


def echo_rng(seed: int, M: int) -> list[np.random.Generator]:
    """One independent Philox stream per echo."""
    children = np.random.SeedSequence(seed).spawn(M)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def speckle(rng: np.random.Generator, L: float, size) -> np.ndarray:
    """Mean-one multiplicative speckle, Gamma(shape L, scale 1/L)."""
    return rng.gamma(L, 1.0 / L, size)


def generate(sc: Scenario, cfg: InstrumentConfig, **model_options) -> EchoSequence:
    truth = sc.track()
    model = WaveformModel(sc.kind, cfg, **model_options)
    s = model(truth.swh, truth.tau, truth.pu)
    mu = np.full(sc.M, float(sc.mu))
    K = cfg.gates
    clean = s + mu[:, None] if sc.speckle_thermal else s
    y = np.empty_like(s)
    for m, rng in enumerate(echo_rng(sc.seed, sc.M)):
        if sc.speckle == "gamma":
            y[m] = clean[m] * speckle(rng, sc.L, K)
        elif sc.speckle == "gaussian":
            y[m] = clean[m] * (1.0 + rng.standard_normal(K) / np.sqrt(sc.L))
        else:
            y[m] = clean[m]
    if not sc.speckle_thermal:
        y += mu[:, None]
    return EchoSequence(y, truth=truth, truth_noise=(mu, sc.L), block_size=sc.block_size, pad=sc.pad)
