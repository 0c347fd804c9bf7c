"""Domain data model shared by the simulators, estimators and file formats.

All containers are frozen dataclasses holding read-only float64 arrays, so
they can be passed between threads without copying.  Epochs are stored in
gate units throughout; the waveform models convert with ``tau_s = tau * T``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

SPEED_OF_LIGHT = 299792458.0

# Least-squares fit of exp(-t^2 / 2 s^2) to sinc^2(t / T) over |t| <= T,
# peak fixed at 1.  Recomputed in tests/test_core.py.
SIGMA_P_OVER_T = 0.36445692658244055

__all__ = [
    "SPEED_OF_LIGHT",
    "SIGMA_P_OVER_T",
    "ValidationError",
    "InstrumentConfig",
    "ParamTrack",
    "EchoSequence",
    "NoiseState",
    "HyperConfig",
    "StopReason",
    "FitReport",
    "validate",
    "variance_floor",
    "block_bounds",
    "block_ids",
]


class ValidationError(ValueError):
    """Raised when inputs break a data-model invariant."""


def _frozen_array(x, ndim=None, name="array"):
    a = np.array(x, dtype=np.float64, copy=True)
    if ndim is not None and a.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-D, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InstrumentConfig:
    """Instrument and grid constants.

    Defaults are the Cryosat-2 SIRAL values (13.575 GHz, 320 MHz, 730 km,
    1.1388 deg beam, 7 km/s, 64 Doppler beams, 128 gates).  Fields left as
    ``None`` are derived in ``__post_init__``:

    * ``gate_duration`` = 1 / bandwidth
    * ``beamwidth_param`` = sin^2(theta_3dB) / (2 ln 2)
    * ``brown_alpha`` = 4 c / (gamma h)
    * ``brown_sigma_p`` = ``SIGMA_P_OVER_T`` * gate_duration
    """

    carrier_frequency: float = 13.575e9
    wavelength: float = 0.0221
    bandwidth: float = 320e6
    altitude: float = 730e3
    gate_duration: float | None = None
    freq_resolution: float = 18182.0 / 64.0
    antenna_beamwidth: float = math.radians(1.1388)
    beamwidth_param: float | None = None
    satellite_velocity: float = 7000.0
    doppler_beams: int = 64
    gates: int = 128
    brown_alpha: float | None = None
    brown_sigma_p: float | None = None
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{f.name} must be finite and > 0, got {v!r}")
        if self.gate_duration is None:
            object.__setattr__(self, "gate_duration", 1.0 / self.bandwidth)
        if self.beamwidth_param is None:
            g = math.sin(self.antenna_beamwidth) ** 2 / (2.0 * math.log(2.0))
            object.__setattr__(self, "beamwidth_param", g)
        if self.brown_alpha is None:
            a = 4.0 * self.speed_of_light / (self.beamwidth_param * self.altitude)
            object.__setattr__(self, "brown_alpha", a)
        if self.brown_sigma_p is None:
            object.__setattr__(self, "brown_sigma_p", SIGMA_P_OVER_T * self.gate_duration)
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{f.name} must be finite and > 0, got {v!r}")
        if self.gates < 2:
            raise ValidationError("gates must be >= 2")
        if self.doppler_beams < 1:
            raise ValidationError("doppler_beams must be >= 1")
        if abs(self.gate_duration * self.bandwidth - 1.0) > 1e-12:
            raise ValidationError("gate_duration must equal 1 / bandwidth")

    @property
    def T(self) -> float:
        return self.gate_duration

    @property
    def K(self) -> int:
        return self.gates

    @property
    def gate_to_metres(self) -> float:
        """Range spanned by one gate, c T / 2."""
        return self.speed_of_light * self.gate_duration / 2.0

    def gate_times(self) -> np.ndarray:
        """Gate sampling instants t_k = k T, k = 1..K."""
        return np.arange(1, self.gates + 1) * self.gate_duration

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "InstrumentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown instrument key(s): {sorted(unknown)}")
        kw = dict(d)
        for k in ("doppler_beams", "gates"):
            if k in kw:
                kw[k] = int(kw[k])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class ParamTrack:
    """Per-echo altimetric parameters: SWH (m), epoch (gates), amplitude."""

    swh: np.ndarray
    tau: np.ndarray
    pu: np.ndarray

    def __post_init__(self):
        for name in ("swh", "tau", "pu"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), 1, name))
        if not (len(self.swh) == len(self.tau) == len(self.pu)):
            raise ValidationError("swh, tau and pu must share length M")
        if len(self.swh) < 1:
            raise ValidationError("ParamTrack needs M >= 1")

    @property
    def M(self) -> int:
        return len(self.swh)

    def as_matrix(self) -> np.ndarray:
        """M x 3 matrix with columns (swh, tau, pu)."""
        return np.column_stack([self.swh, self.tau, self.pu])

    def stacked(self) -> np.ndarray:
        """Column-stacked 3M vector (swh..., tau..., pu...)."""
        return np.concatenate([self.swh, self.tau, self.pu])

    @classmethod
    def from_matrix(cls, theta) -> "ParamTrack":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:, 0], theta[:, 1], theta[:, 2])

    @classmethod
    def from_stacked(cls, gamma) -> "ParamTrack":
        g = np.asarray(gamma, dtype=float)
        return cls(*np.split(g, 3))

    def to_dict(self) -> dict:
        return {"swh": self.swh.tolist(), "tau": self.tau.tolist(), "pu": self.pu.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamTrack":
        return cls(d["swh"], d["tau"], d["pu"])

    def equals(self, other: "ParamTrack") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("swh", "tau", "pu"))


def block_bounds(M: int, r: int, pad: bool = False) -> list[tuple[int, int]]:
    """Half-open echo ranges of the variance blocks.

    With ``pad`` a trailing short block gets its own variance column;
    otherwise ``M`` must be a multiple of ``r``.
    """
    if r < 1:
        raise ValidationError("block size r must be >= 1")
    if M % r and not pad:
        raise ValidationError(f"block remainder: M={M} is not a multiple of r={r}")
    return [(s, min(s + r, M)) for s in range(0, M, r)]


def block_ids(M: int, r: int, pad: bool = False) -> np.ndarray:
    """Block index n(m) of every echo."""
    block_bounds(M, r, pad)
    return np.arange(M) // r


@dataclass(frozen=True, eq=False)
class EchoSequence:
    """M observed waveforms of K gates, optionally with ground truth.

    ``truth_noise`` is ``(mu, L)``: the simulated thermal means and the
    number of looks used by the speckle generator.
    """

    echoes: np.ndarray
    truth: ParamTrack | None = None
    truth_noise: tuple | None = None
    block_size: int = 20
    pad: bool = False

    def __post_init__(self):
        object.__setattr__(self, "echoes", _frozen_array(self.echoes, 2, "echoes"))
        object.__setattr__(self, "block_size", int(self.block_size))
        if self.truth_noise is not None:
            mu, L = self.truth_noise
            object.__setattr__(self, "truth_noise", (_frozen_array(mu, 1, "truth mu"), float(L)))

    @property
    def M(self) -> int:
        return self.echoes.shape[0]

    @property
    def K(self) -> int:
        return self.echoes.shape[1]

    @property
    def n_blocks(self) -> int:
        return len(block_bounds(self.M, self.block_size, self.pad))

    def blocks(self) -> list[tuple[int, int]]:
        return block_bounds(self.M, self.block_size, self.pad)

    def block_ids(self) -> np.ndarray:
        return block_ids(self.M, self.block_size, self.pad)

    def to_dict(self) -> dict:
        d = {
            "echoes": self.echoes.tolist(),
            "truth": None if self.truth is None else self.truth.to_dict(),
            "truth_noise": None,
            "block_size": self.block_size,
            "pad": self.pad,
        }
        if self.truth_noise is not None:
            d["truth_noise"] = {"mu": self.truth_noise[0].tolist(), "L": self.truth_noise[1]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EchoSequence":
        tn = d.get("truth_noise")
        return cls(
            echoes=np.asarray(d["echoes"], dtype=float).reshape(-1, len(d["echoes"][0])),
            truth=None if d.get("truth") is None else ParamTrack.from_dict(d["truth"]),
            truth_noise=None if tn is None else (tn["mu"], tn["L"]),
            block_size=d["block_size"],
            pad=d.get("pad", False),
        )


@dataclass(frozen=True, eq=False)
class NoiseState:
    """Thermal-noise means (length M) and per-gate block variances (K x N)."""

    mu: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen_array(self.mu, 1, "mu"))
        object.__setattr__(self, "lam", _frozen_array(self.lam, 2, "lam"))
        if not np.all(np.isfinite(self.mu)):
            raise ValidationError("mu must be finite")

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "lam": self.lam.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseState":
        return cls(d["mu"], d["lam"])


@dataclass(frozen=True, eq=False)
class HyperConfig:
    """Smoothness-prior hyperparameters and stopping rules.

    ``b = None`` means "scale to the dynamic range of the initial track";
    see :func:`smoothretrack.cd.default_b`.
    """

    a: np.ndarray = field(default_factory=lambda: np.ones(3))
    b: np.ndarray | None = None
    psi2: float = 100.0
    xi1: float = 1e-6
    xi2: float = 1e-6
    t_max: int = 200

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen_array(np.broadcast_to(self.a, 3), 1, "a"))
        if self.b is not None:
            b = _frozen_array(np.broadcast_to(self.b, 3), 1, "b")
            if np.any(b <= 0):
                raise ValidationError("b must be > 0")
            object.__setattr__(self, "b", b)
        if np.any(self.a <= 0):
            raise ValidationError("a must be > 0")
        for name in ("psi2", "xi1", "xi2"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        object.__setattr__(self, "t_max", int(self.t_max))
        if self.t_max < 1:
            raise ValidationError("t_max must be >= 1")

    def with_b(self, b) -> "HyperConfig":
        return HyperConfig(self.a, b, self.psi2, self.xi1, self.xi2, self.t_max)

    def to_dict(self) -> dict:
        return {
            "a": self.a.tolist(),
            "b": None if self.b is None else self.b.tolist(),
            "psi2": self.psi2,
            "xi1": self.xi1,
            "xi2": self.xi2,
            "t_max": self.t_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        return cls(**d)


class StopReason(str, enum.Enum):
    COST_TOL = "cost_tol"
    PARAM_TOL = "param_tol"
    MAX_ITER = "max_iter"


@dataclass(frozen=True, eq=False)
class FitReport:
    theta_hat: ParamTrack
    noise_hat: NoiseState
    enl: np.ndarray
    cost_trace: np.ndarray
    iterations: int
    stop_reason: StopReason
    wall_time: float
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "enl", _frozen_array(self.enl, 1, "enl"))
        object.__setattr__(self, "cost_trace", _frozen_array(self.cost_trace, 1, "cost_trace"))
        object.__setattr__(self, "stop_reason", StopReason(self.stop_reason))

    @property
    def converged(self) -> bool:
        return self.stop_reason is not StopReason.MAX_ITER

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "noise_hat": self.noise_hat.to_dict(),
            "enl": self.enl.tolist(),
            "cost_trace": self.cost_trace.tolist(),
            "iterations": self.iterations,
            "stop_reason": self.stop_reason.value,
            "wall_time": self.wall_time,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(
            theta_hat=ParamTrack.from_dict(d["theta_hat"]),
            noise_hat=NoiseState.from_dict(d["noise_hat"]),
            enl=d["enl"],
            cost_trace=d["cost_trace"],
            iterations=d["iterations"],
            stop_reason=d["stop_reason"],
            wall_time=d["wall_time"],
            extras=d.get("extras", {}),
        )


def variance_floor(echoes) -> float:
    """Smallest admissible noise variance, 1e-12 * (max echo power)^2."""
    peak = float(np.max(np.abs(echoes))) if np.size(echoes) else 0.0
    if peak == 0.0:
        peak = 1.0
    return 1e-12 * peak * peak


def validate(seq: EchoSequence, cfg: InstrumentConfig) -> None:
    """Check every invariant of ``seq`` against ``cfg``; raise on failure."""
    y = seq.echoes
    if y.shape[1] != cfg.gates:
        raise ValidationError(f"dimension mismatch: sequence has K={y.shape[1]}, config K={cfg.gates}")
    if y.shape[0] < 1:
        raise ValidationError("dimension mismatch: sequence has no echoes")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite sample in echoes")
    if seq.block_size < 1:
        raise ValidationError("block size r must be >= 1")
    block_bounds(seq.M, seq.block_size, seq.pad)
    if seq.truth is not None:
        t = seq.truth
        if t.M != seq.M:
            raise ValidationError(f"dimension mismatch: truth has M={t.M}, echoes M={seq.M}")
        arrs = np.concatenate([t.swh, t.tau, t.pu])
        if not np.all(np.isfinite(arrs)):
            raise ValidationError("non-finite sample in truth")
        if np.any(t.swh < 0) or np.any(t.pu < 0):
            raise ValidationError("truth swh and pu must be >= 0")
        if np.any(t.tau < 0) or np.any(t.tau > cfg.gates):
            raise ValidationError("truth tau must lie in [0, K]")
    if seq.truth_noise is not None:
        mu, L = seq.truth_noise
        if len(mu) != seq.M:
            raise ValidationError("dimension mismatch: truth mu length differs from M")
        if not (L >= 1 and np.all(np.isfinite(mu))):
            raise ValidationError("truth noise needs finite mu and L >= 1")
