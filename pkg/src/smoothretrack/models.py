"""Mean-power waveform models on the K-gate grid and their Jacobians.

Three models are available, all linear in the amplitude ``pu``:

``brown``
    Closed-form ocean echo from a Gaussian approximation of the sinc^2
    point-target response.
``ca_conv``
    Numerical FSIR * PDF * PTR double convolution for conventional
    altimetry.
``dda``
    Multi-look delay/Doppler echo: per-beam FSIR, Doppler PTR mixing,
    slant-range compensation and beam summation.

Parameters may be scalars or length-M arrays; outputs then have shape
``(K,)`` or ``(M, K)``.  Jacobians append a trailing axis of length 3
ordered (swh, tau, pu).

The numerical models are computed on a grid oversampled ``oversample``
times with respect to the gates and convolved by FFT.  The Gaussian
sea-surface PDF enters through its exact transfer function; the sinc^2 PTR
is the sampled kernel over half the (long) window, which keeps both the
lobe truncation and the circular wrap-around below 1e-6 of the peak.  Both
kernels have unit area so that ``pu`` is the plateau power, as in the
Brown model.
"""
from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.special import erfc

from .core import InstrumentConfig

__all__ = [
    "ModelKind",
    "WaveformModel",
    "brown",
    "ca_conv",
    "dda",
    "doppler_phi",
    "default_beam_edges",
    "default_delays",
    "evaluate",
    "jacobian",
    "FD_STEP_SWH",
    "FD_STEP_TAU",
]

FD_STEP_SWH = 1e-3  # m
FD_STEP_TAU = 1e-3  # gates

_SQRT2 = math.sqrt(2.0)
_INV_SQRTPI = 1.0 / math.sqrt(math.pi)


class ModelKind(str, enum.Enum):
    BROWN = "brown"
    CA = "ca"
    DDA = "dda"


def _unpack(params):
    swh, tau, pu = (np.asarray(p, dtype=float) for p in params)
    for name, p in (("swh", swh), ("tau", tau), ("pu", pu)):
        if not np.all(np.isfinite(p)):
            raise ValueError(f"non-finite parameter {name}")
    return np.broadcast_arrays(swh, tau, pu)


# ---------------------------------------------------------------- Brown ----

def _brown_terms(swh, tau, cfg: InstrumentConfig):
    t = cfg.gate_times()
    a = cfg.brown_alpha
    c = cfg.speed_of_light
    var = (swh / (2.0 * c)) ** 2 + cfg.brown_sigma_p ** 2
    sig = np.sqrt(var)[..., None]
    var = var[..., None]
    u = t - tau[..., None] * cfg.gate_duration
    z = (u - a * var) / (_SQRT2 * sig)
    expo = np.exp(-a * (u - 0.5 * a * var))
    base = 0.5 * erfc(-z) * expo
    return u, z, sig, var, expo, base


def brown(params, cfg: InstrumentConfig) -> np.ndarray:
    """Brown model ``s(kT)`` for ``params = (swh [m], tau [gates], pu)``."""
    swh, tau, pu = _unpack(params)
    base = _brown_terms(swh, tau, cfg)[-1]
    return pu[..., None] * base


def _brown_jacobian(swh, tau, pu, cfg):
    a = cfg.brown_alpha
    c = cfg.speed_of_light
    u, z, sig, var, expo, base = _brown_terms(swh, tau, cfg)
    gauss = _INV_SQRTPI * np.exp(-z * z) * expo
    p = pu[..., None]
    ds_du = p * (gauss / (_SQRT2 * sig) - a * base)
    dz_dvar = (-u / (_SQRT2 * var) - a / _SQRT2) / (2.0 * sig)
    ds_dvar = p * (gauss * dz_dvar + 0.5 * a * a * base)
    ds_dswh = ds_dvar * (swh / (2.0 * c * c))[..., None]
    ds_dtau = -cfg.gate_duration * ds_du
    s = p * base
    return s, np.stack([ds_dswh, ds_dtau, base], axis=-1)


# ------------------------------------------------------- numerical grid ----

class _FineGrid:
    """Oversampled time grid shared by the numerical models."""

    def __init__(self, cfg: InstrumentConfig, oversample: int, left_gates: int, right_gates: int):
        T = cfg.gate_duration
        self.os = int(oversample)
        self.dt = T / self.os
        self.t0 = (1 - left_gates) * T
        n = (left_gates + cfg.gates + right_gates) * self.os
        self.n = sfft.next_fast_len(n, real=True)
        self.t = self.t0 + np.arange(self.n) * self.dt
        self.gate_idx = (left_gates - 1 + np.arange(1, cfg.gates + 1)) * self.os
        self.freqs = sfft.rfftfreq(self.n, self.dt)
        # sampled unit-area sinc^2 kept for lags inside half the window, so
        # the periodic images of the signal never reach the gates
        lag = np.arange(self.n)
        lag = np.where(lag < self.n // 2, lag, lag - self.n)
        kernel = np.sinc(lag / self.os) ** 2 / self.os
        kernel[np.abs(lag) >= self.n // 2] = 0.0
        self.ptr_transfer = sfft.rfft(kernel).real


def _tail_gates(cfg: InstrumentConfig, floor: float = 1e-7) -> int:
    # gates after the last one until exp(-alpha t) drops below `floor`
    decay = cfg.brown_alpha * cfg.gate_duration
    return int(math.ceil(-math.log(floor) / decay))


@lru_cache(maxsize=16)
def _ca_grid(cfg: InstrumentConfig, oversample: int) -> _FineGrid:
    return _FineGrid(cfg, oversample, left_gates=16, right_gates=_tail_gates(cfg))


def _cell_avg_exp_step(t, dt, tau_s, alpha):
    """Average of exp(-alpha (t - tau_s)) U(t - tau_s) over cells of width dt."""
    lo = np.maximum(t - 0.5 * dt, tau_s)
    hi = t + 0.5 * dt
    val = (np.exp(-alpha * (lo - tau_s)) - np.exp(-alpha * (hi - tau_s))) / (alpha * dt)
    return np.where(hi > tau_s, val, 0.0)


def _pdf_transfer(freqs, swh, c):
    sigma_s = (swh / (2.0 * c))[..., None]
    return np.exp(-2.0 * (math.pi * freqs * sigma_s) ** 2)


def _ca_shape(swh, tau, cfg, oversample=8, ptr=True):
    g = _ca_grid(cfg, oversample)
    tau_s = (tau * cfg.gate_duration)[..., None]
    fsir = _cell_avg_exp_step(g.t, g.dt, tau_s, cfg.brown_alpha)
    spec = sfft.rfft(fsir, axis=-1)
    spec *= _pdf_transfer(g.freqs, swh, cfg.speed_of_light)
    if ptr:
        spec *= g.ptr_transfer
    out = sfft.irfft(spec, n=g.n, axis=-1)
    return out[..., g.gate_idx]


def ca_conv(params, cfg: InstrumentConfig, oversample: int = 8, ptr: bool = True) -> np.ndarray:
    """Conventional-altimetry echo FSIR * PDF * PTR_T sampled at the gates.

    ``ptr=False`` replaces the point-target response by a Dirac.
    """
    if oversample < 2:
        raise ValueError("oversample must be >= 2")
    swh, tau, pu = _unpack(params)
    return pu[..., None] * _ca_shape(swh, tau, cfg, oversample, ptr)


# ---------------------------------------------------------- delay/Doppler --

def default_beam_edges(cfg: InstrumentConfig) -> np.ndarray:
    """Doppler frequencies f_q = (q - (Q+1)/2) F, q = 1..Q+1.

    Beam q spans [f_q, f_{q+1}]; for Q = 64 the offset is 32.5 and beam 32
    is centred on zero Doppler.
    """
    Q = cfg.doppler_beams
    q = np.arange(1, Q + 2)
    return (q - 0.5 * (Q + 1)) * cfg.freq_resolution


def _doppler_to_y(f, cfg):
    return cfg.altitude * cfg.wavelength / (2.0 * cfg.satellite_velocity) * f


def default_delays(cfg: InstrumentConfig, beam_edges=None) -> np.ndarray:
    """Slant-range delays applied as P(t - dt_q): dt_q = -y_c^2 / (h c).

    y_c is the ground ordinate of the beam centre.
    """
    edges = default_beam_edges(cfg) if beam_edges is None else np.asarray(beam_edges, float)
    yc = _doppler_to_y(0.5 * (edges[:-1] + edges[1:]), cfg)
    return -yc ** 2 / (cfg.altitude * cfg.speed_of_light)


def doppler_phi(rho2, y):
    """Re[arctan(y / sqrt(rho^2 - y^2))] on the principal branch.

    Inside the iso-range circle this is arcsin(y / rho).  Outside it the
    argument lies on the branch cut and the real part is sign(y) pi/2; the
    radicand is clamped at zero there.  Infinite ordinates give +-pi/2.
    """
    rho2 = np.asarray(rho2, dtype=float)
    y = np.asarray(y, dtype=float)
    rad = np.maximum(rho2 - y * y, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = np.arctan(y / np.sqrt(rad))
    out = np.where(rad > 0.0, inside, np.sign(y) * (0.5 * math.pi))
    return np.where(np.isinf(y), np.sign(y) * (0.5 * math.pi), out)


class _DdaPlan:
    """Per-configuration sub-beam geometry and frequency-domain beam filters."""

    def __init__(self, cfg, oversample, beam_edges, delays, doppler_ptr, freq_oversample, right_gates):
        edges = default_beam_edges(cfg) if beam_edges is None else np.asarray(beam_edges, float)
        if delays is None:
            delays = np.zeros(len(edges) - 1) if np.any(np.isinf(edges)) else default_delays(cfg, edges)
        delays = np.asarray(delays, float)
        if len(delays) != len(edges) - 1:
            raise ValueError("need one delay per beam")
        self.grid = _FineGrid(cfg, oversample, left_gates=16, right_gates=right_gates)
        finite = np.all(np.isfinite(edges))
        nsub = int(freq_oversample) if (doppler_ptr and finite) else 1
        sub_edges = []
        owner = []
        for q in range(len(edges) - 1):
            if nsub == 1:
                e = np.array([edges[q], edges[q + 1]])
            else:
                e = np.linspace(edges[q], edges[q + 1], nsub + 1)
            sub_edges.append(e)
            owner.extend([q] * (len(e) - 1))
        lo = np.concatenate([e[:-1] for e in sub_edges])
        hi = np.concatenate([e[1:] for e in sub_edges])
        self.y_lo = _doppler_to_y(lo, cfg)
        self.y_hi = _doppler_to_y(hi, cfg)
        freqs = self.grid.freqs
        shifts = np.exp(-2j * math.pi * freqs[None, :] * delays[:, None])  # (Q, nf)
        if doppler_ptr and finite:
            fc_beam = 0.5 * (edges[:-1] + edges[1:])
            fc_sub = 0.5 * (lo + hi)
            w = np.sinc((fc_beam[:, None] - fc_sub[None, :]) / cfg.freq_resolution) ** 2
        else:
            w = np.zeros((len(edges) - 1, len(lo)))
            w[np.asarray(owner), np.arange(len(lo))] = 1.0
        # filter seen by sub-beam j after Doppler mixing, shift and beam sum
        self.sub_filter = w.T @ shifts  # (J, nf)


@lru_cache(maxsize=16)
def _dda_plan_cached(cfg, oversample, doppler_ptr, freq_oversample, right_gates):
    return _DdaPlan(cfg, oversample, None, None, doppler_ptr, freq_oversample, right_gates)


def _dda_shape(swh, tau, cfg, oversample=8, beam_edges=None, delays=None, doppler_ptr=True,
               freq_oversample=4, right_gates=256):
    if beam_edges is None and delays is None:
        plan = _dda_plan_cached(cfg, oversample, doppler_ptr, freq_oversample, right_gates)
    else:
        plan = _DdaPlan(cfg, oversample, beam_edges, delays, doppler_ptr, freq_oversample, right_gates)
    g = plan.grid
    hc = cfg.altitude * cfg.speed_of_light
    swh = np.atleast_1d(swh)
    tau = np.atleast_1d(tau)
    out = np.empty(swh.shape + (cfg.gates,))
    pdf = _pdf_transfer(g.freqs, swh, cfg.speed_of_light)
    for m in np.ndindex(swh.shape):
        tau_s = tau[m] * cfg.gate_duration
        # each fine cell is weighted by the part lying after the onset and
        # evaluated at the middle of that part, so the echo is continuous in tau
        lo = np.maximum(g.t - 0.5 * g.dt, tau_s)
        hi = g.t + 0.5 * g.dt
        cover = np.clip((hi - lo) / g.dt, 0.0, 1.0)
        dtm = np.clip(0.5 * (lo + hi) - tau_s, 0.0, None)
        expo = np.where(cover > 0.0, cover * np.exp(-cfg.brown_alpha * dtm), 0.0)
        rho2 = hc * dtm
        width = doppler_phi(rho2[None, :], plan.y_hi[:, None]) - doppler_phi(rho2[None, :], plan.y_lo[:, None])
        active = np.any(width != 0.0, axis=1)
        fsir = (expo / math.pi) * width[active]
        spec = (sfft.rfft(fsir, axis=-1) * plan.sub_filter[active]).sum(axis=0)
        spec *= pdf[m] * g.ptr_transfer
        out[m] = sfft.irfft(spec, n=g.n)[g.gate_idx]
    return out


def dda(params, cfg: InstrumentConfig, oversample: int = 8, beam_edges=None, delays=None,
        doppler_ptr: bool = True, freq_oversample: int = 4) -> np.ndarray:
    """Multi-look delay/Doppler echo.

    ``beam_edges`` are Doppler frequencies delimiting the beams (default
    :func:`default_beam_edges`); infinite edges are allowed and give a
    single beam covering the whole Doppler band.  ``delays`` overrides the
    slant-range compensation.  ``doppler_ptr=False`` skips the sinc^2
    Doppler response; otherwise each beam is split into
    ``freq_oversample`` sub-beams before the mixing.
    """
    swh, tau, pu = _unpack(params)
    shape = _dda_shape(swh, tau, cfg, oversample, beam_edges, delays, doppler_ptr, freq_oversample)
    return pu[..., None] * shape.reshape(swh.shape + (cfg.gates,))


# ---------------------------------------------------------------- dispatch --

_SHAPES = {ModelKind.CA: _ca_shape, ModelKind.DDA: _dda_shape}


def _fd_jacobian(shape_fn, swh, tau, pu, base):
    hs, ht = FD_STEP_SWH, FD_STEP_TAU
    lo_swh = np.where(swh >= hs, swh - hs, swh)
    up = shape_fn(swh + hs, tau)
    dn = np.where((swh >= hs)[..., None], shape_fn(lo_swh, tau), base)
    dswh = (up - dn) / (swh + hs - lo_swh)[..., None]
    dtau = (shape_fn(swh, tau + ht) - shape_fn(swh, tau - ht)) / (2.0 * ht)
    p = pu[..., None]
    return np.stack([p * dswh, p * dtau, base], axis=-1)


class WaveformModel:
    """A model kind bound to an instrument configuration.

    Calling the object returns the waveforms; :meth:`with_jacobian` also
    returns d s / d(swh, tau, pu).  Extra keyword options are forwarded to
    the numerical model (``oversample``, ``ptr``, ``beam_edges``...).
    """

    def __init__(self, kind: ModelKind | str, cfg: InstrumentConfig, **options):
        self.kind = ModelKind(kind)
        self.cfg = cfg
        self.options = options

    def __repr__(self):
        return f"WaveformModel({self.kind.value!r})"

    def shape(self, swh, tau):
        swh = np.asarray(swh, float)
        tau = np.asarray(tau, float)
        if self.kind is ModelKind.BROWN:
            return _brown_terms(swh, tau, self.cfg)[-1]
        out = _SHAPES[self.kind](swh, tau, self.cfg, **self.options)
        return out.reshape(np.broadcast(swh, tau).shape + (self.cfg.gates,))

    def __call__(self, swh, tau, pu):
        swh, tau, pu = _unpack((swh, tau, pu))
        return pu[..., None] * self.shape(swh, tau)

    def with_jacobian(self, swh, tau, pu):
        swh, tau, pu = _unpack((swh, tau, pu))
        if self.kind is ModelKind.BROWN:
            return _brown_jacobian(swh, tau, pu, self.cfg)
        base = self.shape(swh, tau)
        jac = _fd_jacobian(self.shape, swh, tau, pu, base)
        return pu[..., None] * base, jac


def evaluate(kind: ModelKind | str, params, cfg: InstrumentConfig, **options) -> np.ndarray:
    return WaveformModel(kind, cfg, **options)(*params)


def jacobian(kind: ModelKind | str, params, cfg: InstrumentConfig, **options) -> np.ndarray:
    """d s / d(swh, tau, pu), shape ``(..., K, 3)``.

    Brown is differentiated analytically; CA and DDA use central differences
    with steps ``FD_STEP_SWH`` and ``FD_STEP_TAU`` (forward difference when
    swh is closer than one step to zero).  The pu column is the waveform at
    pu = 1 for every kind.
    """
    return WaveformModel(kind, cfg, **options).with_jacobian(*params)[1]
