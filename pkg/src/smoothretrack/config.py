"""Plain-text run configuration.

``key = value`` pairs in four sections::

    [instrument]   InstrumentConfig fields (derived ones may be left out)
    [scenario]     simulation recipe: M, kind, L, mu, seed, block_size, pad,
                   speckle, speckle_thermal, and swh / tau / pu as
                   ``default`` or a constant
    [hyper]        a, b (three comma-separated values, or ``auto``), psi2,
                   xi1, xi2, t_max
    [chain]        n_burn, n_run, leapfrog_steps, step_size, seed,
                   target_accept, adapt

Missing keys take their defaults; unknown sections or keys are errors that
name the offending entry.  :func:`dump_config` writes every value (floats
with ``repr``) so that parsing the dump gives back an identical
configuration.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

import numpy as np

from .core import HyperConfig, InstrumentConfig, ValidationError
from .hmc import ChainConfig
from .models import ModelKind
from .simulate import Scenario, pu_default, swh_default, tau_default

__all__ = ["ConfigError", "RunConfig", "ScenarioSpec", "parse_config", "load_config", "dump_config"]

_TRAJ_DEFAULTS = {"swh": swh_default, "tau": tau_default, "pu": pu_default}


class ConfigError(ValueError):
    """Bad configuration text; the message names the section and key."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Serializable form of :class:`~smoothretrack.simulate.Scenario`.

    Trajectories are ``"default"`` (the built-in smooth tracks) or a
    constant value.
    """

    M: int = 500
    kind: str = "brown"
    L: float = 90.0
    mu: float = 0.025
    seed: int = 0
    block_size: int = 20
    pad: bool = False
    speckle: str = "gamma"
    speckle_thermal: bool = True
    swh: str = "default"
    tau: str = "default"
    pu: str = "default"

    def build(self, seed: int | None = None) -> Scenario:
        trajs = {}
        for name in ("swh", "tau", "pu"):
            v = getattr(self, name)
            if v == "default":
                trajs[name] = _TRAJ_DEFAULTS[name]
            else:
                c = float(v)
                trajs[name] = (lambda m, c=c: np.full(np.shape(m), c))
        return Scenario(M=self.M, kind=ModelKind(self.kind), L=self.L, mu=self.mu,
                        seed=self.seed if seed is None else seed, block_size=self.block_size,
                        pad=self.pad, speckle=self.speckle, speckle_thermal=self.speckle_thermal,
                        **trajs)


@dataclass(frozen=True)
class RunConfig:
    instrument: InstrumentConfig = field(default_factory=InstrumentConfig)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    hyper: HyperConfig = field(default_factory=HyperConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return dump_config(self) == dump_config(other)


# ------------------------------------------------------------------ parse --

def _bool(section, key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {text!r}")


def _num(section, key, text, kind=float):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {text!r}") from None
    if kind is int:
        if v != int(v):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {text!r}")
        return int(v)
    return v


def _vec(section, key, text):
    parts = [p for p in text.replace(",", " ").split() if p]
    vals = [_num(section, key, p) for p in parts]
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3:
        raise ConfigError(f"[{section}] {key}: expected 1 or 3 values, got {len(vals)}")
    return vals


def _check_keys(section, items, allowed):
    for key in items:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{section}]")


def _instrument(items):
    allowed = {f.name: f for f in fields(InstrumentConfig)}
    _check_keys("instrument", items, allowed)
    kw = {}
    for key, text in items.items():
        kind = int if key in ("gates", "doppler_beams") else float
        if text.strip().lower() in ("auto", "none", ""):
            kw[key] = None
        else:
            kw[key] = _num("instrument", key, text, kind)
    return InstrumentConfig(**kw)


def _scenario(items):
    allowed = {f.name: f for f in fields(ScenarioSpec)}
    _check_keys("scenario", items, allowed)
    kw = {}
    for key, text in items.items():
        text = text.strip()
        if key in ("M", "seed", "block_size"):
            kw[key] = _num("scenario", key, text, int)
        elif key in ("L", "mu"):
            kw[key] = _num("scenario", key, text)
        elif key in ("pad", "speckle_thermal"):
            kw[key] = _bool("scenario", key, text)
        elif key == "kind":
            if text not in {k.value for k in ModelKind}:
                raise ConfigError(f"[scenario] kind: unknown model {text!r}")
            kw[key] = text
        elif key == "speckle":
            kw[key] = text
        else:  # trajectories
            if text != "default":
                text = repr(_num("scenario", key, text))
            kw[key] = text
    spec = ScenarioSpec(**kw)
    if spec.M < 1:
        raise ConfigError("M must be ≥ 1")
    return spec


def _hyper(items):
    allowed = {"a", "b", "psi2", "xi1", "xi2", "t_max"}
    _check_keys("hyper", items, allowed)
    kw = {}
    for key, text in items.items():
        if key == "a":
            kw[key] = np.array(_vec("hyper", key, text))
        elif key == "b":
            kw[key] = None if text.strip().lower() == "auto" else np.array(_vec("hyper", key, text))
        elif key == "t_max":
            kw[key] = _num("hyper", key, text, int)
        else:
            kw[key] = _num("hyper", key, text)
    return HyperConfig(**kw)


def _chain(items):
    allowed = {f.name for f in fields(ChainConfig)}
    _check_keys("chain", items, allowed)
    kw = {}
    for key, text in items.items():
        if key in ("n_burn", "n_run", "leapfrog_steps", "seed"):
            kw[key] = _num("chain", key, text, int)
        elif key == "step_size":
            kw[key] = tuple(_vec("chain", key, text))
        elif key == "adapt":
            kw[key] = _bool("chain", key, text)
        else:
            kw[key] = _num("chain", key, text)
    return ChainConfig(**kw)


_SECTIONS = {"instrument": _instrument, "scenario": _scenario, "hyper": _hyper, "chain": _chain}


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; missing sections and keys keep their defaults."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (M, L)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    parts = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        try:
            parts[section] = _SECTIONS[section](dict(cp[section]))
        except ValidationError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ------------------------------------------------------------------- dump --

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Configuration text that parses back to ``cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["instrument"] = {k: _fmt(v) for k, v in cfg.instrument.to_dict().items()}
    cp["scenario"] = {f.name: _fmt(getattr(cfg.scenario, f.name)) for f in fields(ScenarioSpec)}
    h = cfg.hyper
    cp["hyper"] = {"a": _fmt(h.a), "b": "auto" if h.b is None else _fmt(h.b), "psi2": _fmt(h.psi2),
                   "xi1": _fmt(h.xi1), "xi2": _fmt(h.xi2), "t_max": _fmt(h.t_max)}
    cp["chain"] = {k: _fmt(v) for k, v in cfg.chain.to_dict().items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
