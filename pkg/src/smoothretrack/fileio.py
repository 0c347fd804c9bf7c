"""Reading and writing echoes, fit reports and chains.

Binary waveform layout (little endian)::

    b"ALTW"  u32 version=1  u32 K  u32 M  u32 r  u32 flags
    M x K float64 echoes, row-major
    [flags bit 0] 3 x M float64 truth (swh, tau, pu rows)
    [flags bit 1] M float64 thermal means, then 1 float64 number of looks

Flag bit 2 records the block ``pad`` policy.  Chains use the same header
with magic ``b"ALTC"``, K = parameters per sample, M = samples and r = 0.
"""
from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .core import EchoSequence, FitReport, ParamTrack

__all__ = [
    "FormatError",
    "write_altw",
    "read_altw",
    "write_csv",
    "read_csv",
    "read_echoes",
    "write_echoes",
    "to_json",
    "from_json",
    "save_json",
    "load_json",
    "write_report",
    "read_report_csv",
    "write_chain",
    "read_chain",
    "write_table",
]

MAGIC = b"ALTW"
CHAIN_MAGIC = b"ALTC"
VERSION = 1
_HEADER = struct.Struct("<4s5I")
FLAG_TRUTH = 1
FLAG_TRUTH_NOISE = 2
FLAG_PAD = 4


class FormatError(ValueError):
    """Malformed or unsupported input file."""


# ------------------------------------------------------------------ ALTW ---

def _pack_header(magic, K, M, r, flags):
    return _HEADER.pack(magic, VERSION, K, M, r, flags)


def _read_header(buf, magic):
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for header")
    got, version, K, M, r, flags = _HEADER.unpack_from(buf, 0)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    return K, M, r, flags


def write_altw(path, seq: EchoSequence) -> None:
    flags = 0
    if seq.truth is not None:
        flags |= FLAG_TRUTH
    if seq.truth_noise is not None:
        flags |= FLAG_TRUTH_NOISE
    if seq.pad:
        flags |= FLAG_PAD
    parts = [_pack_header(MAGIC, seq.K, seq.M, seq.block_size, flags),
             np.ascontiguousarray(seq.echoes, dtype="<f8").tobytes()]
    if seq.truth is not None:
        parts.append(np.ascontiguousarray(seq.truth.as_matrix().T, dtype="<f8").tobytes())
    if seq.truth_noise is not None:
        mu, L = seq.truth_noise
        parts.append(np.asarray(mu, dtype="<f8").tobytes())
        parts.append(np.asarray([L], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_altw(path) -> EchoSequence:
    buf = Path(path).read_bytes()
    K, M, r, flags = _read_header(buf, MAGIC)
    off = _HEADER.size
    need = M * K + (3 * M if flags & FLAG_TRUTH else 0) + (M + 1 if flags & FLAG_TRUTH_NOISE else 0)
    if len(buf) != off + 8 * need:
        raise FormatError(f"size mismatch: expected {off + 8 * need} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f8", offset=off).astype(float)
    echoes = data[:M * K].reshape(M, K)
    pos = M * K
    truth = None
    if flags & FLAG_TRUTH:
        truth = ParamTrack(*data[pos:pos + 3 * M].reshape(3, M))
        pos += 3 * M
    truth_noise = None
    if flags & FLAG_TRUTH_NOISE:
        truth_noise = (data[pos:pos + M], float(data[pos + M]))
    return EchoSequence(echoes, truth=truth, truth_noise=truth_noise, block_size=r,
                        pad=bool(flags & FLAG_PAD))


# ------------------------------------------------------------------- CSV ---

def write_csv(path, seq: EchoSequence) -> None:
    """Echoes only: header ``gate_0..gate_{K-1}``, one row per echo."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"gate_{k}" for k in range(seq.K)])
        for row in seq.echoes:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path, block_size: int = 20, pad: bool = False) -> EchoSequence:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty CSV file")
    header = rows[0]
    if header != [f"gate_{k}" for k in range(len(header))]:
        raise FormatError("CSV header must be gate_0..gate_{K-1}")
    try:
        y = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise FormatError(f"bad number in CSV: {exc}") from None
    if y.ndim != 2 or y.shape[1] != len(header):
        raise FormatError("CSV rows do not match the header width")
    return EchoSequence(y, block_size=block_size, pad=pad)


def read_echoes(path, block_size: int = 20, pad: bool = False) -> EchoSequence:
    """Read an ALTW or CSV file, chosen by content."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_altw(path)
    return read_csv(path, block_size, pad)


def write_echoes(path, seq: EchoSequence) -> None:
    """Write CSV for ``*.csv`` paths and ALTW otherwise."""
    if str(path).lower().endswith(".csv"):
        write_csv(path, seq)
    else:
        write_altw(path, seq)


# ------------------------------------------------------------------ JSON ---

def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def to_json(obj) -> str:
    """JSON text of any core type (floats round-trip exactly)."""
    return json.dumps({"type": type(obj).__name__, "value": obj.to_dict()}, default=_default)


def from_json(text: str):
    from . import core
    from .hmc import ChainConfig

    d = json.loads(text)
    types = {name: getattr(core, name) for name in
             ("InstrumentConfig", "ParamTrack", "EchoSequence", "NoiseState", "HyperConfig", "FitReport")}
    types["ChainConfig"] = ChainConfig
    try:
        cls = types[d["type"]]
    except KeyError:
        raise FormatError(f"unknown type {d.get('type')!r}") from None
    return cls.from_dict(d["value"])


def save_json(path, obj) -> None:
    Path(path).write_text(to_json(obj))


def load_json(path):
    return from_json(Path(path).read_text())


# --------------------------------------------------------------- reports ---

def write_report(prefix, report: FitReport) -> tuple[str, str]:
    """``<prefix>.csv`` with rows (m, swh, tau, pu, mu) and ``<prefix>.json`` diagnostics.

    The diagnostics file holds the complete report (cost trace, ENL,
    block variances, stop reason, timings and estimator extras).
    """
    prefix = str(prefix)
    csv_path, diag_path = prefix + ".csv", prefix + ".json"
    d = os.path.dirname(csv_path)
    if d:
        os.makedirs(d, exist_ok=True)
    th = report.theta_hat
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "swh", "tau", "pu", "mu"])
        for m in range(th.M):
            w.writerow([m, repr(float(th.swh[m])), repr(float(th.tau[m])), repr(float(th.pu[m])),
                        repr(float(report.noise_hat.mu[m]))])
    save_json(diag_path, report)
    return csv_path, diag_path


def read_report_csv(path) -> np.ndarray:
    """(M, 4) array of swh, tau, pu, mu from a report CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r[k]) for k in ("swh", "tau", "pu", "mu")] for r in rows])


def write_table(path, rows: list[dict]) -> None:
    """Plain CSV table from a list of dicts sharing the same keys."""
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------- chains ---

def write_chain(path, samples) -> None:
    """Sample x parameter float64 matrix behind an ALTC header."""
    x = np.ascontiguousarray(np.atleast_2d(samples), dtype="<f8")
    n, p = x.shape
    Path(path).write_bytes(_pack_header(CHAIN_MAGIC, p, n, 0, 0) + x.tobytes())


def read_chain(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    p, n, _, _ = _read_header(buf, CHAIN_MAGIC)
    if len(buf) != _HEADER.size + 8 * n * p:
        raise FormatError("chain file size does not match its header")
    return np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).astype(float).reshape(n, p)
