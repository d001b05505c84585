"""Correlated probe/conjugate waveform synthesis and waveform file I/O."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import K
from .model import SqueezeParams, covariance_matrix

CHUNK = 1 << 16
CHANNELS = ("probe", "conjugate", "shot_ref", "elec_ref")
CSV_HEADER = ",".join(CHANNELS)
BIN_MAGIC = b"TWQR"
BIN_VERSION = 1
_BIN_HEADER = struct.Struct("<4sBQ")


class WaveformFormatError(ValueError):
    """Malformed waveform file; message names the offending line or byte."""


class WaveformStructureError(ValueError):
    """Channels of unequal length or inconsistent sample counts."""


@dataclass(frozen=True)
class AcquisitionConfig:
    n_samples: int
    sample_rate: float = 1.25e6
    analysis_freq: float = 2.0e6
    if_bandwidth: float = 1.0e6
    rng_seed: int = 0
    filter_enabled: bool = False

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TwinWaveform:
    probe: np.ndarray
    conjugate: np.ndarray
    shot_ref: np.ndarray
    elec_ref: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(getattr(self, c)) for c in CHANNELS}
        if len(lengths) != 1:
            raise WaveformStructureError(f"channel lengths differ: {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.probe)

    def channels(self) -> dict[str, np.ndarray]:
        return {c: getattr(self, c) for c in CHANNELS}


def remove_dc(x: np.ndarray) -> np.ndarray:
    """Subtract the sample mean; already-centred arrays are returned untouched.

    The tolerance makes the operation idempotent so that a centred record
    survives a write/ingest cycle bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x
    m = x.mean()
    scale = float(np.abs(x).max())
    if abs(m) <= 1e-12 * max(scale, 1e-300):
        return x
    return x - m


def gaussian_factor(cov) -> tuple[float, float, float]:
    """Lower-triangular square root ``(a, c, d)`` of a 2x2 covariance.

    ``x = a z1`` and ``y = c z1 + d z2`` have covariance ``cov``.
    """
    cov = np.asarray(cov, dtype=float)
    saa, sab, sbb = cov[0, 0], cov[0, 1], cov[1, 1]
    if not saa > 0:
        raise ValueError(f"covariance[0,0] must be > 0, got {saa}")
    if not math.isclose(cov[0, 1], cov[1, 0], rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("covariance must be symmetric")
    a = math.sqrt(saa)
    c = sab / a
    disc = sbb - sab * sab / saa
    if disc < -1e-12 * max(1.0, sbb):
        raise ValueError(f"covariance is not positive semidefinite (discriminant {disc})")
    return a, c, math.sqrt(max(disc, 0.0))


def _chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def _run_chunks(n: int, fill, workers: int) -> None:
    starts = range(0, n, CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(fill, starts))
    else:
        for s in starts:
            fill(s)


def bivariate_gaussian_sampler(cov, seed: int, n_samples: int, workers: int = 1):
    """Draw ``n_samples`` zero-mean pairs with covariance ``cov``.

    Generated in fixed chunks, each keyed by ``(seed, chunk index)``, so the
    result does not depend on ``workers``.
    """
    a, c, d = gaussian_factor(cov)
    x = np.empty(n_samples)
    y = np.empty(n_samples)

    def fill(start):
        m = min(CHUNK, n_samples - start)
        z = _chunk_rng(seed, start // CHUNK).standard_normal((2, m))
        x[start : start + m] = a * z[0]
        y[start : start + m] = c * z[0] + d * z[1]

    _run_chunks(n_samples, fill, workers)
    return x, y


def filter_pole(cfg: AcquisitionConfig) -> float:
    if cfg.if_bandwidth >= cfg.sample_rate / 2:
        raise ValueError(
            f"if_bandwidth {cfg.if_bandwidth:g} Hz must be below Nyquist ({cfg.sample_rate / 2:g} Hz)"
        )
    return math.exp(-2.0 * math.pi * cfg.if_bandwidth / cfg.sample_rate)


def apply_if_filter(w: np.ndarray, cfg: AcquisitionConfig) -> np.ndarray:
    """Single-pole low-pass at ``if_bandwidth``, gain set to preserve white-noise variance."""
    pole = filter_pole(cfg)
    return K.single_pole(np.asarray(w, dtype=np.float64), pole, math.sqrt(1.0 - pole * pole))


def synthesize(p: SqueezeParams, cfg: AcquisitionConfig, workers: int = 1) -> TwinWaveform:
    model = covariance_matrix(p)
    a, c, d = gaussian_factor(model.cov)
    eps_std = math.sqrt(p.electronic_var)
    n = int(cfg.n_samples)
    out = np.empty((4, n))

    def fill(start):
        m = min(CHUNK, n - start)
        z = _chunk_rng(cfg.rng_seed, start // CHUNK).standard_normal((4, m))
        sl = slice(start, start + m)
        out[0, sl] = a * z[0]
        out[1, sl] = c * z[0] + d * z[1]
        out[2, sl] = z[2]
        out[3, sl] = eps_std * z[3]

    _run_chunks(n, fill, workers)
    chans = []
    for row in out:
        if cfg.filter_enabled:
            row = apply_if_filter(row, cfg)
        chans.append(remove_dc(row))
    meta = {"source": "synthetic", "params": p.to_dict(), "acquisition": cfg.to_dict()}
    return TwinWaveform(*chans, meta=meta)


# ------------------------------------------------------------------ file I/O


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_waveform(w: TwinWaveform, path, fmt: str = "bin") -> Path:
    path = Path(path)
    data = np.column_stack([getattr(w, c) for c in CHANNELS])
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_BIN_HEADER.pack(BIN_MAGIC, BIN_VERSION, len(w)))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown waveform format {fmt!r}")
    sidecar_path(path).write_text(json.dumps(w.meta, indent=2, sort_keys=True))
    return path


def _find_bad_csv_line(path: Path) -> str:
    with open(path) as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 4:
                return f"line {lineno}: expected 4 columns, found {len(parts)}"
            try:
                [float(v) for v in parts]
            except ValueError:
                return f"line {lineno}: non-numeric value in {line.strip()!r}"
    return "unparseable content"


def _read_csv(path: Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
    if header != CSV_HEADER:
        raise WaveformFormatError(f"{path}: line 1: expected header {CSV_HEADER!r}, got {header!r}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    except ValueError:
        msg = _find_bad_csv_line(path)
        if "columns" in msg:
            raise WaveformStructureError(f"{path}: {msg}") from None
        raise WaveformFormatError(f"{path}: {msg}") from None
    if data.size == 0:
        return np.empty((0, 4))
    if data.shape[1] != 4:
        raise WaveformStructureError(f"{path}: expected 4 columns, found {data.shape[1]}")
    return data


def _read_bin(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _BIN_HEADER.size:
        raise WaveformFormatError(f"{path}: byte {len(raw)}: truncated header")
    magic, version, count = _BIN_HEADER.unpack_from(raw)
    if magic != BIN_MAGIC:
        raise WaveformFormatError(f"{path}: byte 0: bad magic {magic!r}")
    if version != BIN_VERSION:
        raise WaveformFormatError(f"{path}: byte 4: unsupported version {version}")
    payload = len(raw) - _BIN_HEADER.size
    if payload % 32:
        raise WaveformStructureError(
            f"{path}: byte {_BIN_HEADER.size + payload - payload % 32}: payload is not a whole number of 4-channel samples"
        )
    if payload // 32 != count:
        raise WaveformStructureError(f"{path}: header declares {count} samples, payload holds {payload // 32}")
    return np.frombuffer(raw, dtype="<f8", offset=_BIN_HEADER.size).reshape(-1, 4).astype(np.float64)


def ingest_waveform(path, fmt: str | None = None) -> TwinWaveform:
    """Load a recorded waveform; channels are mean-subtracted on load."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")
    if fmt == "csv":
        data = _read_csv(path)
    elif fmt == "bin":
        data = _read_bin(path)
    else:
        raise ValueError(f"unknown waveform format {fmt!r}")
    meta = {"source": "external", "path": str(path), "format": fmt,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}
    side = sidecar_path(path)
    if side.exists():
        meta["recorded_meta"] = json.loads(side.read_text())
    chans = [remove_dc(np.ascontiguousarray(data[:, i])) for i in range(4)]
    return TwinWaveform(*chans, meta=meta)
