"""Common-bit post-selection of two correlated bit streams."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from ._kernels import K
from .extractor import BitStream


class ReconcileError(ValueError):
    pass


@dataclass
class Reconciliation:
    kept: BitStream
    mask: np.ndarray  # boolean, one entry per input bit
    agreement_rate: float

    @property
    def indices(self) -> np.ndarray:
        return K.mask_indices(self.mask, 0)


def common_bits(a: BitStream, b: BitStream, granularity: str = "bit") -> Reconciliation:
    """Keep the positions where both streams agree.

    ``granularity="symbol"`` keeps a sample's bits only when the whole
    ``n_bits_per_sample`` group agrees.
    """
    if len(a) != len(b):
        raise ReconcileError(f"length mismatch: {len(a)} vs {len(b)} bits")
    if a.n_bits_per_sample != b.n_bits_per_sample:
        raise ReconcileError("streams use different bits per sample")
    if granularity == "bit":
        kept, mask = K.common_bits(a.bits, b.bits)
    elif granularity == "symbol":
        w = a.n_bits_per_sample
        if len(a) % w:
            raise ReconcileError("symbol granularity needs whole samples")
        same = (a.bits == b.bits).reshape(-1, w).all(axis=1)
        mask = np.repeat(same, w)
        kept = a.bits[mask]
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    rate = kept.size / len(a) if len(a) else 1.0
    return Reconciliation(BitStream(kept, 1, "reconciled"), mask, rate)


def apply_mask(bits: BitStream, indices) -> BitStream:
    """What the counterpart computes from its own stream and the disclosed positions."""
    return BitStream(bits.bits[np.asarray(indices, dtype=np.int64)], 1, "reconciled")


def write_mask(indices, path) -> Path:
    path = Path(path)
    np.asarray(indices, dtype="<u8").tofile(path)
    return path


def read_mask(path) -> np.ndarray:
    return np.fromfile(path, dtype="<u8")


def expected_agreement(rho: float, n_bits: int, *, n_pairs: int = 10**6, seed: int = 0) -> float:
    """Monte-Carlo per-bit agreement of two rho-correlated, independently binned Gaussians.

    Each variable is binned on the population quantiles of its own
    (standard normal) marginal.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, n_pairs))
    x = z[0]
    y = rho * z[0] + np.sqrt(1.0 - rho * rho) * z[1]
    edges = norm.ppf(np.arange(1, 1 << n_bits) / (1 << n_bits))
    a = K.encode_bits(x, edges, n_bits)
    b = K.encode_bits(y, edges, n_bits)
    return float(np.count_nonzero(a == b) / a.size)
