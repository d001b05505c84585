"""Equal-frequency binning of real samples into n-bit symbols."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import K

DEFAULT_FIT_SIZE = 1_000_000
SOURCES = ("probe", "conjugate", "reconciled", "conditioned", "external")


class BinningError(ValueError):
    """Too few samples, or too few distinct values, to fit the requested bins."""


@dataclass(frozen=True)
class BinningScheme:
    n_bits: int
    edges: np.ndarray
    fit_size: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        if not 1 <= self.n_bits <= 16:
            raise BinningError(f"n_bits must be in 1..16, got {self.n_bits}")
        if edges.shape != ((1 << self.n_bits) - 1,):
            raise BinningError(f"expected {(1 << self.n_bits) - 1} edges, got {edges.shape}")
        if np.any(np.diff(edges) <= 0):
            raise BinningError("edges must be strictly increasing")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return 1 << self.n_bits

    def to_json(self) -> str:
        return json.dumps({"n_bits": self.n_bits, "edges": self.edges.tolist(), "fit_size": self.fit_size})

    @classmethod
    def from_json(cls, text: str) -> "BinningScheme":
        d = json.loads(text)
        return cls(int(d["n_bits"]), np.asarray(d["edges"], dtype=np.float64), int(d["fit_size"]))


@dataclass
class BitStream:
    """Unpacked 0/1 sequence (``uint8``) with provenance."""

    bits: np.ndarray
    n_bits_per_sample: int = 1
    source: str = "external"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")

    def __len__(self) -> int:
        return int(self.bits.size)

    def packed(self) -> bytes:
        return np.packbits(self.bits, bitorder="big").tobytes()

    @classmethod
    def from_packed(cls, data: bytes, n_bits: int, **kw) -> "BitStream":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n_bits, bitorder="big")
        return cls(bits, **kw)

    def to_ascii(self) -> bytes:
        return (self.bits + ord("0")).tobytes()

    def save(self, path, fmt: str = "bin") -> Path:
        """Persist as packed bytes (+ JSON sidecar) or as an ASCII 0/1 file."""
        path = Path(path)
        if fmt == "ascii":
            path.write_bytes(self.to_ascii())
        elif fmt == "bin":
            path.write_bytes(self.packed())
        else:
            raise ValueError(f"unknown bitstream format {fmt!r}")
        side = path.with_name(path.stem + ".meta.json")
        side.write_text(json.dumps({"n_bits": len(self), "n_bits_per_sample": self.n_bits_per_sample,
                                    "source": self.source, "format": fmt, **self.meta}, sort_keys=True))
        return path

    @classmethod
    def load(cls, path, fmt: str | None = None) -> "BitStream":
        path = Path(path)
        side = path.with_name(path.stem + ".meta.json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        fmt = fmt or meta.get("format") or ("ascii" if path.suffix == ".txt" else "bin")
        raw = path.read_bytes()
        if fmt == "ascii":
            arr = np.frombuffer(raw, dtype=np.uint8)
            arr = arr[(arr == ord("0")) | (arr == ord("1"))] - ord("0")
            bits = arr
        else:
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=meta.get("n_bits"), bitorder="big")
        return cls(bits, n_bits_per_sample=meta.get("n_bits_per_sample", 1), source=meta.get("source", "external"))


def edges_from_sorted(sorted_samples: np.ndarray, n_bits: int) -> np.ndarray:
    """Quantiles at ranks k/2^n with linear interpolation between order statistics."""
    n = sorted_samples.size
    pos = (n - 1) * np.arange(1, 1 << n_bits) / (1 << n_bits)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    return sorted_samples[lo] + frac * (sorted_samples[hi] - sorted_samples[lo])


def fit_bins(samples, n_bits: int, *, min_per_bin: int = 16, sorted_input: bool = False) -> BinningScheme:
    x = np.asarray(samples, dtype=np.float64)
    if not 1 <= n_bits <= 16:
        raise BinningError(f"n_bits must be in 1..16, got {n_bits}")
    need = (1 << n_bits) * min_per_bin
    if x.size < need:
        raise BinningError(f"{x.size} samples cannot fit {1 << n_bits} bins (need >= {need})")
    s = x if sorted_input else np.sort(x)
    n_distinct = 1 + int(np.count_nonzero(np.diff(s)))
    edges = edges_from_sorted(s, n_bits)
    bad = np.flatnonzero(np.diff(edges) <= 0)
    if n_distinct < (1 << n_bits) or bad.size:
        k = int(bad[0]) + 2 if bad.size else 1
        raise BinningError(
            f"degenerate fit: {n_distinct} distinct values for {1 << n_bits} bins; "
            f"quantile {k}/{1 << n_bits} collides with its neighbour"
        )
    return BinningScheme(n_bits, edges, int(x.size))


def encode_symbols(samples, scheme: BinningScheme) -> np.ndarray:
    """Bin index per sample; values equal to an edge go to the upper bin."""
    return K.encode_symbols(np.asarray(samples, dtype=np.float64), scheme.edges)


def encode(samples, scheme: BinningScheme, source: str = "external") -> BitStream:
    """Bin indices as ``n_bits`` binary digits per sample, most significant first."""
    bits = K.encode_bits(np.asarray(samples, dtype=np.float64), scheme.edges, scheme.n_bits)
    return BitStream(bits, n_bits_per_sample=scheme.n_bits, source=source)
