"""SHA-512 conditioning of reconciled bits at a fixed compression ratio."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .extractor import BitStream

DIGEST_BITS = 512
DEFAULT_GEOMETRY = (1280, 512)  # 3.2 output bits per 8-bit sample
DEFAULT_SAFETY = 0.6


class ConditioningError(ValueError):
    pass


def _check_geometry(in_block_bits: int, out_block_bits: int) -> None:
    if not 0 < out_block_bits <= DIGEST_BITS:
        raise ConditioningError(f"out_block_bits must be in 1..{DIGEST_BITS}, got {out_block_bits}")
    if in_block_bits < out_block_bits:
        raise ConditioningError("in_block_bits must be at least out_block_bits")


def _hash_blocks(bits: np.ndarray, in_block_bits: int, out_block_bits: int) -> np.ndarray:
    nblocks = bits.size // in_block_bits
    if nblocks == 0:
        return np.empty(0, dtype=np.uint8)
    blocks = bits[: nblocks * in_block_bits].reshape(nblocks, in_block_bits)
    packed = np.packbits(blocks, axis=1, bitorder="big")
    out_bytes = -(-out_block_bits // 8)
    digests = bytearray(nblocks * out_bytes)
    sha = hashlib.sha512
    for i, row in enumerate(packed):
        digests[i * out_bytes : (i + 1) * out_bytes] = sha(row.tobytes()).digest()[:out_bytes]
    out = np.unpackbits(np.frombuffer(bytes(digests), dtype=np.uint8).reshape(nblocks, out_bytes), axis=1,
                        bitorder="big")
    return np.ascontiguousarray(out[:, :out_block_bits]).ravel()


def condition(bits: BitStream, in_block_bits: int = DEFAULT_GEOMETRY[0],
              out_block_bits: int = DEFAULT_GEOMETRY[1]) -> BitStream:
    """Hash consecutive ``in_block_bits`` blocks and keep ``out_block_bits`` of each digest.

    A trailing partial block is discarded.
    """
    _check_geometry(in_block_bits, out_block_bits)
    if len(bits) < in_block_bits:
        raise ConditioningError(f"{len(bits)} input bits is shorter than one {in_block_bits}-bit block")
    return BitStream(_hash_blocks(bits.bits, in_block_bits, out_block_bits), 1, "conditioned")


class StreamingConditioner:
    """Incremental :func:`condition`: feed bits in pieces, get the same output."""

    def __init__(self, in_block_bits: int = DEFAULT_GEOMETRY[0], out_block_bits: int = DEFAULT_GEOMETRY[1]):
        _check_geometry(in_block_bits, out_block_bits)
        self.in_block_bits = in_block_bits
        self.out_block_bits = out_block_bits
        self._carry = np.empty(0, dtype=np.uint8)
        self.bits_in = 0
        self.bits_out = 0

    def update(self, bits: np.ndarray) -> np.ndarray:
        self.bits_in += bits.size
        buf = np.concatenate([self._carry, bits]) if self._carry.size else bits
        usable = buf.size - buf.size % self.in_block_bits
        out = _hash_blocks(buf[:usable], self.in_block_bits, self.out_block_bits)
        self._carry = buf[usable:].copy()
        self.bits_out += out.size
        return out

    @property
    def discarded(self) -> int:
        return int(self._carry.size)


def choose_ratio(h_effective: float, n_bits: int, safety: float = DEFAULT_SAFETY) -> tuple[int, int]:
    """Block geometry with ``out/in <= safety * h_effective / n_bits``.

    The output block is one full digest; the input block is rounded up to
    whole bytes.
    """
    if not h_effective > 0:
        raise ConditioningError(f"h_effective must be > 0, got {h_effective}")
    if h_effective > n_bits + 1e-9:
        raise ConditioningError(f"h_effective {h_effective} exceeds n_bits {n_bits}")
    if not 0 < safety <= 1:
        raise ConditioningError(f"safety must lie in (0, 1], got {safety}")
    bound = safety * h_effective / n_bits
    # relative slack absorbs float noise such as 512 / 0.1 = 5120.000000000001
    in_bits = math.ceil(DIGEST_BITS / bound * (1 - 1e-12))
    in_bits = -(-in_bits // 8) * 8
    return in_bits, DIGEST_BITS
