"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical output.  The compiled
path is used unless ``TWINQRNG_BACKEND=numpy`` is set in the environment
(or numba cannot be imported).  Both implementations stay importable as
``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so tests and benchmarks can compare
them directly.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np
from scipy.signal import lfilter

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


# ---------------------------------------------------------------- numpy path


def _np_encode_bits(samples, edges, n_bits):
    sym = np.searchsorted(edges, samples, side="right")
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    return ((sym[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def _np_encode_symbols(samples, edges):
    return np.searchsorted(edges, samples, side="right").astype(np.int64)


def _np_common_bits(a, b):
    mask = a == b
    return a[mask], mask


def _np_mask_indices(mask, offset):
    return np.flatnonzero(mask).astype(np.uint64) + np.uint64(offset)


def _np_single_pole(x, pole, gain):
    return lfilter([gain], [1.0, -pole], x)


def _np_pattern_counts(bits, m):
    """Overlapping m-bit pattern counts with wrap-around."""
    n = bits.size
    ext = bits[np.arange(n + m - 1) % n].astype(np.int64)
    v = np.zeros(n, dtype=np.int64)
    for j in range(m):
        v = (v << 1) | ext[j : j + n]
    return np.bincount(v, minlength=1 << m)


def _np_longest_runs(bits, block):
    nblocks = bits.size // block
    rows = bits[: nblocks * block].reshape(nblocks, block)
    padded = np.zeros((nblocks, block + 2), dtype=np.uint8)
    padded[:, 1:-1] = rows
    zeros = np.flatnonzero(padded.ravel() == 0)
    gaps = np.diff(zeros) - 1
    owner = zeros[:-1] // (block + 2)
    out = np.zeros(nblocks, dtype=np.int64)
    np.maximum.at(out, owner, gaps)
    return out


NUMPY_KERNELS = SimpleNamespace(
    name="numpy",
    encode_bits=_np_encode_bits,
    encode_symbols=_np_encode_symbols,
    common_bits=_np_common_bits,
    mask_indices=_np_mask_indices,
    single_pole=_np_single_pole,
    pattern_counts=_np_pattern_counts,
    longest_runs=_np_longest_runs,
)


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _lookup_table(edges):
        # Uniform grid over the edge range, fine enough that a cell holds at
        # most one edge; each cell stores the bin index at its left boundary.
        m = edges.shape[0]
        lo = edges[0]
        span = edges[m - 1] - lo
        if m < 2 or span <= 0:
            return np.full(1, _search(edges[0], edges), dtype=np.int32), lo, 0.0
        gap = np.min(edges[1:] - edges[:-1])
        ratio = span / gap * 8.0 if gap > 0 else np.inf
        cells = int(min(ratio + 2.0, 4194304.0))  # cap at 2**22 cells
        inv = (cells - 1) / span
        tab = np.empty(cells, dtype=np.int32)
        for c in range(cells):
            tab[c] = _search(lo + c / inv, edges)
        return tab, lo, inv

    @njit(cache=True)
    def _search(x, edges):
        lo = 0
        hi = edges.shape[0]
        while lo < hi:
            mid = (lo + hi) >> 1
            if x < edges[mid]:
                hi = mid
            else:
                lo = mid + 1
        return lo

    @njit(cache=True)
    def _nb_encode_symbols(samples, edges):
        # number of edges <= x, i.e. searchsorted(side="right"); NaN sorts last
        n = samples.shape[0]
        m = edges.shape[0]
        tab, lo, inv = _lookup_table(edges)
        top = tab.shape[0] - 1
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            x = samples[i]
            if x != x:
                out[i] = m
                continue
            c = (x - lo) * inv
            if c < 0.0:
                c = 0.0
            if c > top:
                c = float(top)
            k = tab[int(c)]
            while k < m and x >= edges[k]:
                k += 1
            while k > 0 and x < edges[k - 1]:
                k -= 1
            out[i] = k
        return out

    @njit(cache=True)
    def _nb_expand_bits(symbols, n_bits):
        n = symbols.shape[0]
        out = np.empty(n * n_bits, dtype=np.uint8)
        for i in range(n):
            k = symbols[i]
            base = i * n_bits
            for j in range(n_bits):
                out[base + j] = (k >> (n_bits - 1 - j)) & 1
        return out

    def _nb_encode_bits(samples, edges, n_bits):
        return _nb_expand_bits(_nb_encode_symbols(samples, edges), n_bits)

    @njit(cache=True)
    def _nb_common_bits(a, b):
        n = a.shape[0]
        mask = np.empty(n, dtype=np.bool_)
        kept = np.empty(n, dtype=a.dtype)
        k = 0
        for i in range(n):
            same = a[i] == b[i]
            mask[i] = same
            kept[k] = a[i]
            k += same
        return kept[:k].copy(), mask

    @njit(cache=True)
    def _nb_mask_indices(mask, offset):
        out = np.empty(mask.shape[0], dtype=np.uint64)
        k = 0
        for i in range(mask.shape[0]):
            out[k] = i + offset
            k += mask[i]
        return out[:k].copy()

    @njit(cache=True)
    def _nb_single_pole(x, pole, gain):
        out = np.empty(x.shape[0], dtype=np.float64)
        y = 0.0
        for i in range(x.shape[0]):
            y = pole * y + gain * x[i]
            out[i] = y
        return out

    @njit(cache=True)
    def _nb_pattern_counts(bits, m):
        n = bits.shape[0]
        counts = np.zeros(1 << m, dtype=np.int64)
        mask = (1 << m) - 1
        v = 0
        for j in range(m - 1):
            v = (v << 1) | bits[j % n]
        for i in range(n):
            v = ((v << 1) | bits[(i + m - 1) % n]) & mask
            counts[v] += 1
        return counts

    @njit(cache=True)
    def _nb_longest_runs(bits, block):
        nblocks = bits.shape[0] // block
        out = np.zeros(nblocks, dtype=np.int64)
        for b in range(nblocks):
            run = 0
            best = 0
            for i in range(b * block, (b + 1) * block):
                if bits[i]:
                    run += 1
                    if run > best:
                        best = run
                else:
                    run = 0
            out[b] = best
        return out

    def _nb_single_pole_wrapped(x, pole, gain):
        return _nb_single_pole(np.ascontiguousarray(x, dtype=np.float64), float(pole), float(gain))

    def _nb_pattern_counts_wrapped(bits, m):
        return _nb_pattern_counts(np.ascontiguousarray(bits, dtype=np.uint8), int(m))

    NUMBA_KERNELS = SimpleNamespace(
        name="numba",
        encode_bits=lambda s, e, n: _nb_encode_bits(
            np.ascontiguousarray(s, dtype=np.float64), np.ascontiguousarray(e, dtype=np.float64), int(n)
        ),
        encode_symbols=lambda s, e: _nb_encode_symbols(
            np.ascontiguousarray(s, dtype=np.float64), np.ascontiguousarray(e, dtype=np.float64)
        ),
        common_bits=lambda a, b: _nb_common_bits(np.ascontiguousarray(a), np.ascontiguousarray(b)),
        mask_indices=lambda m, off: _nb_mask_indices(np.ascontiguousarray(m, dtype=np.bool_), int(off)),
        single_pole=_nb_single_pole_wrapped,
        pattern_counts=_nb_pattern_counts_wrapped,
        longest_runs=lambda bits, block: _nb_longest_runs(np.ascontiguousarray(bits, dtype=np.uint8), int(block)),
    )
else:  # pragma: no cover
    NUMBA_KERNELS = None


def select_backend(name: str | None = None):
    """Kernel namespace for ``name`` ("numba" or "numpy"), or the env default."""
    name = (name or os.environ.get("TWINQRNG_BACKEND", "numba")).lower()
    if name == "numpy" or NUMBA_KERNELS is None:
        return NUMPY_KERNELS
    if name != "numba":
        raise ValueError(f"unknown kernel backend {name!r}")
    return NUMBA_KERNELS


K = select_backend()
