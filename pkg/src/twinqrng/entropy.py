"""Plug-in Shannon entropy and effective (quantum-attributable) entropy."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .extractor import BinningError, BinningScheme, encode_symbols, fit_bins

log = logging.getLogger(__name__)

REPORT_FIELDS = ("n_bits", "h_signal", "h_classical", "h_effective", "sample_count")


@dataclass(frozen=True)
class EntropyReport:
    n_bits: int
    h_signal: float
    h_classical: float
    h_effective: float
    sample_count: int


def entropy_from_counts(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0


def shannon_entropy(symbols, alphabet_size: int) -> float:
    """Entropy of the empirical symbol distribution, in bits per symbol."""
    s = np.asarray(symbols)
    if s.size == 0:
        raise BinningError("cannot estimate entropy of an empty stream")
    if s.min() < 0 or s.max() >= alphabet_size:
        raise ValueError(f"symbols must lie in [0, {alphabet_size})")
    return entropy_from_counts(np.bincount(s.astype(np.int64, copy=False), minlength=alphabet_size))


def _report(n_bits, scheme, signal, classical_scheme, classical) -> EntropyReport:
    h_sig = shannon_entropy(encode_symbols(signal, scheme), scheme.n_bins)
    h_cls = shannon_entropy(encode_symbols(classical, classical_scheme), scheme.n_bins)
    h_eff = h_sig - h_cls
    if h_eff < 0:
        warnings.warn(f"negative effective entropy {h_eff:.4f} at n_bits={n_bits}; clipped to 0", stacklevel=3)
        h_eff = 0.0
    return EntropyReport(n_bits, h_sig, h_cls, h_eff, int(np.asarray(signal).size))


class _Fitter:
    """Sorts the fit data once and hands out nested equal-frequency schemes."""

    def __init__(self, samples, fit_size, min_per_bin=16):
        x = np.asarray(samples, dtype=np.float64)
        fit = x if fit_size is None else x[:fit_size]
        self.sorted = np.sort(fit)
        self.min_per_bin = min_per_bin

    def scheme(self, n_bits) -> BinningScheme:
        return fit_bins(self.sorted, n_bits, min_per_bin=self.min_per_bin, sorted_input=True)


def _check_sizes(signal, classical):
    if np.asarray(signal).size == 0 or np.asarray(classical).size == 0:
        raise BinningError("signal and classical samples must be non-empty")
    if np.asarray(signal).size != np.asarray(classical).size:
        warnings.warn("signal and classical sample counts differ; entropies are not like-for-like", stacklevel=3)


def effective_entropy(signal_samples, classical_samples, n_bits: int, *, fit_size: int | None = None,
                      classical_edges: str = "signal") -> EntropyReport:
    """Entropy of the signal minus entropy of the classical noise.

    Both streams are binned with edges fitted on the signal (first
    ``fit_size`` samples, all when None).  ``classical_edges="classical"``
    fits the noise on its own edges instead, for comparison.
    """
    _check_sizes(signal_samples, classical_samples)
    scheme = _Fitter(signal_samples, fit_size).scheme(n_bits)
    cscheme = scheme if classical_edges == "signal" else fit_bins(classical_samples, n_bits)
    return _report(n_bits, scheme, signal_samples, cscheme, classical_samples)


def entropy_curve(signal_samples, classical_samples, n_bits_range, *, fit_size: int | None = None,
                  classical_edges: str = "signal") -> list[EntropyReport]:
    n_bits_range = list(n_bits_range)
    if not n_bits_range or min(n_bits_range) < 1 or max(n_bits_range) > 12:
        raise ValueError("n_bits_range must be a non-empty subset of [1, 12]")
    _check_sizes(signal_samples, classical_samples)
    fitter = _Fitter(signal_samples, fit_size)
    cfitter = _Fitter(classical_samples, None) if classical_edges != "signal" else None
    out = []
    for n in n_bits_range:
        scheme = fitter.scheme(n)
        cscheme = scheme if cfitter is None else cfitter.scheme(n)
        out.append(_report(n, scheme, signal_samples, cscheme, classical_samples))
    return out


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow([r.n_bits, repr(r.h_signal), repr(r.h_classical), repr(r.h_effective), r.sample_count])
    return buf.getvalue()


def report_dict(r: EntropyReport) -> dict:
    return asdict(r)


def calibrate_electronic_var(params, target_h: float, n_bits: int = 8, *, n_samples: int = 10**6,
                             seed: int = 0, grid=None, refine: int = 2):
    """Brute-force sweep of the electronic noise variance.

    For each candidate variance the probe channel is resynthesized, binned
    on its own equal-frequency edges, and the electronic reference stream is
    binned on those edges.  The grid is scanned exhaustively, then rescanned
    on a finer grid around the best point ``refine`` times.  Returns
    ``(electronic_var, h_classical)``.
    """
    from dataclasses import replace

    from .synth import AcquisitionConfig, synthesize

    grid = np.geomspace(1e-5, 1.0, 26) if grid is None else np.asarray(grid, dtype=float)
    cfg = AcquisitionConfig(n_samples=n_samples, rng_seed=seed)

    def h_at(eps):
        w = synthesize(replace(params, electronic_var=float(eps)), cfg)
        return effective_entropy(w.probe, w.elec_ref, n_bits).h_classical

    best = None
    for level in range(refine + 1):
        scores = [(abs(h_at(e) - target_h), float(e)) for e in grid]
        _, best = min(scores)
        log.debug("calibration level %d: best eps=%g", level, best)
        i = int(np.argmin([s for s, _ in scores]))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        grid = np.linspace(lo, hi, 21)
    return best, h_at(best)
