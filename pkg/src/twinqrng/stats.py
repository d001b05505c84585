"""Correlation diagnostics and a native subset of the SP 800-22 battery.

The battery covers Frequency, BlockFrequency, CumulativeSums, Runs,
LongestRun, FFT (spectral), ApproximateEntropy and Serial.  Remaining
tests of the full suite run externally on the ASCII export.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from ._kernels import K
from .extractor import BitStream

ALPHA = 0.01
UNIFORMITY_ALPHA = 1e-4
MIN_SEQ_LEN = 100_000


class StatsError(ValueError):
    """Degenerate input or invalid battery configuration."""


@dataclass(frozen=True)
class CorrelationProfile:
    lags: np.ndarray
    coefficients: np.ndarray

    def at(self, lag: int) -> float:
        return float(self.coefficients[np.flatnonzero(self.lags == lag)[0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("lag,coefficient\n")
        for lag, c in zip(self.lags.tolist(), self.coefficients.tolist()):
            buf.write(f"{lag},{c!r}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class

    test_name: str
    p_values: tuple[float, ...]
    proportion_passed: float
    uniformity_p: float

    @property
    def min_proportion(self) -> float:
        return proportion_threshold(len(self.p_values))

    @property
    def passed(self) -> bool:
        return self.proportion_passed >= self.min_proportion and self.uniformity_p >= UNIFORMITY_ALPHA

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_values"] = list(self.p_values)
        return d


# ----------------------------------------------------------------- correlation


def _pearson_lagged(a: np.ndarray, b: np.ndarray, lags, dot) -> np.ndarray:
    """Pearson coefficient of (a[i], b[i+lag]) over the overlap, per lag.

    Overlap sums are whole-array totals minus the few trimmed end samples,
    so no prefix-sum arrays are allocated.
    """
    n = a.size
    sum_a, sum_b = float(np.sum(a, dtype=np.float64)), float(np.sum(b, dtype=np.float64))
    sq_a, sq_b = float(dot(a, a)), float(dot(b, b))

    def trimmed(x, total, sq, lo, hi):
        edges = np.concatenate([x[:lo], x[hi:]]).astype(np.float64)
        return total - edges.sum(), sq - float(edges @ edges)

    out = np.empty(len(lags))
    for j, lag in enumerate(lags):
        if lag >= 0:
            (a0, a1), (b0, b1) = (0, n - lag), (lag, n)
        else:
            (a0, a1), (b0, b1) = (-lag, n), (0, n + lag)
        m = a1 - a0
        sa, qa = trimmed(a, sum_a, sq_a, a0, a1)
        sb, qb = trimmed(b, sum_b, sq_b, b0, b1)
        sab = dot(a[a0:a1], b[b0:b1]) - sa * sb / m
        saa = qa - sa * sa / m
        sbb = qb - sb * sb / m
        if saa <= 0 or sbb <= 0:
            raise StatsError(f"zero-variance segment at lag {lag}")
        out[j] = sab / math.sqrt(saa * sbb)
    return np.clip(out, -1.0, 1.0)


def cross_correlation(a, b, max_lag: int) -> CorrelationProfile:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise StatsError(f"length mismatch: {a.size} vs {b.size}")
    if a.size <= 10 * max_lag:
        raise StatsError(f"need more than {10 * max_lag} samples for max_lag={max_lag}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise StatsError("zero-variance input")
    # centring first keeps the sum-of-products formula well conditioned
    a = a - a.mean()
    b = b - b.mean()
    lags = np.arange(-max_lag, max_lag + 1)
    return CorrelationProfile(lags, _pearson_lagged(a, b, lags, np.dot))


def _exact_pm1_dot(x: np.ndarray, y: np.ndarray) -> float:
    # float32 partial sums of +-1 products are exact below 2**24
    step = 1 << 23
    total = 0
    for s in range(0, x.size, step):
        total += int(np.dot(x[s : s + step], y[s : s + step]))
    return float(total)


def bit_autocorrelation(bits, max_lag: int) -> CorrelationProfile:
    b = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    if b.size < 10_000:
        raise StatsError(f"need at least 10^4 bits, got {b.size}")
    if b.min() == b.max():
        raise StatsError("constant bit sequence")
    x = b.astype(np.float32)
    x *= 2
    x -= 1
    lags = np.arange(1, max_lag + 1)
    return CorrelationProfile(lags, _pearson_lagged(x, x, lags, _exact_pm1_dot))


# ---------------------------------------------------------------- NIST tests


def frequency_test(bits: np.ndarray) -> float:
    n = bits.size
    s = 2 * int(np.count_nonzero(bits)) - n
    return float(erfc(abs(s) / math.sqrt(n) / math.sqrt(2)))


def block_frequency_test(bits: np.ndarray, block: int = 128) -> float:
    nblocks = bits.size // block
    pi = bits[: nblocks * block].reshape(nblocks, block).sum(axis=1, dtype=np.int64) / block
    chi2 = 4.0 * block * float(np.sum((pi - 0.5) ** 2))
    return float(gammaincc(nblocks / 2.0, chi2 / 2.0))


def cumulative_sums_test(bits: np.ndarray, reverse: bool = False) -> float:
    n = bits.size
    x = bits.astype(np.int64) * 2 - 1
    if reverse:
        x = x[::-1]
    z = int(np.abs(np.cumsum(x)).max())
    if z == 0:
        return 1.0
    sq = math.sqrt(n)
    k1 = np.arange(math.trunc((-n / z + 1) / 4), math.trunc((n / z - 1) / 4) + 1)
    k2 = np.arange(math.trunc((-n / z - 3) / 4), math.trunc((n / z - 1) / 4) + 1)
    s1 = np.sum(norm.cdf((4 * k1 + 1) * z / sq) - norm.cdf((4 * k1 - 1) * z / sq))
    s2 = np.sum(norm.cdf((4 * k2 + 3) * z / sq) - norm.cdf((4 * k2 + 1) * z / sq))
    return float(min(max(1.0 - s1 + s2, 0.0), 1.0))


def runs_test(bits: np.ndarray) -> float:
    n = bits.size
    pi = np.count_nonzero(bits) / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    return float(erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi))))


_LONGEST_RUN_TABLES = (
    # (min n, block length, class lower edge, class probabilities)
    (750_000, 10_000, 10, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, 4, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, 1, (0.2148, 0.3672, 0.2305, 0.2266)),
)


def longest_run_test(bits: np.ndarray) -> float:
    n = bits.size
    for min_n, block, low, probs in _LONGEST_RUN_TABLES:
        if n >= min_n:
            break
    else:
        raise StatsError(f"longest-run test needs at least 128 bits, got {n}")
    runs = K.longest_runs(bits, block)
    classes = np.clip(runs, low, low + len(probs) - 1) - low
    v = np.bincount(classes, minlength=len(probs))
    expected = runs.size * np.asarray(probs)
    chi2 = float(np.sum((v - expected) ** 2 / expected))
    return float(gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0))


def spectral_test(bits: np.ndarray) -> float:
    n = bits.size
    x = bits.astype(np.float64) * 2 - 1
    mod = np.abs(np.fft.rfft(x)[: n // 2])
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2
    n1 = int(np.count_nonzero(mod < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return float(erfc(abs(d) / math.sqrt(2)))


def _marginal_counts(counts: np.ndarray) -> np.ndarray:
    """Cyclic (m-1)-pattern counts from cyclic m-pattern counts."""
    return counts.reshape(-1, 2).sum(axis=1)


def _pattern_table(bits: np.ndarray, m: int) -> dict[int, np.ndarray]:
    table = {m: K.pattern_counts(bits, m)}
    for k in range(m - 1, 0, -1):
        table[k] = _marginal_counts(table[k + 1])
    return table


def approximate_entropy_test(bits: np.ndarray, m: int = 2, table=None) -> float:
    n = bits.size
    table = table or _pattern_table(bits, m + 1)

    def phi(k):
        c = table[k][table[k] > 0] / n
        return float(np.sum(c * np.log(c)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def serial_test(bits: np.ndarray, m: int = 3, table=None) -> tuple[float, float]:
    n = bits.size
    table = table or _pattern_table(bits, m)

    def psi2(k):
        if k <= 0:
            return 0.0
        v = table[k].astype(np.float64)
        return (2**k / n) * float(np.sum(v * v)) - n

    d1 = psi2(m) - psi2(m - 1)
    d2 = psi2(m) - 2 * psi2(m - 1) + psi2(m - 2)
    return float(gammaincc(2 ** (m - 2), d1 / 2.0)), float(gammaincc(2 ** (m - 3), d2 / 2.0))


TEST_NAMES = (
    "Frequency",
    "BlockFrequency",
    "CumulativeSums-forward",
    "CumulativeSums-reverse",
    "Runs",
    "LongestRun",
    "FFT",
    "ApproximateEntropy",
    "Serial-1",
    "Serial-2",
)


def run_tests(bits: np.ndarray, *, block: int = 128, apen_m: int = 2, serial_m: int = 3) -> dict[str, float]:
    """All native tests on one sequence, keyed by :data:`TEST_NAMES`."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    table = _pattern_table(bits, max(apen_m + 1, serial_m))
    s1, s2 = serial_test(bits, serial_m, table)
    return {
        "Frequency": frequency_test(bits),
        "BlockFrequency": block_frequency_test(bits, block),
        "CumulativeSums-forward": cumulative_sums_test(bits),
        "CumulativeSums-reverse": cumulative_sums_test(bits, reverse=True),
        "Runs": runs_test(bits),
        "LongestRun": longest_run_test(bits),
        "FFT": spectral_test(bits),
        "ApproximateEntropy": approximate_entropy_test(bits, apen_m, table),
        "Serial-1": s1,
        "Serial-2": s2,
    }


def proportion_threshold(n_sequences: int, alpha: float = ALPHA) -> float:
    """Lower edge of the three-sigma band around ``1 - alpha``."""
    p = 1.0 - alpha
    return p - 3.0 * math.sqrt(p * alpha / n_sequences)


def uniformity_p(p_values) -> float:
    """Chi-square goodness of fit of the p-values to U(0,1) over 10 bins."""
    p = np.asarray(p_values, dtype=np.float64)
    counts = np.bincount(np.minimum((p * 10).astype(np.int64), 9), minlength=10)
    expected = p.size / 10
    chi2 = float(np.sum((counts - expected) ** 2) / expected)
    return float(gammaincc(4.5, chi2 / 2.0))


def run_battery(bits, seq_len: int = 1_000_000, n_sequences: int = 40, *, workers: int = 1,
                min_seq_len: int = MIN_SEQ_LEN) -> list[TestOutcome]:
    b = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    if seq_len < min_seq_len:
        raise StatsError(f"seq_len {seq_len} is below {min_seq_len}")
    if n_sequences < 1 or b.size < seq_len * n_sequences:
        raise StatsError(f"{b.size} bits cannot supply {n_sequences} sequences of {seq_len}")
    seqs = [b[i * seq_len : (i + 1) * seq_len] for i in range(n_sequences)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run_tests, seqs))
    else:
        results = [run_tests(s) for s in seqs]
    out = []
    for name in TEST_NAMES:
        ps = tuple(r[name] for r in results)
        prop = sum(p >= ALPHA for p in ps) / len(ps)
        out.append(TestOutcome(name, ps, prop, uniformity_p(ps)))
    return out


# ------------------------------------------------------------------- export


def export_ascii(bits, path) -> Path:
    """One ``0``/``1`` character per bit, no separators."""
    b = bits if isinstance(bits, BitStream) else BitStream(bits)
    path = Path(path)
    path.write_bytes(b.to_ascii())
    return path


def outcomes_to_json(outcomes) -> str:
    return json.dumps([o.to_dict() for o in outcomes], indent=2)


def outcomes_to_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["test", "proportion", "uniformity_p"])
    for o in outcomes:
        w.writerow([o.test_name, repr(o.proportion_passed), repr(o.uniformity_p)])
    return buf.getvalue()
