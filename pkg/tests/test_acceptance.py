"""End-to-end acceptance checks at their stated tolerances.

Each check appends one PASS/FAIL line to the session log, printed in the
terminal summary, before asserting.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from twinqrng.config import DEFAULT_EXCESS_VAR, default_config
from twinqrng.entropy import calibrate_electronic_var, entropy_curve, shannon_entropy
from twinqrng.extractor import BitStream, encode_symbols, fit_bins
from twinqrng.model import (
    SqueezeParams,
    diff_noise_from_covariance,
    ideal_diff_noise,
    individual_noise,
    lossy_diff_noise,
    to_db,
)
from twinqrng.pipeline import TIMING_NAME, run_pipeline
from twinqrng.stats import cross_correlation, frequency_test, run_battery, runs_test
from twinqrng.synth import AcquisitionConfig, synthesize

pytestmark = pytest.mark.acceptance

GAIN, ETA = 11.5, 0.78
FULL_SAMPLES = 21_000_000  # enough reconciled bits for 40 conditioned 10^6-bit sequences


def record(log, number, ok, detail):
    log.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("reference_run")
    t0 = time.perf_counter()
    report = run_pipeline(default_config(n_samples=FULL_SAMPLES, seed=1, directory=str(out)))
    return out, report, time.perf_counter() - t0


def test_c01_squeezing_oracle(acceptance_log):
    lossy = to_db(lossy_diff_noise(SqueezeParams(GAIN, eta_probe=ETA, eta_conj=ETA)))
    ideal = to_db(ideal_diff_noise(GAIN))
    ok = abs(lossy + 5.93) <= 0.01 and abs(ideal + 13.42) <= 0.01
    record(acceptance_log, 1, ok, f"lossy {lossy:.4f} dB (target -5.93), lossless {ideal:.4f} dB (target -13.42)")


def test_c02_individual_noise(acceptance_log):
    db = individual_noise(SqueezeParams(GAIN, eta_probe=ETA, eta_conj=ETA)).probe_db
    record(acceptance_log, 2, abs(db - 12.40) <= 0.01, f"individual noise {db:.4f} dB (target 12.40)")


def test_c03_loss_model_consistency(acceptance_log):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        p = SqueezeParams(rng.uniform(1, 30), eta_probe=rng.uniform(0.05, 1), eta_conj=rng.uniform(0.05, 1))
        ref = lossy_diff_noise(p)
        worst = max(worst, abs(diff_noise_from_covariance(p) - ref) / abs(ref))
    dt = time.perf_counter() - t0
    record(acceptance_log, 3, worst <= 1e-9 and dt < 1.0,
           f"max relative deviation {worst:.2e} over 1000 draws in {dt:.3f} s")


def test_c04_correlation(acceptance_log):
    t0 = time.perf_counter()
    cfg = default_config(n_samples=10**7, seed=3)
    w = synthesize(cfg.squeeze, cfg.acquisition)
    prof = cross_correlation(w.probe, w.conjugate, 100)
    dt = time.perf_counter() - t0
    rho = prof.at(0)
    off = float(np.abs(prof.coefficients[prof.lags != 0]).max())
    ok = abs(rho - 0.957) <= 0.005 and off < 0.01 and dt < 60
    record(acceptance_log, 4, ok, f"rho(0) {rho:.4f}, max |rho| off-lag {off:.2e}, {dt:.1f} s")


def test_c05_effective_entropy(acceptance_log):
    # calibrate at 10^6 samples, keeping the classical total at 0.53 shot-noise units
    base = SqueezeParams(GAIN, eta_probe=ETA, eta_conj=ETA, excess_classical_var=DEFAULT_EXCESS_VAR)
    t0 = time.perf_counter()
    eps, _ = calibrate_electronic_var(base, 2.64, 8)
    p = replace(base, electronic_var=eps, excess_classical_var=0.53 - eps)
    w = synthesize(p, AcquisitionConfig(10**7, rng_seed=5))
    curve = entropy_curve(w.probe, w.elec_ref, range(1, 13))
    del w
    dt = time.perf_counter() - t0
    at8 = curve[7]
    h_eff = [r.h_effective for r in curve]
    steps = np.diff(h_eff)[5:10]  # h(7)-h(6) ... h(11)-h(10)
    saturating = bool(np.all(np.diff(steps) < 0))
    ok = (abs(at8.h_classical - 2.64) <= 0.02 and abs(at8.h_effective - 5.4) <= 0.15
          and saturating and dt < 300)
    record(acceptance_log, 5, ok,
           f"eps {p.electronic_var:.6f}, H_c(8) {at8.h_classical:.4f}, h_eff(8) {at8.h_effective:.4f}, "
           f"forward differences 6..11 {np.round(steps, 4).tolist()}, {dt:.0f} s")


def test_c06_equal_frequency(acceptance_log):
    x = np.random.default_rng(6).standard_normal(10**6)
    scheme = fit_bins(x, 8)
    sym = encode_symbols(x, scheme)
    h = shannon_entropy(sym, 256)
    counts = np.bincount(sym, minlength=256)
    spread = int(counts.max() - counts.min())
    record(acceptance_log, 6, h >= 7.999 and spread <= 1,
           f"symbol entropy {h:.6f} bits, occupancy range {counts.min()}..{counts.max()}")


def test_c07_certification(acceptance_log, full_run):
    out, report, dt = full_run
    bat = report["battery"]
    outcomes = bat["outcomes"]
    worst_prop = min(o["proportion_passed"] for o in outcomes)
    worst_unif = min(o["uniformity_p"] for o in outcomes)
    ac = report["autocorrelation"]
    ok = (bat["n_sequences"] == 40 and bat["seq_len"] == 10**6 and worst_prop >= 0.95 and worst_unif >= 1e-4
          and report["conditioning"]["in_block_bits"] == 1280 and ac["max_abs_conditioned"] <= ac["bound"]
          and dt < 600)
    record(acceptance_log, 7, ok,
           f"{bat['n_sequences']}x{bat['seq_len']} bits, min proportion {worst_prop:.3f}, "
           f"min uniformity p {worst_unif:.3g}, max |autocorr| {ac['max_abs_conditioned']:.2e} "
           f"(bound {ac['bound']:.2e}), {dt:.0f} s")


def test_c08_negative_controls(acceptance_log, full_run):
    n = 10**6
    zeros = np.zeros(n, dtype=np.uint8)
    alt = np.tile(np.array([0, 1], dtype=np.uint8), n // 2)
    p_zero = frequency_test(zeros)
    p_alt = runs_test(alt)
    out, _, _ = full_run
    raw = BitStream.load(out / "bits_reconciled.bin")
    raw_outcomes = run_battery(raw, 10**6, 40)
    failed = [o.test_name for o in raw_outcomes if not o.passed]
    ctrl_fail = [not all(o.passed for o in run_battery(c, 10**5, 10)) for c in (zeros[: 10**6], alt)]
    ok = p_zero < 1e-10 and p_alt < 1e-10 and all(ctrl_fail) and bool(failed)
    record(acceptance_log, 8, ok,
           f"zeros Frequency p {p_zero:.1e}, alternating Runs p {p_alt:.1e}, "
           f"raw reconciled bits fail {failed}")


def _artifact_bytes(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != TIMING_NAME}


def test_c09_determinism(acceptance_log, tmp_path):
    runs = []
    for workers in (1, 4):
        cfg = default_config(n_samples=1_500_000, seed=9, directory=str(tmp_path / f"w{workers}"))
        cfg.battery.seq_len = 100_000
        cfg.workers = workers
        run_pipeline(cfg)
        runs.append(_artifact_bytes(tmp_path / f"w{workers}"))
    same = runs[0].keys() == runs[1].keys() and all(runs[0][k] == runs[1][k] for k in runs[0])
    differing = sorted(k for k in runs[0] if runs[0][k] != runs[1].get(k))
    record(acceptance_log, 9, same, f"{len(runs[0])} artifacts compared, differing: {differing or 'none'}")


def test_c10_throughput(acceptance_log, full_run):
    _, report, _ = full_run
    bps = report["timing"]["throughput_bps"]
    record(acceptance_log, 10, bps >= 6e6 and math.isfinite(bps), f"throughput {bps / 1e6:.2f} Mbit/s (floor 6)")
