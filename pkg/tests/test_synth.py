import math
import struct

import numpy as np
import pytest
from scipy import stats as sps

from twinqrng.model import SqueezeParams, covariance_matrix
from twinqrng.stats import cross_correlation
from twinqrng.synth import (
    CHUNK,
    AcquisitionConfig,
    TwinWaveform,
    WaveformFormatError,
    WaveformStructureError,
    apply_if_filter,
    bivariate_gaussian_sampler,
    filter_pole,
    ingest_waveform,
    synthesize,
    write_waveform,
)

N = 10**6


@pytest.fixture(scope="module")
def reference_wave():
    p = SqueezeParams(11.5, eta_probe=0.78, eta_conj=0.78, electronic_var=0.2)
    return p, synthesize(p, AcquisitionConfig(N, rng_seed=11))


def test_shapes_and_zero_mean(reference_wave):
    _, w = reference_wave
    for ch in w.channels().values():
        assert ch.shape == (N,)
        assert abs(ch.mean()) < 1e-12 * np.abs(ch).max()
    assert w.meta["source"] == "synthetic"


def test_deterministic_across_runs_and_workers():
    p = SqueezeParams(11.5, eta_probe=0.78, eta_conj=0.78, electronic_var=0.53)
    cfg = AcquisitionConfig(3 * CHUNK + 17, rng_seed=2**63 + 5)
    a = synthesize(p, cfg)
    b = synthesize(p, cfg, workers=4)
    c = synthesize(p, cfg)
    for name in ("probe", "conjugate", "shot_ref", "elec_ref"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes() == getattr(c, name).tobytes()
    d = synthesize(p, AcquisitionConfig(3 * CHUNK + 17, rng_seed=6))
    assert not np.array_equal(a.probe, d.probe)


def test_uncorrelated_without_gain():
    w = synthesize(SqueezeParams(1.0), AcquisitionConfig(N, rng_seed=3))
    assert abs(np.corrcoef(w.probe, w.conjugate)[0, 1]) < 0.005
    assert not w.elec_ref.any()


def test_variances_match_model():
    p = SqueezeParams(11.5, eta_probe=0.78, eta_conj=0.78)
    w = synthesize(p, AcquisitionConfig(N, rng_seed=4))
    assert w.probe.var() == pytest.approx(17.38, rel=0.01)
    assert w.conjugate.var() == pytest.approx(17.38, rel=0.01)
    assert w.shot_ref.var() == pytest.approx(1.0, rel=0.01)


def test_moments_within_five_standard_errors(reference_wave):
    p, w = reference_wave
    cov = covariance_matrix(p).cov
    saa, sab, sbb = cov[0, 0], cov[0, 1], cov[1, 1]
    assert abs(w.probe.var() - saa) < 5 * math.sqrt(2 * saa**2 / N)
    assert abs(w.conjugate.var() - sbb) < 5 * math.sqrt(2 * sbb**2 / N)
    assert abs(np.mean(w.probe * w.conjugate) - sab) < 5 * math.sqrt((saa * sbb + sab**2) / N)
    assert abs(w.elec_ref.var() - 0.2) < 5 * math.sqrt(2 * 0.2**2 / N)


def test_channels_are_gaussian(reference_wave):
    _, w = reference_wave
    for ch in w.channels().values():
        assert sps.jarque_bera(ch).pvalue > 1e-3


def test_channels_are_white(reference_wave):
    _, w = reference_wave
    bound = 5 / math.sqrt(N)
    for ch in w.channels().values():
        prof = cross_correlation(ch, ch, 100)
        assert prof.at(0) == pytest.approx(1.0)
        assert np.abs(prof.coefficients[prof.lags >= 1]).max() < bound


def test_sampler_identity_and_degenerate():
    x, y = bivariate_gaussian_sampler(np.eye(2), seed=1, n_samples=200_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.012
    assert x.var() == pytest.approx(1, rel=0.02)
    x, y = bivariate_gaussian_sampler([[1, 1], [1, 1]], seed=1, n_samples=10_000)
    assert np.array_equal(x, y)


def test_sampler_law_of_large_numbers():
    cov = np.array([[17.38, 17.14], [17.14, 17.38]])
    x, y = bivariate_gaussian_sampler(cov, seed=9, n_samples=N)
    est = np.cov(np.vstack([x, y]))
    np.testing.assert_allclose(est, cov, rtol=0.01)


def test_sampler_chunks_are_prefix_stable():
    cov = [[2.0, 0.5], [0.5, 1.0]]
    x1, _ = bivariate_gaussian_sampler(cov, seed=5, n_samples=CHUNK + 10)
    x2, _ = bivariate_gaussian_sampler(cov, seed=5, n_samples=3 * CHUNK, workers=3)
    assert np.array_equal(x1, x2[: CHUNK + 10])


@pytest.mark.parametrize("cov", [[[0.0, 0.0], [0.0, 1.0]], [[1.0, 2.0], [2.0, 1.0]], [[-1, 0], [0, 1]]])
def test_sampler_rejects_bad_covariance(cov):
    with pytest.raises(ValueError):
        bivariate_gaussian_sampler(cov, seed=0, n_samples=10)


def test_sampler_clamps_tiny_negative_discriminant():
    x, y = bivariate_gaussian_sampler([[1.0, 1.0], [1.0, 1.0 - 1e-15]], seed=0, n_samples=10)
    assert np.allclose(x, y)


def test_zero_samples_rejected():
    with pytest.raises(ValueError):
        AcquisitionConfig(0)


# ---------------------------------------------------------------- IF filter

FILTER_CFG = AcquisitionConfig(10, sample_rate=10e6, if_bandwidth=1e6, filter_enabled=True)


def test_filter_zero_in_zero_out():
    assert not apply_if_filter(np.zeros(100), FILTER_CFG).any()


def test_filter_impulse_decays_geometrically(kernels):
    import twinqrng.synth as synth_mod

    pole = math.exp(-2 * math.pi * 1e6 / 10e6)
    assert filter_pole(FILTER_CFG) == pytest.approx(pole)
    x = np.zeros(50)
    x[0] = 1.0
    y = kernels.single_pole(x, pole, math.sqrt(1 - pole**2))
    np.testing.assert_allclose(y[1:] / y[:-1], pole, rtol=1e-12)
    np.testing.assert_allclose(y, synth_mod.apply_if_filter(x, FILTER_CFG), rtol=1e-12)


def test_filter_white_noise_lag1_equals_pole():
    x = np.random.default_rng(0).standard_normal(N)
    y = apply_if_filter(x, FILTER_CFG)
    assert cross_correlation(y, y, 1).at(1) == pytest.approx(filter_pole(FILTER_CFG), abs=0.01)
    assert y.var() == pytest.approx(1.0, rel=0.02)


def test_filter_rejects_bandwidth_above_nyquist():
    with pytest.raises(ValueError):
        apply_if_filter(np.zeros(4), AcquisitionConfig(4, sample_rate=1.25e6, if_bandwidth=1e6))


def test_filtered_synthesis_is_correlated_in_time():
    p = SqueezeParams(11.5, eta_probe=0.78, eta_conj=0.78)
    cfg = AcquisitionConfig(200_000, sample_rate=10e6, if_bandwidth=1e6, filter_enabled=True, rng_seed=1)
    w = synthesize(p, cfg)
    assert cross_correlation(w.probe, w.probe, 1).at(1) == pytest.approx(filter_pole(cfg), abs=0.01)


# ---------------------------------------------------------------- file I/O


def test_ingest_csv_three_rows(tmp_path):
    f = tmp_path / "w.csv"
    f.write_text("probe,conjugate,shot_ref,elec_ref\n1,2,3,4\n2,3,4,5\n3,4,5,6\n")
    w = ingest_waveform(f)
    assert len(w) == 3
    np.testing.assert_allclose(w.probe, [-1, 0, 1])
    assert w.meta["source"] == "external"


def test_ingest_binary_format_arithmetic(tmp_path):
    f = tmp_path / "w.bin"
    vals = np.arange(32, dtype="<f8")
    f.write_bytes(struct.pack("<4sBQ", b"TWQR", 1, 8) + vals.tobytes())
    w = ingest_waveform(f)
    assert len(w) == 8
    np.testing.assert_allclose(w.probe, vals[0::4] - vals[0::4].mean())
    np.testing.assert_allclose(w.elec_ref, vals[3::4] - vals[3::4].mean())


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_round_trip_is_lossless(tmp_path, fmt):
    p = SqueezeParams(11.5, eta_probe=0.78, eta_conj=0.78, electronic_var=0.53)
    w = synthesize(p, AcquisitionConfig(5000, rng_seed=21))
    path = write_waveform(w, tmp_path / f"wave.{fmt}", fmt)
    assert (tmp_path / "wave.meta.json").exists()
    back = ingest_waveform(path)
    for name in ("probe", "conjugate", "shot_ref", "elec_ref"):
        assert getattr(back, name).tobytes() == getattr(w, name).tobytes()
    assert back.meta["recorded_meta"]["params"]["gain"] == 11.5


def test_bad_csv_value_names_line(tmp_path):
    f = tmp_path / "w.csv"
    f.write_text("probe,conjugate,shot_ref,elec_ref\n1,2,3,4\n1,x,3,4\n")
    with pytest.raises(WaveformFormatError, match="line 3"):
        ingest_waveform(f)


def test_bad_csv_header(tmp_path):
    f = tmp_path / "w.csv"
    f.write_text("a,b,c,d\n1,2,3,4\n")
    with pytest.raises(WaveformFormatError, match="line 1"):
        ingest_waveform(f)


def test_csv_column_mismatch_is_structural(tmp_path):
    f = tmp_path / "w.csv"
    f.write_text("probe,conjugate,shot_ref,elec_ref\n1,2,3,4\n1,2,3\n")
    with pytest.raises(WaveformStructureError, match="line 3"):
        ingest_waveform(f)


def test_bad_magic_names_byte(tmp_path):
    f = tmp_path / "w.bin"
    f.write_bytes(b"XXXX" + bytes(9) + bytes(32))
    with pytest.raises(WaveformFormatError, match="byte 0"):
        ingest_waveform(f)


def test_truncated_binary_is_structural(tmp_path):
    f = tmp_path / "w.bin"
    f.write_bytes(struct.pack("<4sBQ", b"TWQR", 1, 2) + bytes(40))
    with pytest.raises(WaveformStructureError, match="byte"):
        ingest_waveform(f)
    f.write_bytes(struct.pack("<4sBQ", b"TWQR", 1, 3) + bytes(64))
    with pytest.raises(WaveformStructureError, match="declares 3"):
        ingest_waveform(f)


def test_unequal_channels_rejected():
    with pytest.raises(WaveformStructureError):
        TwinWaveform(np.zeros(3), np.zeros(3), np.zeros(2), np.zeros(3))
