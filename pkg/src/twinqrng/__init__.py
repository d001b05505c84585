"""Correlated quantum random numbers from simulated bright twin beams."""

from .conditioner import choose_ratio, condition
from .entropy import effective_entropy, entropy_curve, shannon_entropy
from .extractor import BinningScheme, BitStream, encode, fit_bins
from .model import (
    NoiseFigures,
    NoiseModel,
    SqueezeParams,
    covariance_matrix,
    from_db,
    ideal_diff_noise,
    individual_noise,
    lossy_diff_noise,
    mean_photons,
    to_db,
)
from .reconcile import common_bits, expected_agreement
from .stats import bit_autocorrelation, cross_correlation, run_battery
from .synth import AcquisitionConfig, TwinWaveform, ingest_waveform, synthesize, write_waveform

__version__ = "0.1.0"
