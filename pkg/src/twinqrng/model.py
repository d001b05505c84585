"""Closed-form intensity statistics of bright seeded two-mode squeezed light.

All noise figures are in shot-noise units: a photon-number variance divided
by the variance of a coherent state carrying the same mean photon number.
The bright-seed limit is assumed throughout, so the vacuum-seeded
``sinh^2 s cosh^2 s`` contribution to the variances is dropped.

The squeezing phase and the displacement of the unseeded mode do not enter
intensity statistics when that displacement is zero; they are not modelled.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


class ParameterError(ValueError):
    """Physically invalid squeezing parameters."""


def to_db(x):
    """Power ratio to decibels (10 log10)."""
    return 10.0 * np.log10(x)


def from_db(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SqueezeParams:
    """Physics configuration of the twin-beam source and detection chain.

    ``electronic_var`` is detector noise in shot-noise units, present in the
    signal channels and in the electronic reference stream.
    ``excess_classical_var`` is uncorrelated classical noise added to each
    beam but absent from the references.
    """

    gain: float
    seed_power: float = 1.0e6
    eta_probe: float = 1.0
    eta_conj: float = 1.0
    electronic_var: float = 0.0
    excess_classical_var: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.gain) or self.gain < 1.0:
            raise ParameterError(f"gain must be >= 1, got {self.gain}")
        if not self.seed_power > 0:
            raise ParameterError(f"seed_power must be > 0, got {self.seed_power}")
        for name in ("eta_probe", "eta_conj"):
            eta = getattr(self, name)
            if not 0.0 <= eta <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {eta}")
        for name in ("electronic_var", "excess_classical_var"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ParameterError(f"{name} must be >= 0, got {v}")

    @property
    def squeeze_degree(self) -> float:
        """Squeeze degree ``s`` with ``cosh(s)**2 == gain``."""
        return math.acosh(math.sqrt(self.gain))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SqueezeParams":
        return cls(**d)


@dataclass(frozen=True)
class NoiseFigures:
    probe_rel: float
    conj_rel: float
    diff_rel: float | None = None

    @property
    def probe_db(self) -> float:
        return float(to_db(self.probe_rel))

    @property
    def conj_db(self) -> float:
        return float(to_db(self.conj_rel))

    @property
    def diff_db(self) -> float | None:
        return None if self.diff_rel is None else float(to_db(self.diff_rel))


@dataclass(frozen=True)
class NoiseModel:
    """Normalized probe/conjugate covariance plus electronic variances.

    ``cov`` is in per-beam shot-noise units and already contains the
    electronic and excess classical contributions on its diagonal.
    """

    cov: np.ndarray
    electronic_var: tuple[float, float]

    @property
    def correlation(self) -> float:
        c = self.cov
        return float(c[0, 1] / math.sqrt(c[0, 0] * c[1, 1]))


def mean_photons(p: SqueezeParams) -> tuple[float, float]:
    """Detected mean photon numbers ``(n_probe, n_conj)`` after losses."""
    g = p.gain
    return p.eta_probe * p.seed_power * g, p.eta_conj * p.seed_power * (g - 1.0)


def individual_noise(p: SqueezeParams) -> NoiseFigures:
    classical = p.excess_classical_var + p.electronic_var
    ra = 1.0 + 2.0 * p.eta_probe * (p.gain - 1.0) + classical
    rb = 1.0 + 2.0 * p.eta_conj * (p.gain - 1.0) + classical
    return NoiseFigures(ra, rb)


def ideal_diff_noise(gain: float) -> float:
    """Lossless intensity-difference noise ``1 / (2G - 1)``."""
    if gain < 1.0:
        raise ParameterError(f"gain must be >= 1, got {gain}")
    return 1.0 / (2.0 * gain - 1.0)


def lossy_diff_noise(p: SqueezeParams) -> float:
    """Intensity-difference noise with beam-splitter losses on both beams.

    Classical noise knobs are ignored; this is the pure optical figure.
    """
    g, ea, eb = p.gain, p.eta_probe, p.eta_conj
    denom = g * ea + (g - 1.0) * eb
    if ea == 0.0 and eb == 0.0:
        raise ParameterError("eta_probe and eta_conj are both zero: no light detected")
    if denom == 0.0:
        # g == 1 with eta_probe == 0: only the (empty) conjugate is detected
        return 1.0
    return 1.0 + 2.0 * (g - 1.0) * (g * (ea - eb) ** 2 - eb**2) / denom


def covariance_matrix(p: SqueezeParams) -> NoiseModel:
    g, ea, eb = p.gain, p.eta_probe, p.eta_conj
    classical = p.excess_classical_var + p.electronic_var
    saa = 1.0 + 2.0 * ea * (g - 1.0) + classical
    sbb = 1.0 + 2.0 * eb * (g - 1.0) + classical
    sab = 2.0 * math.sqrt(ea * eb * g * (g - 1.0))
    cov = np.array([[saa, sab], [sab, sbb]])
    # Determinant is (1 + 2ea(G-1))(1 + 2eb(G-1)) - 4 ea eb G(G-1) >= 0
    # analytically; a negative value means the formulas above are wrong.
    det = saa * sbb - sab * sab
    assert det >= -1e-9 * saa * sbb, f"non-PSD covariance {cov}"
    cov.setflags(write=False)
    return NoiseModel(cov=cov, electronic_var=(p.electronic_var, p.electronic_var))


def diff_noise_from_covariance(p: SqueezeParams, model: NoiseModel | None = None) -> float:
    """Difference noise rebuilt from the per-beam covariance.

    Converts the shot-noise-unit covariance back to photon units using the
    detected means, then normalizes the difference variance by the total
    mean. Matches :func:`lossy_diff_noise` when classical noise is zero.
    """
    model = model or covariance_matrix(p)
    na, nb = mean_photons(p)
    c = model.cov
    var = na * c[0, 0] + nb * c[1, 1] - 2.0 * math.sqrt(na * nb) * c[0, 1]
    return var / (na + nb)
