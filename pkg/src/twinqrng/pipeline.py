"""End-to-end run: synthesize or ingest, extract, reconcile, condition, certify."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import conditioner, entropy, extractor, reconcile, stats, synth
from ._kernels import K
from .config import PipelineConfig, validate
from .model import covariance_matrix, lossy_diff_noise, to_db

log = logging.getLogger(__name__)

REPORT_NAME = "run_report.json"
TIMING_NAME = "timing.json"
STALE_NAME = "STALE.json"
HIST_BINS = 201
MASK_CHUNK = 1 << 24


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def histogram_csv(w: synth.TwinWaveform, n_bins: int = HIST_BINS) -> str:
    """Common-grid histogram counts of the probe, conjugate and electronic streams."""
    span = 5.0 * max(float(np.std(w.probe)), float(np.std(w.conjugate)))
    edges = np.linspace(-span, span, n_bins + 1)
    cols = [np.histogram(getattr(w, c), bins=edges)[0] for c in ("probe", "conjugate", "elec_ref")]
    lines = ["bin_left,bin_right,probe,conjugate,elec_ref"]
    for i in range(n_bins):
        lines.append(f"{edges[i]!r},{edges[i + 1]!r},{cols[0][i]},{cols[1][i]},{cols[2][i]}")
    return "\n".join(lines) + "\n"


def _write_mask(mask: np.ndarray, path: Path) -> None:
    with open(path, "wb") as fh:
        for start in range(0, mask.size, MASK_CHUNK):
            fh.write(K.mask_indices(mask[start : start + MASK_CHUNK], start).astype("<u8", copy=False).tobytes())


def _report_config(cfg: PipelineConfig) -> dict:
    # directory and worker count must not leak into the deterministic report
    d = cfg.to_dict()
    d.pop("workers", None)
    d["output"].pop("directory", None)
    return d


class _Run:
    def __init__(self, cfg: PipelineConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.artifacts: list[str] = []
        self.stage = "setup"

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text)

    def bits(self, name: str, b: extractor.BitStream) -> None:
        ext = "txt" if self.cfg.output.bit_format == "ascii" else "bin"
        b.save(self.path(f"{name}.{ext}"), self.cfg.output.bit_format)
        self.artifacts.append(f"{name}.meta.json")


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute every stage and write artifacts plus ``run_report.json`` into the output directory.

    Returns the report merged with wall-clock timing.  Stage failures raise
    :class:`StageError` after a ``STALE.json`` marker listing the partial
    artifacts is written.
    """
    validate(cfg)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    for name in (STALE_NAME, REPORT_NAME, TIMING_NAME):
        (out / name).unlink(missing_ok=True)
    run = _Run(cfg, out)
    try:
        report, timing = _execute(run)
    except Exception as e:
        (out / STALE_NAME).write_text(json.dumps(
            {"failed_stage": run.stage, "error": str(e), "stale_artifacts": run.artifacts}, indent=2))
        raise StageError(run.stage, e) from e
    (out / REPORT_NAME).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / TIMING_NAME).write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return {**report, "timing": timing}


def _execute(run: _Run):
    cfg = run.cfg
    ex = cfg.extraction
    report: dict = {"schema_version": cfg.schema_version, "config": _report_config(cfg)}
    timing: dict = {}

    # -- source
    t0 = time.perf_counter()
    if cfg.input is not None:
        run.stage = "ingest"
        w = synth.ingest_waveform(cfg.input.path, cfg.input.format)
        report["source"] = {"kind": "external", "sha256": w.meta["sha256"]}
    else:
        run.stage = "synthesize"
        w = synth.synthesize(cfg.squeeze, cfg.acquisition, workers=cfg.workers)
        model = covariance_matrix(cfg.squeeze)
        report["source"] = {"kind": "synthetic"}
        report["model"] = {
            "covariance": model.cov.tolist(),
            "correlation": model.correlation,
            "diff_noise_db": float(to_db(lossy_diff_noise(cfg.squeeze))),
        }
        wf = cfg.output.waveform_format
        synth.write_waveform(w, run.path(f"waveform.{wf}"), wf)
        run.artifacts.append("waveform.meta.json")
    timing["source_s"] = time.perf_counter() - t0
    n = len(w)
    report["n_samples"] = n

    # -- correlation diagnostics and histogram
    run.stage = "correlate"
    prof = stats.cross_correlation(w.probe, w.conjugate, cfg.battery.corr_max_lag)
    run.write_text("cross_correlation.csv", prof.to_csv())
    run.write_text("histogram.csv", histogram_csv(w))
    off = np.abs(prof.coefficients[prof.lags != 0])
    report["correlation"] = {"rho_lag0": prof.at(0), "max_abs_offlag": float(off.max()) if off.size else 0.0}

    # -- timed bit pipeline: fit/encode, reconcile, condition, persist
    t_bits = time.perf_counter()
    run.stage = "extract"
    fit = min(ex.fit_size, n)
    schemes = {}
    streams = {}
    for ch in ("probe", "conjugate"):
        samples = getattr(w, ch)
        schemes[ch] = extractor.fit_bins(samples[:fit], ex.n_bits)
        streams[ch] = extractor.encode(samples, schemes[ch], source=ch)
        run.write_text(f"scheme_{ch}.json", schemes[ch].to_json())
        run.bits(f"bits_{ch}", streams[ch])

    run.stage = "reconcile"
    rec = reconcile.common_bits(streams["probe"], streams["conjugate"], ex.granularity)
    run.bits("bits_reconciled", rec.kept)
    if cfg.output.save_mask:
        _write_mask(rec.mask, run.path("mask.u64"))
    t_rec = time.perf_counter()

    run.stage = "condition"
    cc = cfg.conditioning
    if cc.mode == "auto":
        run.stage = "entropy"
        h_auto = entropy.effective_entropy(w.probe, w.elec_ref, ex.n_bits, fit_size=fit).h_effective
        run.stage = "condition"
        in_block, out_block = conditioner.choose_ratio(h_auto, ex.n_bits, cc.safety)
    else:
        in_block, out_block = cc.in_block_bits, cc.out_block_bits
    t_cond = time.perf_counter()
    final = conditioner.condition(rec.kept, in_block, out_block)
    run.bits("bits_conditioned", final)
    stats.export_ascii(final, run.path("conditioned_ascii.txt"))
    t_end = time.perf_counter()
    bit_seconds = (t_end - t_bits) - (t_cond - t_rec)  # excludes the optional auto-ratio entropy fit
    timing["bit_pipeline_s"] = bit_seconds
    timing["throughput_bps"] = len(final) / bit_seconds if bit_seconds > 0 else float("inf")

    kept = len(rec.kept)
    report["reconcile"] = {"agreement_rate": rec.agreement_rate, "kept_bits": kept,
                           "input_bits": len(streams["probe"]), "granularity": ex.granularity}
    report["conditioning"] = {
        "in_block_bits": in_block, "out_block_bits": out_block,
        "conditioned_bits": len(final), "discarded_bits": kept % in_block,
        "yield_bits_per_sample": len(final) / n,
    }
    assert len(final) == (kept // in_block) * out_block

    # -- entropy curves (plot data) for both beams against the electronic reference
    run.stage = "entropy"
    ent = {}
    for ch in ("probe", "conjugate"):
        curve = entropy.entropy_curve(getattr(w, ch), w.elec_ref, ex.entropy_bits, fit_size=fit,
                                      classical_edges=ex.classical_edges)
        run.write_text(f"entropy_{ch}.csv", entropy.reports_to_csv(curve))
        at_n = [r for r in curve if r.n_bits == ex.n_bits]
        ent[ch] = {"curve": [entropy.report_dict(r) for r in curve],
                   "h_effective": at_n[0].h_effective if at_n else None}
    report["entropy"] = ent

    # -- certification
    run.stage = "test"
    bc = cfg.battery
    avail = len(final) // bc.seq_len
    n_seq = min(avail, bc.max_sequences) if bc.n_sequences == "auto" else bc.n_sequences
    if n_seq < 1:
        raise stats.StatsError(f"{len(final)} conditioned bits cannot supply one {bc.seq_len}-bit sequence")
    outcomes = stats.run_battery(final, bc.seq_len, n_seq, workers=cfg.workers)
    run.write_text("battery.json", stats.outcomes_to_json(outcomes))
    run.write_text("battery.csv", stats.outcomes_to_csv(outcomes))
    ac_raw = stats.bit_autocorrelation(rec.kept, bc.autocorr_max_lag)
    ac_final = stats.bit_autocorrelation(final, bc.autocorr_max_lag)
    lines = ["lag,reconciled,conditioned"] + [
        f"{lag},{r!r},{c!r}" for lag, r, c in
        zip(ac_raw.lags.tolist(), ac_raw.coefficients.tolist(), ac_final.coefficients.tolist())]
    run.write_text("autocorrelation.csv", "\n".join(lines) + "\n")
    report["battery"] = {
        "seq_len": bc.seq_len, "n_sequences": n_seq,
        "min_proportion": stats.proportion_threshold(n_seq),
        "all_passed": all(o.passed for o in outcomes),
        "outcomes": [o.to_dict() for o in outcomes],
    }
    report["autocorrelation"] = {
        "bound": 5.0 / np.sqrt(len(final)),
        "max_abs_conditioned": float(np.abs(ac_final.coefficients).max()),
        "max_abs_reconciled": float(np.abs(ac_raw.coefficients).max()),
    }
    report["artifacts"] = {name: _sha256(run.out / name) for name in sorted(set(run.artifacts))}
    timing["total_s"] = time.perf_counter() - t0
    return report, timing
